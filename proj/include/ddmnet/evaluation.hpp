#pragma once

// Whole-video scoring, peak picking and the Rel.Dis precision/recall/F1
// protocol.

#include <span>
#include <string>
#include <vector>

#include "ddmnet/model.hpp"
#include "ddmnet/synth.hpp"

namespace ddmnet::eval {

// Fused boundary probability at every evaluated position (0, stride, ...).
// Backbone features are computed once per needed frame and shared by all
// overlapping clips; the result equals scoring each clip on its own.
std::vector<double> score_video(const model::DdmNet& model, const synth::VideoRecord& video, std::size_t stride);

struct PostprocessConfig {
  double threshold = 0.5;  // theta
  std::size_t window = 5;  // half-range, in evaluated positions
  void validate() const;
};

// Index i is kept iff scores[i] >= theta, scores[i] > every score in
// [i - window, i) and scores[i] >= every score in (i, i + window]; a plateau
// therefore resolves to its left-most index. Linear time.
std::vector<std::size_t> post_process(std::span<const double> scores, const PostprocessConfig& config);

enum class MatchMode { Optimal, Greedy };
enum class Aggregation { Global, PerVideo };

std::string to_string(MatchMode mode);
MatchMode match_mode_from_string(const std::string& name);
std::string to_string(Aggregation aggregation);
Aggregation aggregation_from_string(const std::string& name);

// True positives: size of a one-to-one matching where p and g may pair iff
// |p - g| / E <= rel_threshold. Optimal = maximum matching; Greedy pairs each
// prediction (ascending) with its nearest free ground truth.
std::size_t match_predictions(std::span<const std::size_t> predictions, std::span<const std::size_t> truths,
                              std::size_t num_frames, double rel_threshold, MatchMode mode = MatchMode::Optimal);

// 0.05, 0.10, ..., 0.50
std::vector<double> default_thresholds();

struct VideoPrediction {
  std::string video;
  std::vector<std::size_t> positions;  // boundary frame indices
  std::vector<double> scores;          // probability at each position
};

struct ThresholdRow {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t predicted = 0;
  std::size_t ground_truth = 0;
};

struct EvalReport {
  std::vector<ThresholdRow> rows;
  double avg_precision = 0.0;
  double avg_recall = 0.0;
  double avg_f1 = 0.0;
};

double f1_score(double precision, double recall);

// Unknown video ids raise DataError.
EvalReport compute_report(const std::vector<VideoPrediction>& predictions, const synth::Dataset& truth,
                          const std::vector<double>& thresholds = default_thresholds(),
                          MatchMode mode = MatchMode::Optimal, Aggregation aggregation = Aggregation::Global);

std::string format_report_table(const EvalReport& report);
std::string format_report_csv(const EvalReport& report);

// Predictions file: one JSON object per line {"video", "positions", "scores"}.
std::string encode_predictions(const std::vector<VideoPrediction>& predictions);
std::vector<VideoPrediction> decode_predictions(const std::string& text, const std::string& source);

// Static score curve with threshold line, detected boundaries (red) and
// ground truth (green).
std::string score_plot_svg(const std::string& title, std::span<const double> scores, std::size_t stride,
                           std::size_t num_frames, double threshold, std::span<const std::size_t> predicted,
                           std::span<const std::size_t> truth);

}  // namespace ddmnet::eval
