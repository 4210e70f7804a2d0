#include "ddmnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ddmnet/errors.hpp"
#include "ddmnet/training.hpp"

namespace ddmnet::eval {

std::vector<double> score_video(const model::DdmNet& model, const synth::VideoRecord& video, std::size_t stride) {
  if (video.num_frames == 0) throw DataError("video '" + video.id + "' has no frames");
  const std::size_t n = train::num_positions(video.num_frames, stride);
  const bank::ClipSpec& clip = model.config().clip;
  std::vector<std::vector<std::size_t>> clips(n);
  std::set<std::size_t> needed;
  for (std::size_t i = 0; i < n; ++i) {
    clips[i] = bank::clip_indices(video.num_frames, i * stride, clip);
    needed.insert(clips[i].begin(), clips[i].end());
  }

  NoGradGuard no_grad;
  // cache[level]: [C_level, E], filled only at needed frames.
  const auto& widths = model.config().bank.widths;
  std::vector<std::vector<double>> cache(widths.size());
  for (std::size_t l = 0; l < widths.size(); ++l) cache[l].assign(widths[l] * video.num_frames, 0.0);
  const std::vector<std::size_t> frames(needed.begin(), needed.end());
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < frames.size(); start += kChunk) {
    std::vector<std::size_t> chunk(frames.begin() + start, frames.begin() + std::min(frames.size(), start + kChunk));
    auto features = model.spatial_features(bank::frames_tensor(video, chunk));
    for (std::size_t l = 0; l < widths.size(); ++l) {
      auto v = features[l].values();
      for (std::size_t c = 0; c < widths[l]; ++c) {
        for (std::size_t k = 0; k < chunk.size(); ++k) cache[l][c * video.num_frames + chunk[k]] = v[c * chunk.size() + k];
      }
    }
  }

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = clips[i].size();
    std::vector<Tensor> spatial;
    for (std::size_t l = 0; l < widths.size(); ++l) {
      std::vector<double> seq(widths[l] * t);
      for (std::size_t c = 0; c < widths[l]; ++c) {
        for (std::size_t k = 0; k < t; ++k) seq[c * t + k] = cache[l][c * video.num_frames + clips[i][k]];
      }
      spatial.push_back(Tensor::from({widths[l], t}, std::move(seq)));
    }
    scores[i] = model.forward_spatial(spatial).scores.p.item();
  }
  return scores;
}

void PostprocessConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold theta must lie in (0, 1)");
  if (window < 1) throw ConfigError("post-processing window must be >= 1");
}

std::vector<std::size_t> post_process(std::span<const double> scores, const PostprocessConfig& config) {
  const std::size_t n = scores.size();
  const std::size_t w = config.window;
  // left_max[i] = max scores[i-w, i); right_max[i] = max scores(i, i+w].
  const double none = -std::numeric_limits<double>::infinity();
  std::vector<double> left_max(n, none), right_max(n, none);
  std::deque<std::size_t> dq;
  for (std::size_t i = 0; i < n; ++i) {
    while (!dq.empty() && dq.front() + w < i) dq.pop_front();
    if (!dq.empty()) left_max[i] = scores[dq.front()];
    while (!dq.empty() && scores[dq.back()] <= scores[i]) dq.pop_back();
    dq.push_back(i);
  }
  dq.clear();
  for (std::size_t r = n; r-- > 0;) {
    while (!dq.empty() && dq.front() > r + w) dq.pop_front();
    if (!dq.empty()) right_max[r] = scores[dq.front()];
    while (!dq.empty() && scores[dq.back()] <= scores[r]) dq.pop_back();
    dq.push_back(r);
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (scores[i] >= config.threshold && scores[i] > left_max[i] && scores[i] >= right_max[i]) out.push_back(i);
  }
  return out;
}

std::string to_string(MatchMode mode) { return mode == MatchMode::Optimal ? "optimal" : "greedy"; }

MatchMode match_mode_from_string(const std::string& name) {
  if (name == "optimal") return MatchMode::Optimal;
  if (name == "greedy") return MatchMode::Greedy;
  throw ConfigError("unknown matching mode '" + name + "' (optimal, greedy)");
}

std::string to_string(Aggregation aggregation) { return aggregation == Aggregation::Global ? "global" : "per-video"; }

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "global") return Aggregation::Global;
  if (name == "per-video") return Aggregation::PerVideo;
  throw ConfigError("unknown aggregation '" + name + "' (global, per-video)");
}

namespace {

bool within(std::size_t p, std::size_t g, std::size_t num_frames, double rel_threshold) {
  const std::size_t d = p > g ? p - g : g - p;
  return static_cast<double>(d) / static_cast<double>(num_frames) <= rel_threshold;
}

}  // namespace

std::size_t match_predictions(std::span<const std::size_t> predictions, std::span<const std::size_t> truths,
                              std::size_t num_frames, double rel_threshold, MatchMode mode) {
  if (num_frames == 0) throw ContractError("matching needs E >= 1");
  const std::size_t np = predictions.size(), ng = truths.size();
  if (mode == MatchMode::Greedy) {
    std::vector<std::size_t> order(np);
    for (std::size_t i = 0; i < np; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return predictions[a] < predictions[b]; });
    std::vector<bool> used(ng, false);
    std::size_t tp = 0;
    for (std::size_t i : order) {
      std::size_t best = ng, best_d = 0;
      for (std::size_t j = 0; j < ng; ++j) {
        if (used[j] || !within(predictions[i], truths[j], num_frames, rel_threshold)) continue;
        const std::size_t d = predictions[i] > truths[j] ? predictions[i] - truths[j] : truths[j] - predictions[i];
        if (best == ng || d < best_d) {
          best = j;
          best_d = d;
        }
      }
      if (best != ng) {
        used[best] = true;
        ++tp;
      }
    }
    return tp;
  }
  // Kuhn's augmenting paths; the graphs are small.
  std::vector<std::vector<std::size_t>> adj(np);
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      if (within(predictions[i], truths[j], num_frames, rel_threshold)) adj[i].push_back(j);
    }
  }
  std::vector<std::size_t> owner(ng, np);
  std::vector<bool> seen;
  std::function<bool(std::size_t)> augment = [&](std::size_t i) {
    for (std::size_t j : adj[i]) {
      if (seen[j]) continue;
      seen[j] = true;
      if (owner[j] == np || augment(owner[j])) {
        owner[j] = i;
        return true;
      }
    }
    return false;
  };
  std::size_t tp = 0;
  for (std::size_t i = 0; i < np; ++i) {
    seen.assign(ng, false);
    if (augment(i)) ++tp;
  }
  return tp;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int k = 1; k <= 10; ++k) t.push_back(k / 20.0);
  return t;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

EvalReport compute_report(const std::vector<VideoPrediction>& predictions, const synth::Dataset& truth,
                          const std::vector<double>& thresholds, MatchMode mode, Aggregation aggregation) {
  std::vector<const synth::VideoRecord*> gts;
  for (const auto& p : predictions) {
    const synth::VideoRecord* v = truth.find(p.video);
    if (v == nullptr) throw DataError("predictions reference unknown video '" + p.video + "'");
    gts.push_back(v);
  }
  EvalReport report;
  for (double thr : thresholds) {
    ThresholdRow row;
    row.threshold = thr;
    double sp = 0.0, sr = 0.0, sf = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const std::size_t tp = match_predictions(predictions[i].positions, gts[i]->boundaries, gts[i]->num_frames, thr, mode);
      row.tp += tp;
      row.predicted += predictions[i].positions.size();
      row.ground_truth += gts[i]->boundaries.size();
      if (aggregation == Aggregation::PerVideo) {
        const double p = predictions[i].positions.empty() ? 0.0 : double(tp) / double(predictions[i].positions.size());
        const double r = gts[i]->boundaries.empty() ? 0.0 : double(tp) / double(gts[i]->boundaries.size());
        sp += p;
        sr += r;
        sf += f1_score(p, r);
      }
    }
    if (aggregation == Aggregation::Global) {
      row.precision = row.predicted == 0 ? 0.0 : double(row.tp) / double(row.predicted);
      row.recall = row.ground_truth == 0 ? 0.0 : double(row.tp) / double(row.ground_truth);
      row.f1 = f1_score(row.precision, row.recall);
    } else if (!predictions.empty()) {
      const double count = static_cast<double>(predictions.size());
      row.precision = sp / count;
      row.recall = sr / count;
      row.f1 = sf / count;
    }
    report.rows.push_back(row);
  }
  if (!report.rows.empty()) {
    for (const auto& r : report.rows) {
      report.avg_precision += r.precision;
      report.avg_recall += r.recall;
      report.avg_f1 += r.f1;
    }
    const double count = static_cast<double>(report.rows.size());
    report.avg_precision /= count;
    report.avg_recall /= count;
    report.avg_f1 /= count;
  }
  return report;
}

std::string format_report_table(const EvalReport& report) {
  std::string out = "threshold  precision  recall  f1\n";
  char buf[128];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-9.2f  %-9.4f  %-6.4f  %.4f\n", r.threshold, r.precision, r.recall, r.f1);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-9s  %-9.4f  %-6.4f  %.4f\n", "avg", report.avg_precision, report.avg_recall,
                report.avg_f1);
  out += buf;
  return out;
}

std::string format_report_csv(const EvalReport& report) {
  std::string out = "threshold,precision,recall,f1\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", r.threshold, r.precision, r.recall, r.f1);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "avg,%.17g,%.17g,%.17g\n", report.avg_precision, report.avg_recall, report.avg_f1);
  out += buf;
  return out;
}

std::string encode_predictions(const std::vector<VideoPrediction>& predictions) {
  std::string out;
  for (const auto& p : predictions) {
    nlohmann::ordered_json j;
    j["video"] = p.video;
    j["positions"] = p.positions;
    j["scores"] = p.scores;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<VideoPrediction> decode_predictions(const std::string& text, const std::string& source) {
  std::vector<VideoPrediction> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    try {
      auto j = nlohmann::json::parse(line);
      VideoPrediction p;
      p.video = j.at("video").get<std::string>();
      p.positions = j.at("positions").get<std::vector<std::size_t>>();
      p.scores = j.at("scores").get<std::vector<double>>();
      if (p.scores.size() != p.positions.size()) throw DataError(where + ": positions and scores differ in length");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed prediction record (" + e.what() + ")");
    }
  }
  return out;
}

std::string score_plot_svg(const std::string& title, std::span<const double> scores, std::size_t stride,
                           std::size_t num_frames, double threshold, std::span<const std::size_t> predicted,
                           std::span<const std::size_t> truth) {
  constexpr double kW = 640, kH = 200, kPad = 30;
  const double span = std::max<double>(1.0, static_cast<double>(num_frames) - 1.0);
  auto fx = [&](double frame) { return kPad + frame / span * (kW - 2 * kPad); };
  auto fy = [&](double p) { return kH - kPad - p * (kH - 2 * kPad); };
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kPad << "\" y=\"18\" font-family=\"monospace\" font-size=\"12\">" << title << "</text>\n";
  s << "<line x1=\"" << fx(0) << "\" y1=\"" << fy(0) << "\" x2=\"" << fx(span) << "\" y2=\"" << fy(0)
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << fx(0) << "\" y1=\"" << fy(threshold) << "\" x2=\"" << fx(span) << "\" y2=\"" << fy(threshold)
    << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t g : truth) {
    s << "<line x1=\"" << fx(double(g)) << "\" y1=\"" << fy(0) << "\" x2=\"" << fx(double(g)) << "\" y2=\"" << fy(1)
      << "\" stroke=\"green\" stroke-width=\"2\" opacity=\"0.5\"/>\n";
  }
  for (std::size_t p : predicted) {
    s << "<line x1=\"" << fx(double(p)) << "\" y1=\"" << fy(0) << "\" x2=\"" << fx(double(p)) << "\" y2=\"" << fy(1)
      << "\" stroke=\"red\" stroke-dasharray=\"3 2\"/>\n";
  }
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < scores.size(); ++i) s << fx(double(i * stride)) << "," << fy(scores[i]) << " ";
  s << "\"/>\n</svg>\n";
  return s.str();
}

}  // namespace ddmnet::eval
