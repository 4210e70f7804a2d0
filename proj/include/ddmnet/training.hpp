#pragma once

// Label assignment, balanced sampling, Adam and the epoch loop.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ddmnet/checkpoint.hpp"
#include "ddmnet/model.hpp"
#include "ddmnet/random.hpp"
#include "ddmnet/synth.hpp"

namespace ddmnet::train {

// Evaluated positions are 0, stride, 2*stride, ... < E.
std::size_t num_positions(std::size_t num_frames, std::size_t stride);

// Position p is positive iff a boundary b satisfies p - stride/2 < b <= p + stride/2.
std::vector<int> assign_labels(std::span<const std::size_t> boundaries, std::size_t num_frames, std::size_t stride);

// Every positive index, plus one uniform index from each chunk of at most
// `ratio` consecutive negatives (runs are cut into chunks from their start).
// Output is sorted.
std::vector<std::size_t> balanced_sample(std::span<const int> labels, std::size_t ratio, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(AdamConfig config, const std::vector<NamedTensor>& params);

  // grads[k] belongs to params[k]. Throws NumericError naming the first
  // parameter with a non-finite gradient; nothing is updated in that case.
  void step(const std::vector<NamedTensor>& params, const std::vector<std::vector<double>>& grads);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  // Records "adam.m/<name>", "adam.v/<name>" and "adam.step".
  void export_state(const std::vector<NamedTensor>& params, std::vector<NamedTensor>& out) const;
  void import_state(const std::vector<NamedTensor>& params, const std::vector<NamedTensor>& records);

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
  std::size_t eval_stride = 3;
  std::size_t sampler_ratio = 6;
  std::size_t workers = 1;
  std::string preset = "desk";

  void validate() const;
  static TrainConfig desk();
  static TrainConfig paper();
};

struct LossRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
};

// "step,epoch,loss" header plus one row per record, 17 significant digits.
std::string loss_csv(const std::vector<LossRecord>& records);

struct Sample {
  std::size_t video = 0;     // index into the training list
  std::size_t position = 0;  // evaluated-position index
  int label = 0;
};

// The shuffled sample list of one epoch; depends only on (seed, epoch, data).
std::vector<Sample> epoch_samples(const std::vector<const synth::VideoRecord*>& videos, const TrainConfig& config,
                                  std::size_t epoch);

class Trainer {
 public:
  Trainer(model::DdmNet& model, TrainConfig config);

  // Runs the remaining epochs up to config.epochs; `on_epoch` sees the
  // epoch index and that epoch's loss records once its last step is done.
  void run(const std::vector<const synth::VideoRecord*>& videos,
           const std::function<void(std::size_t, const std::vector<LossRecord>&)>& on_epoch = {});
  // One optimizer step on the given samples; returns the batch mean loss.
  double step(const std::vector<const synth::VideoRecord*>& videos, std::span<const Sample> batch);

  std::size_t epochs_done() const { return epochs_done_; }
  const Adam& optimizer() const { return adam_; }

  // Parameters, optimizer state and "train.epoch".
  std::vector<NamedTensor> checkpoint_records() const;
  void restore(const std::vector<NamedTensor>& records);

 private:
  model::DdmNet& model_;
  TrainConfig config_;
  Adam adam_;
  std::vector<model::DdmNet> replicas_;
  std::size_t epochs_done_ = 0;
};

}  // namespace ddmnet::train
