#pragma once

// Small model/data configurations shared by the model-level tests.

#include <string>
#include <vector>

#include "ddmnet/model.hpp"
#include "ddmnet/synth.hpp"

namespace fixtures {

// T = 5, C = 16, 8x8 frames.
inline ddmnet::model::ModelConfig toy_model_config() {
  ddmnet::model::ModelConfig c;
  c.clip = {2, 2};
  c.bank.widths = {4, 8, 16};
  c.bank.dilations = {1, 2};
  c.heads = 2;
  c.ffn_hidden = 32;
  c.intra_layers = 1;
  c.cross_layers = 1;
  c.queries = 2;
  return c;
}

inline ddmnet::synth::Dataset toy_dataset(std::size_t train, std::size_t val = 2, std::uint64_t seed = 1) {
  ddmnet::synth::GenSpec spec;
  spec.train_videos = train;
  spec.val_videos = val;
  spec.min_frames = 40;
  spec.max_frames = 50;
  spec.min_events = 2;
  spec.max_events = 3;
  spec.min_event_length = 12;
  spec.height = 8;
  spec.width = 8;
  spec.seed = seed;
  return ddmnet::synth::generate_dataset(spec);
}

// Concatenated values of every parameter whose name starts with `prefix`.
inline std::vector<double> snapshot(const ddmnet::model::DdmNet& net, const std::string& prefix = "") {
  std::vector<double> out;
  for (const auto& p : net.parameters()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  }
  return out;
}

}  // namespace fixtures
