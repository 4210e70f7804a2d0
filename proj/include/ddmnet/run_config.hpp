#pragma once

// One merged configuration for every command: preset defaults, then the
// config file, then command-line overrides. The merged result is what gets
// snapshotted next to each run's artifacts.

#include <cstdint>
#include <filesystem>
#include <string>

#include "ddmnet/evaluation.hpp"
#include "ddmnet/model.hpp"
#include "ddmnet/synth.hpp"
#include "ddmnet/training.hpp"

namespace ddmnet {

struct RunConfig {
  std::string preset = "desk";
  // Drives data generation, model initialization and the sampler.
  std::uint64_t seed = 1;
  synth::GenSpec data;
  model::ModelConfig model;
  train::TrainConfig train;
  eval::PostprocessConfig postprocess;
  eval::MatchMode match = eval::MatchMode::Optimal;
  eval::Aggregation aggregation = eval::Aggregation::Global;
  std::size_t workers = 1;

  static RunConfig for_preset(const std::string& name);

  // Pushes seed/workers/preset into the module configs and validates them.
  void finalize();

  std::string to_json() const;
  // Fields absent from `text` keep their current values; unknown keys and
  // type mismatches raise ConfigError naming `source`.
  void merge_json(const std::string& text, const std::string& source);
  // Preset named in the text, if any ("" otherwise).
  static std::string preset_in(const std::string& text, const std::string& source);
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ddmnet
