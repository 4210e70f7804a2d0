#pragma once

// Procedural videos with known event boundaries.
//
// A video is a sequence of events. Each event holds a scene state
// (background color, optional square "subject" with its own color and
// velocity); every boundary changes exactly one aspect of that state.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ddmnet::synth {

enum class RegimeKind { ColorShift, VelocityChange, SubjectToggle };

std::string to_string(RegimeKind kind);
RegimeKind regime_from_string(const std::string& name);

struct GenSpec {
  std::size_t train_videos = 64;
  std::size_t val_videos = 32;
  std::size_t min_frames = 90;
  std::size_t max_frames = 110;
  std::size_t min_events = 2;
  std::size_t max_events = 5;
  std::size_t min_event_length = 18;
  std::vector<RegimeKind> regimes{RegimeKind::ColorShift, RegimeKind::VelocityChange,
                                  RegimeKind::SubjectToggle};
  // Brightness std per frame; translation std is 10x this in pixels and
  // per-pixel noise std is half of it.
  double jitter = 0.0;
  std::size_t height = 24;
  std::size_t width = 24;
  std::uint64_t seed = 1;

  // Throws ConfigError when no video can satisfy the event constraints.
  void validate() const;
};

struct VideoRecord {
  std::string id;
  std::size_t num_frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  // Frame-major, each frame HxWxC row-major, values in [0, 1].
  std::vector<float> pixels;
  // First frame of every event after the first; sorted.
  std::vector<std::size_t> boundaries;
  std::string split;

  std::size_t frame_size() const { return height * width * channels; }
  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(pixels).subspan(t * frame_size(), frame_size());
  }
};

struct Dataset {
  std::vector<VideoRecord> videos;

  std::vector<const VideoRecord*> split(const std::string& name) const;
  const VideoRecord* find(const std::string& id) const;
};

VideoRecord generate_video(const GenSpec& spec, const std::string& id, std::uint64_t seed);
// Ids are "train_0000", ..., "val_0000", ...; each video's stream derives
// from (spec.seed, id). `workers` only affects speed.
Dataset generate_dataset(const GenSpec& spec, std::size_t workers = 1);

// Frames file: "DDMF" | u32 version | u32 E | u32 H | u32 W | u32 C | f32 pixels (LE).
inline constexpr std::uint32_t kFramesVersion = 1;
std::string encode_frames(const VideoRecord& video);
void decode_frames(const std::string& bytes, const std::string& source, VideoRecord& video);

// Writes frames/<id>.ddmf plus one JSON-lines manifest per split
// (<split>.jsonl) under `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
// Accepts a single manifest file, or a directory whose *.jsonl manifests
// are read in name order.
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace ddmnet::synth
