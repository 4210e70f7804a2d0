#include "ddmnet/synth.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ddmnet/checkpoint.hpp"
#include "ddmnet/errors.hpp"
#include "ddmnet/parallel.hpp"
#include "ddmnet/random.hpp"

namespace ddmnet::synth {

namespace {

using Color = std::array<double, 3>;

struct Scene {
  Color background{};
  bool subject = false;
  Color subject_color{};
  double x = 0.0, y = 0.0;    // top-left corner, pixels
  double vx = 0.0, vy = 0.0;  // pixels per frame
};

double color_gap(const Color& a, const Color& b) {
  return (std::fabs(a[0] - b[0]) + std::fabs(a[1] - b[1]) + std::fabs(a[2] - b[2])) / 3.0;
}

Color random_color(Rng& rng) {
  std::uniform_real_distribution<double> d(0.1, 0.9);
  return {d(rng), d(rng), d(rng)};
}

// Rejection-samples a color at least `gap` away from each of `avoid`.
Color distinct_color(Rng& rng, std::initializer_list<const Color*> avoid, double gap) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Color c = random_color(rng);
    bool ok = true;
    for (const Color* a : avoid) ok = ok && color_gap(c, *a) >= gap;
    if (ok) return c;
  }
  throw ConfigError("could not draw a sufficiently distinct color");
}

constexpr std::array<double, 5> kSpeeds{-0.5, -0.25, 0.0, 0.25, 0.5};
constexpr double kMinVelocityChange = 0.25;

bool stays_inside(double pos, double v, std::size_t frames, double limit) {
  const double end = pos + v * static_cast<double>(frames);
  return end >= 0.0 && end <= limit && pos >= 0.0 && pos <= limit;
}

// Velocities that keep the subject in frame for `frames` frames and differ
// from (vx, vy) by at least kMinVelocityChange.
std::vector<std::pair<double, double>> velocity_candidates(const Scene& s, std::size_t frames, double limit_x,
                                                           double limit_y, bool require_change) {
  std::vector<std::pair<double, double>> out;
  for (double vx : kSpeeds) {
    for (double vy : kSpeeds) {
      if (!stays_inside(s.x, vx, frames, limit_x) || !stays_inside(s.y, vy, frames, limit_y)) continue;
      if (require_change && std::hypot(vx - s.vx, vy - s.vy) < kMinVelocityChange) continue;
      out.emplace_back(vx, vy);
    }
  }
  return out;
}

double coverage(double lo, double hi, std::size_t pixel) {
  const double p0 = static_cast<double>(pixel);
  return std::clamp(std::min(hi, p0 + 1.0) - std::max(lo, p0), 0.0, 1.0);
}

void render(const Scene& s, double subject_size, std::size_t h, std::size_t w, double dx, double dy,
            double brightness, float* out) {
  for (std::size_t r = 0; r < h; ++r) {
    const double cy = s.subject ? coverage(s.y + dy, s.y + dy + subject_size, r) : 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      const double cov = s.subject ? cy * coverage(s.x + dx, s.x + dx + subject_size, c) : 0.0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = s.background[ch] * (1.0 - cov) + s.subject_color[ch] * cov + brightness;
        out[(r * w + c) * 3 + ch] = static_cast<float>(v);
      }
    }
  }
}

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

std::string to_string(RegimeKind kind) {
  switch (kind) {
    case RegimeKind::ColorShift: return "color-shift";
    case RegimeKind::VelocityChange: return "velocity-change";
    case RegimeKind::SubjectToggle: return "subject-toggle";
  }
  return "?";
}

RegimeKind regime_from_string(const std::string& name) {
  if (name == "color-shift") return RegimeKind::ColorShift;
  if (name == "velocity-change") return RegimeKind::VelocityChange;
  if (name == "subject-toggle") return RegimeKind::SubjectToggle;
  throw ConfigError("unknown regime kind '" + name + "'");
}

void GenSpec::validate() const {
  if (min_frames < 2 || min_frames > max_frames) throw ConfigError("frame range must satisfy 2 <= min <= max");
  if (min_events < 1 || min_events > max_events) throw ConfigError("event range must satisfy 1 <= min <= max");
  if (min_event_length < 2) throw ConfigError("minimum event length must be >= 2");
  if (min_frames < min_events * min_event_length) {
    throw ConfigError("frame range too small: " + std::to_string(min_frames) + " frames cannot hold " +
                      std::to_string(min_events) + " events of length >= " + std::to_string(min_event_length));
  }
  if (regimes.empty()) throw ConfigError("at least one regime kind is required");
  if (height < 8 || width < 8) throw ConfigError("frames must be at least 8x8");
  if (!(jitter >= 0.0)) throw ConfigError("jitter must be non-negative");
}

VideoRecord generate_video(const GenSpec& spec, const std::string& id, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed, "structure:" + id);
  Rng noise = make_rng(seed, "noise:" + id);

  VideoRecord video;
  video.id = id;
  video.height = spec.height;
  video.width = spec.width;
  video.channels = 3;
  video.num_frames = std::uniform_int_distribution<std::size_t>(spec.min_frames, spec.max_frames)(rng);
  const std::size_t e = video.num_frames;
  const std::size_t feasible = e / spec.min_event_length;
  const std::size_t events =
      std::uniform_int_distribution<std::size_t>(spec.min_events, std::min(spec.max_events, feasible))(rng);

  // Event lengths: min length each, slack split at sorted uniform cuts.
  const std::size_t slack = e - events * spec.min_event_length;
  std::vector<std::size_t> cuts(events - 1);
  for (auto& c : cuts) c = std::uniform_int_distribution<std::size_t>(0, slack)(rng);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> lengths(events);
  std::size_t prev = 0;
  for (std::size_t k = 0; k < events; ++k) {
    const std::size_t cut = k + 1 < events ? cuts[k] : slack;
    lengths[k] = spec.min_event_length + (cut - prev);
    prev = cut;
  }

  const bool use_color = std::count(spec.regimes.begin(), spec.regimes.end(), RegimeKind::ColorShift) > 0;
  const bool use_velocity = std::count(spec.regimes.begin(), spec.regimes.end(), RegimeKind::VelocityChange) > 0;
  const bool use_toggle = std::count(spec.regimes.begin(), spec.regimes.end(), RegimeKind::SubjectToggle) > 0;

  const double size = std::max(3.0, std::round(static_cast<double>(std::min(spec.height, spec.width)) / 4.0));
  const double limit_x = static_cast<double>(spec.width) - size;
  const double limit_y = static_cast<double>(spec.height) - size;
  std::uniform_real_distribution<double> place_x(0.0, limit_x), place_y(0.0, limit_y);

  Scene scene;
  scene.background = random_color(rng);
  scene.subject = use_velocity || (use_toggle && std::bernoulli_distribution(0.5)(rng));
  scene.subject_color = distinct_color(rng, {&scene.background}, 0.3);
  scene.x = place_x(rng);
  scene.y = place_y(rng);
  if (use_velocity) {
    auto cands = velocity_candidates(scene, lengths[0], limit_x, limit_y, false);
    const auto& v = cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
    scene.vx = v.first;
    scene.vy = v.second;
  }

  video.pixels.resize(e * video.frame_size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t t = 0;
  for (std::size_t k = 0; k < events; ++k) {
    if (k > 0) {
      video.boundaries.push_back(t);
      const bool keeps_inside = !scene.subject || (stays_inside(scene.x, scene.vx, lengths[k], limit_x) &&
                                                   stays_inside(scene.y, scene.vy, lengths[k], limit_y));
      std::vector<RegimeKind> options;
      if (keeps_inside) {
        if (use_color) options.push_back(RegimeKind::ColorShift);
        if (use_toggle) options.push_back(RegimeKind::SubjectToggle);
      } else if (use_toggle) {
        // Hiding the subject also resolves a trajectory about to leave the frame.
        if (scene.subject) options.push_back(RegimeKind::SubjectToggle);
      }
      if (use_velocity && scene.subject && !velocity_candidates(scene, lengths[k], limit_x, limit_y, true).empty()) {
        options.push_back(RegimeKind::VelocityChange);
      }
      if (options.empty()) throw ConfigError("no feasible regime change for video " + id);
      const RegimeKind kind = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
      switch (kind) {
        case RegimeKind::ColorShift:
          scene.background = distinct_color(rng, {&scene.background}, 0.25);
          if (scene.subject && color_gap(scene.background, scene.subject_color) < 0.2) {
            scene.background = distinct_color(rng, {&scene.background, &scene.subject_color}, 0.2);
          }
          break;
        case RegimeKind::SubjectToggle:
          scene.subject = !scene.subject;
          if (scene.subject) {
            scene.x = place_x(rng);
            scene.y = place_y(rng);
            scene.vx = scene.vy = 0.0;
            if (color_gap(scene.background, scene.subject_color) < 0.3) {
              scene.subject_color = distinct_color(rng, {&scene.background}, 0.3);
            }
          }
          break;
        case RegimeKind::VelocityChange: {
          auto cands = velocity_candidates(scene, lengths[k], limit_x, limit_y, true);
          const auto& v = cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
          scene.vx = v.first;
          scene.vy = v.second;
          break;
        }
      }
    }
    for (std::size_t f = 0; f < lengths[k]; ++f, ++t) {
      double brightness = 0.0, dx = 0.0, dy = 0.0;
      const double g0 = gauss(noise), g1 = gauss(noise), g2 = gauss(noise);
      if (spec.jitter > 0.0) {
        brightness = spec.jitter * g0;
        dx = 10.0 * spec.jitter * g1;
        dy = 10.0 * spec.jitter * g2;
      }
      float* out = video.pixels.data() + t * video.frame_size();
      render(scene, size, spec.height, spec.width, dx, dy, brightness, out);
      for (std::size_t i = 0; i < video.frame_size(); ++i) {
        const double pix = gauss(noise);
        double v = out[i] + (spec.jitter > 0.0 ? 0.5 * spec.jitter * pix : 0.0);
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      if (scene.subject) {
        scene.x += scene.vx;
        scene.y += scene.vy;
      }
    }
  }
  return video;
}

std::vector<const VideoRecord*> Dataset::split(const std::string& name) const {
  std::vector<const VideoRecord*> out;
  for (const auto& v : videos) {
    if (v.split == name) out.push_back(&v);
  }
  return out;
}

const VideoRecord* Dataset::find(const std::string& id) const {
  for (const auto& v : videos) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

Dataset generate_dataset(const GenSpec& spec, std::size_t workers) {
  spec.validate();
  std::vector<std::pair<std::string, std::string>> plan;
  auto name = [](const char* split, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04zu", split, i);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < spec.train_videos; ++i) plan.emplace_back(name("train", i), "train");
  for (std::size_t i = 0; i < spec.val_videos; ++i) plan.emplace_back(name("val", i), "val");
  Dataset ds;
  ds.videos.resize(plan.size());
  parallel_for(plan.size(), workers, [&](std::size_t i) {
    ds.videos[i] = generate_video(spec, plan[i].first, spec.seed);
    ds.videos[i].split = plan[i].second;
  });
  return ds;
}

std::string encode_frames(const VideoRecord& video) {
  std::string out = "DDMF";
  put<std::uint32_t>(out, kFramesVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(video.num_frames));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(video.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(video.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(video.channels));
  out.reserve(out.size() + video.pixels.size() * 4);
  for (float f : video.pixels) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

void decode_frames(const std::string& bytes, const std::string& source, VideoRecord& video) {
  constexpr std::size_t kHeader = 4 + 5 * 4;
  if (bytes.size() < 4 || bytes.compare(0, 4, "DDMF") != 0) {
    throw DataError(source + ": bad magic, expected \"DDMF\"");
  }
  if (bytes.size() < kHeader) throw DataError(source + ": truncated frames header");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };
  if (u32(4) != kFramesVersion) {
    throw DataError(source + ": unsupported frames version " + std::to_string(u32(4)));
  }
  video.num_frames = u32(8);
  video.height = u32(12);
  video.width = u32(16);
  video.channels = u32(20);
  const std::size_t count = video.num_frames * video.height * video.width * video.channels;
  if (bytes.size() != kHeader + count * 4) {
    throw DataError(source + ": truncated payload (expected " + std::to_string(count) + " pixels)");
  }
  video.pixels.resize(count);
  std::memcpy(video.pixels.data(), bytes.data() + kHeader, count * 4);
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  std::vector<std::string> split_order;
  std::vector<std::string> manifests;
  for (const auto& v : dataset.videos) {
    const std::string rel = "frames/" + v.id + ".ddmf";
    write_file_atomic(dir / rel, encode_frames(v));
    nlohmann::ordered_json rec;
    rec["id"] = v.id;
    rec["num_frames"] = v.num_frames;
    rec["frames_file"] = rel;
    rec["boundaries"] = v.boundaries;
    rec["split"] = v.split;
    auto it = std::find(split_order.begin(), split_order.end(), v.split);
    if (it == split_order.end()) {
      split_order.push_back(v.split);
      manifests.emplace_back();
      it = split_order.end() - 1;
    }
    manifests[static_cast<std::size_t>(it - split_order.begin())] += rec.dump() + "\n";
  }
  for (std::size_t i = 0; i < split_order.size(); ++i) {
    write_file_atomic(dir / (split_order[i] + ".jsonl"), manifests[i]);
  }
}

namespace {

void read_manifest(const std::filesystem::path& manifest, Dataset& ds) {
  std::istringstream lines(read_file(manifest));
  const auto base = manifest.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(lineno);
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    VideoRecord v;
    try {
      v.id = rec.at("id").get<std::string>();
      v.split = rec.at("split").get<std::string>();
      const auto frames_file = rec.at("frames_file").get<std::string>();
      const auto num_frames = rec.at("num_frames").get<std::size_t>();
      v.boundaries = rec.at("boundaries").get<std::vector<std::size_t>>();
      const auto path = base / frames_file;
      decode_frames(read_file(path), path.string(), v);
      if (v.num_frames != num_frames) {
        throw DataError(where + ": num_frames " + std::to_string(num_frames) + " disagrees with frames file (" +
                        std::to_string(v.num_frames) + ")");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
    for (std::size_t i = 0; i < v.boundaries.size(); ++i) {
      if (v.boundaries[i] >= v.num_frames || (i > 0 && v.boundaries[i] <= v.boundaries[i - 1])) {
        throw DataError(where + ": boundary " + std::to_string(v.boundaries[i]) + " out of range or unsorted for " +
                        std::to_string(v.num_frames) + " frames");
      }
    }
    if (ds.find(v.id)) throw DataError(where + ": duplicate video id '" + v.id + "'");
    ds.videos.push_back(std::move(v));
  }
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& path) {
  Dataset ds;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> manifests;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.path().extension() == ".jsonl") manifests.push_back(entry.path());
    }
    if (manifests.empty()) throw DataError(path.string() + ": no *.jsonl manifest found");
    std::sort(manifests.begin(), manifests.end());
    // train before val regardless of spelling order
    std::stable_partition(manifests.begin(), manifests.end(),
                          [](const auto& p) { return p.stem() == "train"; });
    for (const auto& m : manifests) read_manifest(m, ds);
  } else {
    if (!std::filesystem::exists(path)) throw DataError(path.string() + ": manifest does not exist");
    read_manifest(path, ds);
  }
  return ds;
}

}  // namespace ddmnet::synth
