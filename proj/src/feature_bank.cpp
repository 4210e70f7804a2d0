#include "ddmnet/feature_bank.hpp"

#include <algorithm>
#include <cmath>

#include "ddmnet/errors.hpp"

namespace ddmnet::bank {

void ClipSpec::validate() const {
  if (half_window < 1) throw ConfigError("clip half-window w must be >= 1");
  if (stride < 1) throw ConfigError("clip stride s must be >= 1");
}

std::vector<std::size_t> clip_indices(std::size_t num_frames, std::size_t center, const ClipSpec& spec) {
  if (num_frames == 0) throw ContractError("cannot sample a clip from an empty video");
  if (center >= num_frames) {
    throw ContractError("clip center " + std::to_string(center) + " outside video of " +
                        std::to_string(num_frames) + " frames");
  }
  if (spec.stride < 1) throw ConfigError("clip stride s must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(spec.length());
  const auto w = static_cast<std::ptrdiff_t>(spec.half_window);
  const auto last = static_cast<std::ptrdiff_t>(num_frames) - 1;
  for (std::ptrdiff_t k = -w; k <= w; ++k) {
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(center) + k * static_cast<std::ptrdiff_t>(spec.stride);
    out.push_back(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, last)));
  }
  return out;
}

Tensor frames_tensor(const synth::VideoRecord& video, const std::vector<std::size_t>& indices) {
  const std::size_t h = video.height, w = video.width, c = video.channels;
  std::vector<double> values(indices.size() * c * h * w);
  for (std::size_t f = 0; f < indices.size(); ++f) {
    auto frame = video.frame(indices[f]);
    double* out = values.data() + f * c * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          out[(ch * h + y) * w + x] = static_cast<double>(frame[(y * w + x) * c + ch]) - 0.5;
        }
      }
    }
  }
  return Tensor::from({indices.size(), c, h, w}, std::move(values));
}

Tensor sample_clip(const synth::VideoRecord& video, std::size_t center, const ClipSpec& spec) {
  return frames_tensor(video, clip_indices(video.num_frames, center, spec));
}

void BankConfig::validate() const {
  if (widths.empty()) throw ConfigError("feature bank needs at least one spatial level");
  if (dilations.empty()) throw ConfigError("feature bank needs at least one temporal level");
  if (!(feature_scale > 0.0) || !std::isfinite(feature_scale)) throw ConfigError("feature scale must be positive");
  if (temporal_kernel % 2 == 0) throw ConfigError("temporal kernel must be odd");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("feature widths must be positive");
  }
  for (std::size_t d : dilations) {
    if (d == 0) throw ConfigError("dilations must be >= 1");
  }
}

FeatureBankNet::FeatureBankNet(BankConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  std::size_t in = config_.in_channels + (config_.coord_channels ? 2 : 0);
  for (std::size_t width : config_.widths) {
    stage_kernels.push_back(uniform_parameter({width, in, 3, 3}, in * 9, rng));
    stage_biases.push_back(constant_parameter({width}, 0.0));
    in = width;
  }
  const std::size_t k = config_.temporal_kernel;
  for (std::size_t width : config_.widths) {
    for (std::size_t j = 0; j < config_.dilations.size(); ++j) {
      temporal_kernels.push_back(uniform_parameter({width, width, k}, width * k, rng));
      temporal_biases.push_back(constant_parameter({width}, 0.0));
    }
  }
}

Tensor coordinate_planes(std::size_t n, std::size_t h, std::size_t w) {
  std::vector<double> v(n * 2 * h * w);
  for (std::size_t i = 0; i < n; ++i) {
    double* x = v.data() + i * 2 * h * w;
    double* y = x + h * w;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        x[r * w + c] = (static_cast<double>(c) + 0.5) / static_cast<double>(w) - 0.5;
        y[r * w + c] = (static_cast<double>(r) + 0.5) / static_cast<double>(h) - 0.5;
      }
    }
  }
  return Tensor::from({n, 2, h, w}, std::move(v));
}

std::vector<Tensor> FeatureBankNet::backbone_forward(const Tensor& frames) const {
  if (frames.rank() != 4 || frames.dim(1) != config_.in_channels) {
    throw DimensionError("backbone expects [N," + std::to_string(config_.in_channels) + ",H,W] frames, got " +
                         shape_str(frames.shape()));
  }
  const std::size_t min_extent = std::size_t{1} << config_.widths.size();
  if (frames.dim(2) < min_extent || frames.dim(3) < min_extent) {
    throw DimensionError("frames " + shape_str(frames.shape()) + " are smaller than 2^m = " +
                         std::to_string(min_extent) + " for a " + std::to_string(config_.widths.size()) +
                         "-stage backbone");
  }
  std::vector<Tensor> sequences;
  Tensor x = config_.coord_channels ? concat({frames, coordinate_planes(frames.dim(0), frames.dim(2), frames.dim(3))}, 1)
                                    : frames;
  for (std::size_t i = 0; i < stage_kernels.size(); ++i) {
    x = avg_pool2x2(relu(conv2d(x, stage_kernels[i], stage_biases[i], 1, 1)));
    // [N, C, h, w] -> [N, C] -> [C, N]
    const Shape& s = x.shape();
    Tensor pooled = mean(reshape(x, {s[0], s[1], s[2] * s[3]}), 2);
    if (config_.feature_scale != 1.0) pooled = scale(pooled, config_.feature_scale);
    sequences.push_back(transpose(pooled));
  }
  return sequences;
}

FeatureBank FeatureBankNet::build(const std::vector<Tensor>& spatial) const {
  const std::size_t m = config_.widths.size();
  const std::size_t n = config_.dilations.size();
  if (spatial.size() != m) {
    throw DimensionError("feature bank expects " + std::to_string(m) + " spatial sequences, got " +
                         std::to_string(spatial.size()));
  }
  const std::size_t t = spatial.front().dim(1);
  FeatureBank bank;
  bank.m = m;
  bank.n = n;
  for (std::size_t i = 0; i < m; ++i) {
    if (spatial[i].rank() != 2 || spatial[i].dim(0) != config_.widths[i] || spatial[i].dim(1) != t) {
      throw DimensionError("spatial sequence " + std::to_string(i) + " has shape " + shape_str(spatial[i].shape()));
    }
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t d = config_.dilations[j];
      bank.levels.push_back(conv1d(spatial[i], temporal_kernels[i * n + j], temporal_biases[i * n + j], d,
                                   same_padding(config_.temporal_kernel, d)));
    }
  }
  bank.rgb = spatial.back();
  return bank;
}

void FeatureBankNet::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < stage_kernels.size(); ++i) {
    out.push_back({prefix + "stage" + std::to_string(i) + ".weight", stage_kernels[i]});
    out.push_back({prefix + "stage" + std::to_string(i) + ".bias", stage_biases[i]});
  }
  const std::size_t n = config_.dilations.size();
  for (std::size_t i = 0; i < temporal_kernels.size(); ++i) {
    const std::string name = prefix + "temporal" + std::to_string(i / n) + "_" + std::to_string(i % n);
    out.push_back({name + ".weight", temporal_kernels[i]});
    out.push_back({name + ".bias", temporal_biases[i]});
  }
}

}  // namespace ddmnet::bank
