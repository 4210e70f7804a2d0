#pragma once

// Multi-level feature bank: a small pyramidal CNN gives m per-frame
// feature sequences; n dilated temporal convolutions per sequence give
// L = m*n levels with growing temporal receptive fields.

#include <cstddef>
#include <vector>

#include "ddmnet/checkpoint.hpp"
#include "ddmnet/random.hpp"
#include "ddmnet/synth.hpp"
#include "ddmnet/tensor.hpp"

namespace ddmnet::bank {

struct ClipSpec {
  std::size_t half_window = 5;  // w
  std::size_t stride = 6;       // s, in frames
  std::size_t length() const { return 2 * half_window + 1; }
  void validate() const;
};

// Frame indices center + k*stride for k in [-w, w], clamped to [0, E).
std::vector<std::size_t> clip_indices(std::size_t num_frames, std::size_t center, const ClipSpec& spec);
// Frames as [T, 3, H, W], pixel values shifted to [-0.5, 0.5].
Tensor frames_tensor(const synth::VideoRecord& video, const std::vector<std::size_t>& indices);
Tensor sample_clip(const synth::VideoRecord& video, std::size_t center, const ClipSpec& spec);

// [N, 2, H, W]: column then row position, each in (-0.5, 0.5).
Tensor coordinate_planes(std::size_t n, std::size_t h, std::size_t w);

struct BankConfig {
  std::vector<std::size_t> widths{16, 32, 64};  // one per spatial level (m = size)
  std::vector<std::size_t> dilations{1, 2, 4};  // one per temporal level (n = size)
  std::size_t temporal_kernel = 3;
  std::size_t in_channels = 3;
  // Appends fixed x/y coordinate planes to the first stage's input so that
  // pooled features still reflect where things are in the frame.
  bool coord_channels = true;
  // Multiplies every pooled sequence. At initialization the pooled features
  // have RMS ~0.1, far below the unit-scale query content and key position
  // terms they are mixed with downstream; 8 brings them to ~1.
  double feature_scale = 8.0;

  std::size_t spatial_levels() const { return widths.size(); }
  std::size_t temporal_levels() const { return dilations.size(); }
  std::size_t levels() const { return widths.size() * dilations.size(); }
  void validate() const;
};

struct FeatureBank {
  std::size_t m = 0;
  std::size_t n = 0;
  // levels[i * n + j]: spatial level i, temporal level j, shape [C_i, T].
  std::vector<Tensor> levels;
  // Deepest spatial sequence before temporal convolution, [C_m, T].
  Tensor rgb;

  const Tensor& level(std::size_t spatial, std::size_t temporal) const { return levels[spatial * n + temporal]; }
};

class FeatureBankNet {
 public:
  FeatureBankNet() = default;
  FeatureBankNet(BankConfig config, Rng& rng);

  // frames [N, C, H, W] -> m sequences [C_i, N] (global average pooled
  // after each conv3x3 / relu / 2x2-pool stage).
  std::vector<Tensor> backbone_forward(const Tensor& frames) const;
  FeatureBank build(const std::vector<Tensor>& spatial) const;

  const BankConfig& config() const { return config_; }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;

  // Exposed for tests that install hand-picked weights.
  std::vector<Tensor> stage_kernels, stage_biases;
  // temporal_kernels[i * n + j]: [C_i, C_i, K]
  std::vector<Tensor> temporal_kernels, temporal_biases;

 private:
  BankConfig config_;
};

}  // namespace ddmnet::bank
