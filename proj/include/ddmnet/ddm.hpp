#pragma once

// Dense difference maps: per-level T x T frame distance matrices, stacked
// to L x T x T and embedded by a small conv stack into C x T x T.

#include <span>
#include <string>

#include "ddmnet/checkpoint.hpp"
#include "ddmnet/feature_bank.hpp"
#include "ddmnet/random.hpp"
#include "ddmnet/tensor.hpp"

namespace ddmnet::ddm {

enum class Metric { Euclidean, Manhattan, Chebyshev, Cosine };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);

// Cosine convention for zero vectors: 0 if both are zero, 1 if exactly one is.
double frame_distance(std::span<const double> a, std::span<const double> b, Metric metric);

// seq: [C, T] -> [T, T]. Differentiable w.r.t. seq; the diagonal is exactly
// zero and carries no gradient.
Tensor pairwise_distance_matrix(const Tensor& seq, Metric metric);

// [L, T, T], levels in bank order (spatial-major).
Tensor build_raw_ddm(const bank::FeatureBank& bank, Metric metric);

// Factor that turns a norm distance between two C-dimensional vectors into a
// per-channel quantity: 1/sqrt(C) for euclidean, 1/C for manhattan, 1 for
// chebyshev. Cosine is not rescaled (see normalize_raw_ddm).
double metric_scale(Metric metric, std::size_t channels);

// Embedding input. Norm metrics are scaled level by level with
// metric_scale. Cosine d becomes the chord length sqrt(2d) = |a/|a| - b/|b||,
// which, like the norms, grows linearly with a small change of direction.
Tensor normalize_raw_ddm(const Tensor& raw, const bank::FeatureBank& bank, Metric metric);

class DdmEmbedding {
 public:
  DdmEmbedding() = default;
  // Two 3x3 convolutions L -> C/2 -> C with a relu in between.
  DdmEmbedding(std::size_t levels, std::size_t width, Rng& rng);

  Tensor forward(const Tensor& raw) const;
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;

  Tensor k1, b1, k2, b2;
};

}  // namespace ddmnet::ddm
