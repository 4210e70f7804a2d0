#pragma once

// Per-modality classifiers, learnable logit fusion and the three-term loss.

#include <span>
#include <string>
#include <vector>

#include "ddmnet/checkpoint.hpp"
#include "ddmnet/random.hpp"
#include "ddmnet/tensor.hpp"

namespace ddmnet::head {

inline constexpr double kLossClamp = 1e-7;

struct FusionHead {
  FusionHead() = default;
  FusionHead(std::size_t width, Rng& rng);

  Tensor fc_a_w, fc_a_b;  // [C, 2], [2]
  Tensor fc_d_w, fc_d_b;
  Tensor alpha_raw;  // [1]; alpha = sigmoid(alpha_raw)

  Tensor alpha() const { return sigmoid(alpha_raw); }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

// q: [omega, C] -> [2] (mean over queries, then affine).
Tensor modality_logits(const Tensor& q, const Tensor& weight, const Tensor& bias);

struct Scores {
  Tensor logits;  // fused [.., 2]
  Tensor p;       // boundary probability of the fused logits
  Tensor p_a, p_d;
};

// l = alpha * l_a + (1 - alpha) * l_d over trailing axis 2; alpha is [1].
Scores fuse_and_score(const Tensor& l_a, const Tensor& l_d, const Tensor& alpha);

// Boundary-class softmax probability of [.., 2] logits, shape [..].
Tensor boundary_probability(const Tensor& logits);

struct LossTerms {
  bool fused = true;
  bool rgb = true;
  bool ddm = true;
};

// Mean over the batch of the summed binary cross-entropies of the enabled
// terms. Probabilities are [N]; labels are 0/1.
Tensor complete_loss(const Tensor& p_fu, const Tensor& p_a, const Tensor& p_d, std::span<const int> labels,
                     LossTerms terms = {});

}  // namespace ddmnet::head
