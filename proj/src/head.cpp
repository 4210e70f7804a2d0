#include "ddmnet/head.hpp"

#include "ddmnet/errors.hpp"

namespace ddmnet::head {

FusionHead::FusionHead(std::size_t width, Rng& rng) {
  fc_a_w = uniform_parameter({width, 2}, width, rng);
  fc_a_b = constant_parameter({2}, 0.0);
  fc_d_w = uniform_parameter({width, 2}, width, rng);
  fc_d_b = constant_parameter({2}, 0.0);
  alpha_raw = constant_parameter({1}, 0.0);
}

void FusionHead::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "fc_a.weight", fc_a_w});
  out.push_back({prefix + "fc_a.bias", fc_a_b});
  out.push_back({prefix + "fc_d.weight", fc_d_w});
  out.push_back({prefix + "fc_d.bias", fc_d_b});
  out.push_back({prefix + "alpha_raw", alpha_raw});
}

Tensor modality_logits(const Tensor& q, const Tensor& weight, const Tensor& bias) {
  if (q.rank() != 2 || q.dim(1) != weight.dim(0)) {
    throw DimensionError("classifier expects [omega," + std::to_string(weight.dim(0)) + "], got " +
                         shape_str(q.shape()));
  }
  Tensor pooled = mean(q, 0, true);  // [1, C]
  return reshape(add(matmul(pooled, weight), bias), {2});
}

Tensor boundary_probability(const Tensor& logits) {
  if (logits.rank() == 0 || logits.dim(-1) != 2) {
    throw DimensionError("expected two-class logits, got " + shape_str(logits.shape()));
  }
  const int last = static_cast<int>(logits.rank()) - 1;
  Shape out(logits.shape().begin(), logits.shape().end() - 1);
  if (out.empty()) out = {1};
  return reshape(slice(softmax(logits, last), last, 1, 2), out);
}

Scores fuse_and_score(const Tensor& l_a, const Tensor& l_d, const Tensor& alpha) {
  if (l_a.shape() != l_d.shape()) {
    throw DimensionError("logit shapes differ: " + shape_str(l_a.shape()) + " vs " + shape_str(l_d.shape()));
  }
  Tensor one_minus = add_scalar(neg(alpha), 1.0);
  Scores s;
  s.logits = add(mul(l_a, alpha), mul(l_d, one_minus));
  s.p = boundary_probability(s.logits);
  s.p_a = boundary_probability(l_a);
  s.p_d = boundary_probability(l_d);
  return s;
}

namespace {

// Per-sample binary cross-entropy, [N].
Tensor bce(const Tensor& p, const Tensor& y) {
  Tensor pc = clamp(p, kLossClamp, 1.0 - kLossClamp);
  Tensor pos = mul(y, log(pc));
  Tensor negative = mul(add_scalar(neg(y), 1.0), log(add_scalar(neg(pc), 1.0)));
  return neg(add(pos, negative));
}

}  // namespace

Tensor complete_loss(const Tensor& p_fu, const Tensor& p_a, const Tensor& p_d, std::span<const int> labels,
                     LossTerms terms) {
  const std::size_t n = labels.size();
  if (n == 0) throw ContractError("loss over an empty batch");
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("labels must be 0 or 1");
    y[i] = labels[i];
  }
  Tensor yt = Tensor::from({n}, std::move(y));
  Tensor total;
  auto accumulate = [&](bool on, const Tensor& p) {
    if (!on) return;
    if (p.numel() != n) {
      throw DimensionError("probabilities " + shape_str(p.shape()) + " vs " + std::to_string(n) + " labels");
    }
    Tensor term = bce(reshape(p, {n}), yt);
    total = total.defined() ? add(total, term) : term;
  };
  accumulate(terms.fused, p_fu);
  accumulate(terms.rgb, p_a);
  accumulate(terms.ddm, p_d);
  if (!total.defined()) throw ConfigError("loss has no enabled terms");
  return mean(total);
}

}  // namespace ddmnet::head
