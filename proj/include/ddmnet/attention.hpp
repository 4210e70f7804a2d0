#pragma once

// Progressive attention: map-squeezed frame attention over the embedded
// difference maps, intra-modal query decoding and cross-modal co-attention,
// all built on multi-head attention with post-norm decoder layers.

#include <string>
#include <utility>
#include <vector>

#include "ddmnet/checkpoint.hpp"
#include "ddmnet/random.hpp"
#include "ddmnet/tensor.hpp"

namespace ddmnet::attn {

// Detached attention weights, one [H, nq, nk] record per attention call.
struct AttentionTrace {
  std::vector<NamedTensor> records;
};

struct MhaParams {
  MhaParams() = default;
  MhaParams(std::size_t width, std::size_t heads, Rng& rng);

  Tensor wq, wk, wv, wo;  // [C, C], applied as x * W
  std::size_t heads = 1;

  std::size_t width() const { return wq.dim(0); }
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

// q: [nq, C], k/v: [nk, C] -> [nq, C].
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const MhaParams& params,
                            AttentionTrace* trace = nullptr, const std::string& name = "mha");

struct DecoderLayerParams {
  DecoderLayerParams() = default;
  DecoderLayerParams(std::size_t width, std::size_t heads, std::size_t ffn_hidden, Rng& rng);

  MhaParams self_attn, cross_attn;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // [C, F], [F], [F, C], [C]
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias, ln3_gain, ln3_bias;

  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

// Self-attention, cross-attention and FFN sublayers, each followed by a
// residual add and layer norm.
Tensor decoder_layer(const Tensor& q, const Tensor& k, const Tensor& v, const DecoderLayerParams& params,
                     AttentionTrace* trace = nullptr, const std::string& name = "layer");

struct DecoderStack {
  DecoderStack() = default;
  DecoderStack(std::size_t layers, std::size_t width, std::size_t heads, std::size_t ffn_hidden, Rng& rng);

  std::vector<DecoderLayerParams> layers;

  Tensor forward(Tensor q, const Tensor& k, const Tensor& v, AttentionTrace* trace, const std::string& name) const;
  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

struct MapSqueezeParams {
  MapSqueezeParams() = default;
  MapSqueezeParams(std::size_t width, Rng& rng);

  Tensor w_a, w_m;  // [C, C]
  Tensor w_mu;      // [C, 1]

  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

// A: [C, T], M: [C, T, T] -> D: [C, T] with D_i = sum_j gamma_ij M_ij.
// `uniform` replaces gamma with 1/T (plain temporal averaging).
// When `gamma_out` is given it receives the [T, T] weights.
Tensor map_squeeze(const Tensor& a, const Tensor& m, const MapSqueezeParams& params, bool uniform = false,
                   Tensor* gamma_out = nullptr);

struct QuerySet {
  QuerySet() = default;
  QuerySet(std::size_t count, std::size_t width, Rng& rng);

  Tensor content;   // c_q [omega, C], standard normal
  Tensor position;  // p_q [omega, C]

  void collect(std::vector<NamedTensor>& out, const std::string& prefix) const;
};

// [T, C] sine/cosine table with base 10000.
Tensor sinusoidal_embedding(std::size_t length, std::size_t width);

// h: [C, T] -> [omega, C]. Keys are h^T plus the sinusoidal table (unless
// `positional` is false); values are h^T.
Tensor intra_modal_decode(const Tensor& h, const QuerySet& queries, const DecoderStack& stack,
                          bool positional = true, AttentionTrace* trace = nullptr,
                          const std::string& name = "intra");

// Returns (q_A'', q_D''). `rgb_queries_ddm` attends with q = q_A' over
// k = v = q_D' and yields q_D''; `ddm_queries_rgb` is the mirror image.
std::pair<Tensor, Tensor> cross_modal_coattend(const Tensor& qa, const Tensor& qd,
                                               const DecoderStack& rgb_queries_ddm,
                                               const DecoderStack& ddm_queries_rgb,
                                               AttentionTrace* trace = nullptr);

}  // namespace ddmnet::attn
