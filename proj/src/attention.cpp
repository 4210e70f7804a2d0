#include "ddmnet/attention.hpp"

#include <cmath>

#include "ddmnet/errors.hpp"

namespace ddmnet::attn {

MhaParams::MhaParams(std::size_t width, std::size_t heads_, Rng& rng) : heads(heads_) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("model width " + std::to_string(width) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  wq = uniform_parameter({width, width}, width, rng);
  wk = uniform_parameter({width, width}, width, rng);
  wv = uniform_parameter({width, width}, width, rng);
  wo = uniform_parameter({width, width}, width, rng);
}

void MhaParams::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "wq", wq});
  out.push_back({prefix + "wk", wk});
  out.push_back({prefix + "wv", wv});
  out.push_back({prefix + "wo", wo});
}

namespace {

// [n, C] -> [H, n, d]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  return permute(reshape(x, {n, heads, c / heads}), {1, 0, 2});
}

}  // namespace

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const MhaParams& params,
                            AttentionTrace* trace, const std::string& name) {
  const std::size_t c = params.width();
  if (params.heads == 0 || c % params.heads != 0) {
    throw ConfigError("model width " + std::to_string(c) + " is not divisible by " + std::to_string(params.heads) +
                      " heads");
  }
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != c || k.dim(1) != c || v.dim(1) != c) {
    throw DimensionError("attention expects [n," + std::to_string(c) + "] inputs, got q " + shape_str(q.shape()) +
                         " k " + shape_str(k.shape()) + " v " + shape_str(v.shape()));
  }
  if (k.dim(0) != v.dim(0)) {
    throw DimensionError("attention keys " + shape_str(k.shape()) + " and values " + shape_str(v.shape()) +
                         " differ in length");
  }
  const std::size_t h = params.heads, d = c / h, nq = q.dim(0);
  Tensor qh = split_heads(matmul(q, params.wq), h);
  Tensor kh = split_heads(matmul(k, params.wk), h);
  Tensor vh = split_heads(matmul(v, params.wv), h);
  Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor weights = softmax(scores, -1);
  if (trace != nullptr) trace->records.push_back({name, weights.detach()});
  Tensor heads = matmul(weights, vh);  // [H, nq, d]
  return matmul(reshape(permute(heads, {1, 0, 2}), {nq, c}), params.wo);
}

DecoderLayerParams::DecoderLayerParams(std::size_t width, std::size_t heads, std::size_t ffn_hidden, Rng& rng)
    : self_attn(width, heads, rng), cross_attn(width, heads, rng) {
  ffn_w1 = uniform_parameter({width, ffn_hidden}, width, rng);
  ffn_b1 = constant_parameter({ffn_hidden}, 0.0);
  ffn_w2 = uniform_parameter({ffn_hidden, width}, ffn_hidden, rng);
  ffn_b2 = constant_parameter({width}, 0.0);
  ln1_gain = constant_parameter({width}, 1.0);
  ln1_bias = constant_parameter({width}, 0.0);
  ln2_gain = constant_parameter({width}, 1.0);
  ln2_bias = constant_parameter({width}, 0.0);
  ln3_gain = constant_parameter({width}, 1.0);
  ln3_bias = constant_parameter({width}, 0.0);
}

void DecoderLayerParams::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  self_attn.collect(out, prefix + "self.");
  cross_attn.collect(out, prefix + "cross.");
  out.push_back({prefix + "ffn.w1", ffn_w1});
  out.push_back({prefix + "ffn.b1", ffn_b1});
  out.push_back({prefix + "ffn.w2", ffn_w2});
  out.push_back({prefix + "ffn.b2", ffn_b2});
  out.push_back({prefix + "ln1.gain", ln1_gain});
  out.push_back({prefix + "ln1.bias", ln1_bias});
  out.push_back({prefix + "ln2.gain", ln2_gain});
  out.push_back({prefix + "ln2.bias", ln2_bias});
  out.push_back({prefix + "ln3.gain", ln3_gain});
  out.push_back({prefix + "ln3.bias", ln3_bias});
}

Tensor decoder_layer(const Tensor& q, const Tensor& k, const Tensor& v, const DecoderLayerParams& p,
                     AttentionTrace* trace, const std::string& name) {
  Tensor q1 = layer_norm(add(q, multi_head_attention(q, q, q, p.self_attn, trace, name + ".self")), p.ln1_gain,
                         p.ln1_bias);
  Tensor q2 = layer_norm(add(q1, multi_head_attention(q1, k, v, p.cross_attn, trace, name + ".cross")),
                         p.ln2_gain, p.ln2_bias);
  Tensor ffn = add(matmul(relu(add(matmul(q2, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
  return layer_norm(add(q2, ffn), p.ln3_gain, p.ln3_bias);
}

DecoderStack::DecoderStack(std::size_t count, std::size_t width, std::size_t heads, std::size_t ffn_hidden,
                           Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) layers.emplace_back(width, heads, ffn_hidden, rng);
}

Tensor DecoderStack::forward(Tensor q, const Tensor& k, const Tensor& v, AttentionTrace* trace,
                             const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    q = decoder_layer(q, k, v, layers[i], trace, name + ".layer" + std::to_string(i));
  }
  return q;
}

void DecoderStack::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + "layer" + std::to_string(i) + ".");
}

MapSqueezeParams::MapSqueezeParams(std::size_t width, Rng& rng) {
  w_a = uniform_parameter({width, width}, width, rng);
  w_m = uniform_parameter({width, width}, width, rng);
  w_mu = uniform_parameter({width, 1}, width, rng);
}

void MapSqueezeParams::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "w_a", w_a});
  out.push_back({prefix + "w_m", w_m});
  out.push_back({prefix + "w_mu", w_mu});
}

Tensor map_squeeze(const Tensor& a, const Tensor& m, const MapSqueezeParams& params, bool uniform,
                   Tensor* gamma_out) {
  if (a.rank() != 2 || m.rank() != 3 || m.dim(0) != a.dim(0) || m.dim(1) != a.dim(1) || m.dim(2) != a.dim(1)) {
    throw DimensionError("map_squeeze expects A [C,T] and M [C,T,T], got " + shape_str(a.shape()) + " and " +
                         shape_str(m.shape()));
  }
  const std::size_t c = a.dim(0), t = a.dim(1);
  if (uniform) {
    if (gamma_out != nullptr) *gamma_out = Tensor::full({t, t}, 1.0 / static_cast<double>(t));
    return mean(m, 2);
  }
  Tensor ai = reshape(matmul(transpose(a), params.w_a), {t, 1, c});  // W_A^T A_i
  Tensor mij = matmul(permute(m, {1, 2, 0}), params.w_m);            // W_M^T M_ij, [T, T, C]
  Tensor mu = reshape(matmul(add(ai, mij), params.w_mu), {t, t});
  Tensor gamma = softmax(mu, 1);
  if (gamma_out != nullptr) *gamma_out = gamma;
  return sum(mul(m, reshape(gamma, {1, t, t})), 2);
}

QuerySet::QuerySet(std::size_t count, std::size_t width, Rng& rng) {
  if (count == 0) throw ConfigError("query count omega must be >= 1");
  content = normal_parameter({count, width}, rng);
  position = uniform_parameter({count, width}, width, rng);
}

void QuerySet::collect(std::vector<NamedTensor>& out, const std::string& prefix) const {
  out.push_back({prefix + "content", content});
  out.push_back({prefix + "position", position});
}

Tensor sinusoidal_embedding(std::size_t length, std::size_t width) {
  std::vector<double> v(length * width);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(i - i % 2) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) / freq;
      v[pos * width + i] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from({length, width}, std::move(v));
}

Tensor intra_modal_decode(const Tensor& h, const QuerySet& queries, const DecoderStack& stack, bool positional,
                          AttentionTrace* trace, const std::string& name) {
  if (h.rank() != 2 || h.dim(0) != queries.content.dim(1)) {
    throw DimensionError("intra-modal decoding expects [" + std::to_string(queries.content.dim(1)) +
                         ",T] features, got " + shape_str(h.shape()));
  }
  Tensor values = transpose(h);
  Tensor keys = positional ? add(values, sinusoidal_embedding(h.dim(1), h.dim(0))) : values;
  return stack.forward(add(queries.content, queries.position), keys, values, trace, name);
}

std::pair<Tensor, Tensor> cross_modal_coattend(const Tensor& qa, const Tensor& qd, const DecoderStack& rgb_queries_ddm,
                                               const DecoderStack& ddm_queries_rgb, AttentionTrace* trace) {
  if (qa.shape() != qd.shape()) {
    throw DimensionError("co-attention inputs differ: " + shape_str(qa.shape()) + " vs " + shape_str(qd.shape()));
  }
  Tensor qd2 = rgb_queries_ddm.forward(qa, qd, qd, trace, "cross_rgb_to_ddm");
  Tensor qa2 = ddm_queries_rgb.forward(qd, qa, qa, trace, "cross_ddm_to_rgb");
  return {qa2, qd2};
}

}  // namespace ddmnet::attn
