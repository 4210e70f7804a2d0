#include "ddmnet/model.hpp"

#include <algorithm>
#include <tuple>
#include <unordered_map>

#include "ddmnet/errors.hpp"

namespace ddmnet::model {

namespace {

constexpr Ablation kAblations[] = {Ablation::None,     Ablation::RgbOnly,   Ablation::DdmOnly,
                                   Ablation::AvgPool,  Ablation::IntraOnly, Ablation::CrossOnly};

}  // namespace

std::string to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::None: return "none";
    case Ablation::RgbOnly: return "rgb-only";
    case Ablation::DdmOnly: return "ddm-only";
    case Ablation::AvgPool: return "avg-pool";
    case Ablation::IntraOnly: return "intra-only";
    case Ablation::CrossOnly: return "cross-only";
  }
  return "?";
}

Ablation ablation_from_string(const std::string& name) {
  for (Ablation a : kAblations) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown ablation '" + name +
                    "' (none, rgb-only, ddm-only, avg-pool, intra-only, cross-only)");
}

void ModelConfig::validate() const {
  clip.validate();
  bank.validate();
  if (queries == 0) throw ConfigError("query count omega must be >= 1");
  if (heads == 0 || width() % heads != 0) {
    throw ConfigError("model width " + std::to_string(width()) + " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (width() < 2) throw ConfigError("model width must be >= 2");
  if (ffn_hidden == 0) throw ConfigError("FFN hidden width must be >= 1");
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.clip = {5, 6};
  c.intra_layers = 6;
  c.cross_layers = 6;
  return c;
}

DdmNet::DdmNet(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const std::size_t c = config_.width();
  Rng rng = make_rng(seed, "model-init");
  bank_ = bank::FeatureBankNet(config_.bank, rng);
  embed_ = ddm::DdmEmbedding(config_.bank.levels(), c, rng);
  squeeze_ = attn::MapSqueezeParams(c, rng);
  queries_a_ = attn::QuerySet(config_.queries, c, rng);
  queries_d_ = attn::QuerySet(config_.queries, c, rng);
  intra_a_ = attn::DecoderStack(config_.intra_layers, c, config_.heads, config_.ffn_hidden, rng);
  intra_d_ = attn::DecoderStack(config_.intra_layers, c, config_.heads, config_.ffn_hidden, rng);
  cross_a2d_ = attn::DecoderStack(config_.cross_layers, c, config_.heads, config_.ffn_hidden, rng);
  cross_d2a_ = attn::DecoderStack(config_.cross_layers, c, config_.heads, config_.ffn_hidden, rng);
  head_ = head::FusionHead(c, rng);
}

Forward DdmNet::forward_spatial(const std::vector<Tensor>& spatial, attn::AttentionTrace* trace) const {
  const Ablation mode = config_.ablation;
  const Tensor& a = spatial.back();
  Tensor qa, qd;
  if (mode == Ablation::RgbOnly) {
    qa = attn::intra_modal_decode(a, queries_a_, intra_a_, true, trace, "intra_rgb");
  } else {
    bank::FeatureBank fb = bank_.build(spatial);
    Tensor raw = ddm::build_raw_ddm(fb, config_.metric);
    Tensor gamma;
    Tensor m = embed_.forward(ddm::normalize_raw_ddm(raw, fb, config_.metric));
    Tensor d = attn::map_squeeze(a, m, squeeze_, mode == Ablation::AvgPool, trace != nullptr ? &gamma : nullptr);
    if (trace != nullptr) {
      trace->records.push_back({"ddm.raw", raw.detach()});
      trace->records.push_back({"squeeze.gamma", gamma.detach()});
    }
    if (mode == Ablation::CrossOnly) {
      std::tie(qa, qd) = attn::cross_modal_coattend(transpose(a), transpose(d), cross_a2d_, cross_d2a_, trace);
    } else {
      qd = attn::intra_modal_decode(d, queries_d_, intra_d_, true, trace, "intra_ddm");
      if (mode != Ablation::DdmOnly) {
        qa = attn::intra_modal_decode(a, queries_a_, intra_a_, true, trace, "intra_rgb");
        if (mode != Ablation::IntraOnly) std::tie(qa, qd) = attn::cross_modal_coattend(qa, qd, cross_a2d_, cross_d2a_, trace);
      }
    }
  }
  Forward out;
  out.l_a = qa.defined() ? head::modality_logits(qa, head_.fc_a_w, head_.fc_a_b) : Tensor::zeros({2});
  out.l_d = qd.defined() ? head::modality_logits(qd, head_.fc_d_w, head_.fc_d_b) : Tensor::zeros({2});
  Tensor alpha = mode == Ablation::RgbOnly   ? Tensor::from({1}, {1.0})
                 : mode == Ablation::DdmOnly ? Tensor::from({1}, {0.0})
                                             : head_.alpha();
  out.scores = head::fuse_and_score(out.l_a, out.l_d, alpha);
  return out;
}

Forward DdmNet::forward(const Tensor& clip, attn::AttentionTrace* trace) const {
  return forward_spatial(spatial_features(clip), trace);
}

head::LossTerms DdmNet::loss_terms() const {
  head::LossTerms terms;
  terms.ddm = config_.ablation != Ablation::RgbOnly;
  terms.rgb = config_.ablation != Ablation::DdmOnly;
  return terms;
}

std::vector<NamedTensor> DdmNet::parameters() const {
  std::vector<NamedTensor> out;
  bank_.collect(out, "bank.");
  embed_.collect(out, "ddm_embed.");
  squeeze_.collect(out, "squeeze.");
  queries_a_.collect(out, "queries_rgb.");
  queries_d_.collect(out, "queries_ddm.");
  intra_a_.collect(out, "intra_rgb.");
  intra_d_.collect(out, "intra_ddm.");
  cross_a2d_.collect(out, "cross_rgb_to_ddm.");
  cross_d2a_.collect(out, "cross_ddm_to_rgb.");
  head_.collect(out, "head.");
  return out;
}

void DdmNet::load_parameters(const std::vector<NamedTensor>& records) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& r : records) by_name[r.name] = &r.tensor;
  for (auto& p : parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint is missing parameter '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw DataError("checkpoint parameter '" + p.name + "' has shape " + shape_str(it->second->shape()) +
                      ", model expects " + shape_str(p.tensor.shape()));
    }
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), p.tensor.mutable_values().begin());
  }
}

DdmNet DdmNet::clone() const {
  DdmNet copy(config_, 0);
  copy.load_parameters(parameters());
  return copy;
}

}  // namespace ddmnet::model
