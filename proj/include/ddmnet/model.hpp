#pragma once

// The full network: feature bank -> DDM -> progressive attention -> fused head.

#include <cstdint>
#include <string>
#include <vector>

#include "ddmnet/attention.hpp"
#include "ddmnet/checkpoint.hpp"
#include "ddmnet/ddm.hpp"
#include "ddmnet/feature_bank.hpp"
#include "ddmnet/head.hpp"

namespace ddmnet::model {

// none: full model.
// rgb-only: no DDM branch, no cross stage, alpha fixed at 1, no DDM loss.
// ddm-only: no RGB queries, no cross stage, alpha fixed at 0, no RGB loss.
// avg-pool: map-squeeze weights replaced by a plain temporal mean.
// intra-only: cross stage skipped (q'' = q').
// cross-only: intra stage skipped; co-attention runs on the raw T x C sequences.
enum class Ablation { None, RgbOnly, DdmOnly, AvgPool, IntraOnly, CrossOnly };

std::string to_string(Ablation ablation);
Ablation ablation_from_string(const std::string& name);

struct ModelConfig {
  bank::ClipSpec clip{4, 3};
  bank::BankConfig bank;
  ddm::Metric metric = ddm::Metric::Euclidean;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t intra_layers = 2;
  std::size_t cross_layers = 2;
  std::size_t queries = 5;  // omega
  Ablation ablation = Ablation::None;

  // Model width C; the deepest backbone stage feeds A directly.
  std::size_t width() const { return bank.widths.back(); }
  void validate() const;

  static ModelConfig desk();
  static ModelConfig paper();
};

struct Forward {
  Tensor l_a, l_d;
  head::Scores scores;
};

class DdmNet {
 public:
  DdmNet(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // frames [N, 3, H, W] -> m sequences [C_i, N]. Frames are independent,
  // so features of a clip can be gathered from a per-video cache.
  std::vector<Tensor> spatial_features(const Tensor& frames) const { return bank_.backbone_forward(frames); }
  // `trace` (optional) receives the raw DDM, map-squeeze weights and every
  // attention weight tensor.
  Forward forward_spatial(const std::vector<Tensor>& spatial, attn::AttentionTrace* trace = nullptr) const;
  Forward forward(const Tensor& clip, attn::AttentionTrace* trace = nullptr) const;

  head::LossTerms loss_terms() const;

  // Stable names and order; handles alias the live parameters.
  std::vector<NamedTensor> parameters() const;
  // Copies values for every parameter; names and shapes must match. Records
  // that are not parameters are ignored.
  void load_parameters(const std::vector<NamedTensor>& records);
  // Independent copy with the same values.
  DdmNet clone() const;

 private:
  ModelConfig config_;
  bank::FeatureBankNet bank_;
  ddm::DdmEmbedding embed_;
  attn::MapSqueezeParams squeeze_;
  attn::QuerySet queries_a_, queries_d_;
  attn::DecoderStack intra_a_, intra_d_, cross_a2d_, cross_d2a_;
  head::FusionHead head_;
};

}  // namespace ddmnet::model
