#include "ddmnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "ddmnet/errors.hpp"
#include "ddmnet/parallel.hpp"

namespace ddmnet::train {

std::size_t num_positions(std::size_t num_frames, std::size_t stride) {
  if (stride == 0) throw ConfigError("evaluation stride must be >= 1");
  return (num_frames + stride - 1) / stride;
}

std::vector<int> assign_labels(std::span<const std::size_t> boundaries, std::size_t num_frames, std::size_t stride) {
  const std::size_t n = num_positions(num_frames, stride);
  std::vector<int> labels(n, 0);
  const double half = static_cast<double>(stride) / 2.0;
  for (std::size_t b : boundaries) {
    if (b >= num_frames) {
      throw DataError("boundary " + std::to_string(b) + " outside video of " + std::to_string(num_frames) +
                      " frames");
    }
    // p - half < b <= p + half  <=>  b - half <= p < b + half
    const double bd = static_cast<double>(b);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = static_cast<double>(i * stride);
      if (p - half < bd && bd <= p + half) labels[i] = 1;
    }
  }
  return labels;
}

std::vector<std::size_t> balanced_sample(std::span<const int> labels, std::size_t ratio, Rng& rng) {
  if (ratio == 0) throw ConfigError("sampler ratio r must be >= 1");
  std::vector<std::size_t> out;
  std::size_t i = 0;
  while (i < labels.size()) {
    if (labels[i] != 0) {
      out.push_back(i++);
      continue;
    }
    std::size_t end = i;
    while (end < labels.size() && labels[end] == 0) ++end;
    for (std::size_t chunk = i; chunk < end; chunk += ratio) {
      const std::size_t len = std::min(ratio, end - chunk);
      out.push_back(chunk + std::uniform_int_distribution<std::size_t>(0, len - 1)(rng));
    }
    i = end;
  }
  return out;
}

Adam::Adam(AdamConfig config, const std::vector<NamedTensor>& params) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(const std::vector<NamedTensor>& params, const std::vector<std::vector<double>>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ContractError("optimizer built for " + std::to_string(m_.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != m_[k].size()) throw ContractError("gradient size mismatch for '" + params[k].name + "'");
    for (std::size_t i = 0; i < grads[k].size(); ++i) {
      if (!std::isfinite(grads[k][i])) {
        throw NumericError("non-finite gradient in parameter '" + params[k].name + "' at index " +
                           std::to_string(i) + " (value " + std::to_string(grads[k][i]) + ")");
      }
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].tensor;
    auto values = p.mutable_values();
    auto& m = m_[k];
    auto& v = v_[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      values[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::export_state(const std::vector<NamedTensor>& params, std::vector<NamedTensor>& out) const {
  for (std::size_t k = 0; k < params.size(); ++k) {
    out.push_back({"adam.m/" + params[k].name, Tensor::from(params[k].tensor.shape(), m_[k])});
    out.push_back({"adam.v/" + params[k].name, Tensor::from(params[k].tensor.shape(), v_[k])});
  }
  out.push_back({"adam.step", Tensor::from({1}, {static_cast<double>(steps_)})});
}

void Adam::import_state(const std::vector<NamedTensor>& params, const std::vector<NamedTensor>& records) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& r : records) by_name[r.name] = &r.tensor;
  auto fetch = [&](const std::string& name, std::size_t numel) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint lacks optimizer record '" + name + "'");
    if (it->second->numel() != numel) throw DataError("optimizer record '" + name + "' has the wrong size");
    auto v = it->second->values();
    return std::vector<double>(v.begin(), v.end());
  };
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = fetch("adam.m/" + params[k].name, params[k].tensor.numel());
    v_[k] = fetch("adam.v/" + params[k].name, params[k].tensor.numel());
  }
  steps_ = static_cast<std::uint64_t>(fetch("adam.step", 1)[0]);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (eval_stride == 0) throw ConfigError("evaluation stride must be >= 1");
  if (sampler_ratio == 0) throw ConfigError("sampler ratio r must be >= 1");
  if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("Adam epsilon must be > 0");
}

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.adam.lr = 1e-5;
  c.batch_size = 32;
  c.preset = "paper";
  return c;
}

std::string loss_csv(const std::vector<LossRecord>& records) {
  std::string out = "step,epoch,loss\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%llu,%zu,%.17g\n", static_cast<unsigned long long>(r.step), r.epoch, r.loss);
    out += buf;
  }
  return out;
}

std::vector<Sample> epoch_samples(const std::vector<const synth::VideoRecord*>& videos, const TrainConfig& config,
                                  std::size_t epoch) {
  Rng rng = make_rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)), "epoch");
  std::vector<Sample> samples;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto labels = assign_labels(videos[v]->boundaries, videos[v]->num_frames, config.eval_stride);
    for (std::size_t pos : balanced_sample(labels, config.sampler_ratio, rng)) samples.push_back({v, pos, labels[pos]});
  }
  std::shuffle(samples.begin(), samples.end(), rng);
  return samples;
}

Trainer::Trainer(model::DdmNet& model, TrainConfig config)
    : model_(model), config_(std::move(config)), adam_(config_.adam, model.parameters()) {
  config_.validate();
  for (std::size_t w = 1; w < config_.workers; ++w) replicas_.push_back(model_.clone());
}

double Trainer::step(const std::vector<const synth::VideoRecord*>& videos, std::span<const Sample> batch) {
  const auto params = model_.parameters();
  for (auto& r : replicas_) r.load_parameters(params);
  const std::size_t b = batch.size();
  const double inv = 1.0 / static_cast<double>(b);
  const head::LossTerms terms = model_.loss_terms();
  std::vector<double> losses(b);
  std::vector<std::vector<std::vector<double>>> grads(b);
  const std::size_t workers = std::max<std::size_t>(1, std::min(config_.workers, b));

  parallel_for(workers, workers, [&](std::size_t w) {
    const model::DdmNet& net = w == 0 ? model_ : replicas_[w - 1];
    const auto leaves = net.parameters();
    for (std::size_t i = w; i < b; i += workers) {
      const Sample& s = batch[i];
      const synth::VideoRecord& video = *videos[s.video];
      Tensor clip = bank::sample_clip(video, s.position * config_.eval_stride, net.config().clip);
      model::Forward f = net.forward(clip);
      const int label[1] = {s.label};
      Tensor loss = head::complete_loss(f.scores.p, f.scores.p_a, f.scores.p_d, label, terms);
      losses[i] = loss.item();
      if (!std::isfinite(losses[i])) {
        throw NumericError("non-finite loss on video '" + video.id + "' position " + std::to_string(s.position));
      }
      backward(scale(loss, inv));
      auto& g = grads[i];
      g.resize(leaves.size());
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        Tensor t = leaves[k].tensor;
        if (t.has_grad()) {
          g[k].assign(t.grad().begin(), t.grad().end());
        } else {
          g[k].assign(t.numel(), 0.0);
        }
        t.zero_grad();
      }
    }
  });

  // Ordered reduction keeps the result independent of the worker count.
  std::vector<std::vector<double>> total(params.size());
  double loss_sum = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) total[k].assign(params[k].tensor.numel(), 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    loss_sum += losses[i];
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t j = 0; j < total[k].size(); ++j) total[k][j] += grads[i][k][j];
    }
    grads[i].clear();
  }
  adam_.step(params, total);
  return loss_sum * inv;
}

void Trainer::run(const std::vector<const synth::VideoRecord*>& videos,
                  const std::function<void(std::size_t, const std::vector<LossRecord>&)>& on_epoch) {
  if (videos.empty()) throw ConfigError("training set is empty");
  for (std::size_t epoch = epochs_done_; epoch < config_.epochs; ++epoch) {
    const auto samples = epoch_samples(videos, config_, epoch);
    if (samples.empty()) throw ConfigError("training set yields no samples");
    std::vector<LossRecord> records;
    for (std::size_t start = 0; start < samples.size(); start += config_.batch_size) {
      const std::size_t len = std::min(config_.batch_size, samples.size() - start);
      const double loss = step(videos, std::span<const Sample>(samples).subspan(start, len));
      records.push_back({adam_.steps(), epoch, loss});
    }
    epochs_done_ = epoch + 1;
    if (on_epoch) on_epoch(epoch, records);
  }
}

std::vector<NamedTensor> Trainer::checkpoint_records() const {
  auto params = model_.parameters();
  std::vector<NamedTensor> out;
  for (const auto& p : params) out.push_back({p.name, p.tensor.detach()});
  adam_.export_state(params, out);
  out.push_back({"train.epoch", Tensor::from({1}, {static_cast<double>(epochs_done_)})});
  return out;
}

void Trainer::restore(const std::vector<NamedTensor>& records) {
  model_.load_parameters(records);
  adam_.import_state(model_.parameters(), records);
  auto it = std::find_if(records.begin(), records.end(), [](const NamedTensor& r) { return r.name == "train.epoch"; });
  if (it == records.end()) throw DataError("checkpoint lacks 'train.epoch'; it cannot be resumed");
  epochs_done_ = static_cast<std::size_t>(it->tensor.item());
}

}  // namespace ddmnet::train
