// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
// below. Arguments select criteria by number (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ddmnet/attention.hpp"
#include "ddmnet/ddm.hpp"
#include "ddmnet/evaluation.hpp"
#include "ddmnet/head.hpp"
#include "ddmnet/model.hpp"
#include "ddmnet/synth.hpp"
#include "ddmnet/training.hpp"
#include "gradcheck.hpp"
#include "model_fixtures.hpp"

using namespace ddmnet;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr int kGradSeeds = 20;
constexpr double kGradSeconds = 120.0;
constexpr int kMatchInstances = 500;
constexpr int kDdmBanks = 100;
constexpr double kDdmTol = 1e-9;
constexpr double kSoftmaxTol = 1e-9;
// gamma_ij = 1/T times M summed in order versus sum(M) / T: round-off only.
constexpr double kUniformSqueezeTol = 1e-12;
constexpr double kLearnF1 = 0.85;
constexpr std::size_t kLearnEpochs = 20;
constexpr double kLearnSeconds = 15 * 60.0;
constexpr int kAblationSeeds = 3;
constexpr int kAblationWins = 2;
constexpr double kOperatorSpread = 0.05;
constexpr std::size_t kCompareEpochs = 15;
constexpr double kAblationJitter = 0.01;
constexpr double kPostprocessMs = 10.0;
constexpr int kPostprocessSequences = 1000;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---- 1. gradients -------------------------------------------------------

using Probe = std::function<gradcheck::Report(std::mt19937_64&, unsigned)>;

Tensor weighted_sum(const Tensor& y, std::mt19937_64& rng) {
  return sum(mul(y, gradcheck::random_const(y.shape(), rng)));
}

gradcheck::Report probe_op(std::mt19937_64& rng, unsigned seed, std::vector<Shape> shapes,
                           std::function<Tensor(const std::vector<Tensor>&)> op, double lo = -1.0, double hi = 1.0) {
  std::vector<Tensor> xs;
  std::vector<NamedTensor> leaves;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    xs.push_back(gradcheck::random_leaf(shapes[i], rng, lo, hi));
    leaves.push_back({"x" + std::to_string(i), xs.back()});
  }
  Tensor w = gradcheck::random_const(op(xs).shape(), rng);
  return gradcheck::check([&] { return sum(mul(op(xs), w)); }, leaves, kGradEps, 0, seed);
}

std::vector<std::pair<std::string, Probe>> primitive_probes() {
  using V = const std::vector<Tensor>&;
  std::vector<std::pair<std::string, Probe>> p;
  auto add_probe = [&](std::string name, std::vector<Shape> shapes, std::function<Tensor(V)> op, double lo = -1.0,
                       double hi = 1.0) {
    p.push_back({name, [=](std::mt19937_64& rng, unsigned s) { return probe_op(rng, s, shapes, op, lo, hi); }});
  };
  add_probe("add", {{3, 4}, {4}}, [](V x) { return add(x[0], x[1]); });
  add_probe("sub", {{3, 4}, {3, 1}}, [](V x) { return sub(x[0], x[1]); });
  add_probe("mul", {{2, 3, 4}, {3, 4}}, [](V x) { return mul(x[0], x[1]); });
  add_probe("div", {{3, 4}, {4}}, [](V x) { return div(x[0], x[1]); }, 0.5, 1.5);
  add_probe("neg/scale/add_scalar", {{5}}, [](V x) { return add_scalar(scale(neg(x[0]), 1.7), 0.3); });
  add_probe("relu", {{4, 5}}, [](V x) { return relu(x[0]); });
  add_probe("square", {{4, 5}}, [](V x) { return square(x[0]); });
  add_probe("sqrt", {{4, 5}}, [](V x) { return sqrt(x[0]); }, 0.1, 1.0);
  add_probe("exp", {{4, 5}}, [](V x) { return exp(x[0]); });
  add_probe("log", {{4, 5}}, [](V x) { return log(x[0]); }, 0.1, 1.0);
  add_probe("sigmoid", {{4, 5}}, [](V x) { return sigmoid(x[0]); });
  add_probe("abs", {{4, 5}}, [](V x) { return abs(x[0]); });
  add_probe("clamp", {{4, 5}}, [](V x) { return clamp(x[0], -0.5, 0.5); });
  add_probe("sum", {{3, 4}}, [](V x) { return add(sum(x[0]), sum(x[0], 1)); });
  add_probe("mean", {{3, 4}}, [](V x) { return add(mean(x[0]), mean(x[0], 0)); });
  add_probe("max", {{3, 4}}, [](V x) { return max(x[0], 1); });
  add_probe("reshape/permute", {{2, 3, 4}}, [](V x) { return reshape(permute(x[0], {2, 0, 1}), {4, 6}); });
  add_probe("transpose", {{2, 3, 4}}, [](V x) { return transpose(x[0]); });
  add_probe("concat", {{2, 3}, {2, 2}}, [](V x) { return concat({x[0], x[1]}, 1); });
  add_probe("slice/index_select", {{5, 3}},
            [](V x) { return add(slice(x[0], 0, 1, 4), index_select(x[0], 0, {4, 4, 0})); });
  add_probe("broadcast", {{1, 3}}, [](V x) { return broadcast_to(x[0], {4, 3}); });
  add_probe("matmul", {{3, 4}, {4, 2}}, [](V x) { return matmul(x[0], x[1]); });
  add_probe("matmul batched", {{2, 3, 4}, {4, 5}}, [](V x) { return matmul(x[0], x[1]); });
  add_probe("softmax", {{3, 5}}, [](V x) { return softmax(x[0], 1); });
  add_probe("layer_norm", {{3, 6}, {6}, {6}}, [](V x) { return layer_norm(x[0], x[1], x[2]); });
  add_probe("conv1d", {{2, 3, 9}, {4, 3, 3}, {4}}, [](V x) { return conv1d(x[0], x[1], x[2], 2, 2); });
  add_probe("conv2d", {{1, 1, 5, 5}, {1, 1, 3, 3}, {1}}, [](V x) { return conv2d(x[0], x[1], x[2], 1, 1); });
  add_probe("avg_pool2x2", {{2, 3, 5, 4}}, [](V x) { return avg_pool2x2(x[0]); });
  for (auto metric : {ddm::Metric::Euclidean, ddm::Metric::Manhattan, ddm::Metric::Chebyshev, ddm::Metric::Cosine}) {
    add_probe("ddm " + ddm::to_string(metric), {{4, 6}},
              [metric](V x) { return ddm::pairwise_distance_matrix(x[0], metric); });
  }

  p.push_back({"map_squeeze", [](std::mt19937_64& rng, unsigned s) {
                 Rng r(rng());
                 attn::MapSqueezeParams params(6, r);
                 Tensor a = gradcheck::random_leaf({6, 5}, rng), m = gradcheck::random_leaf({6, 5, 5}, rng);
                 std::vector<NamedTensor> leaves{{"a", a}, {"m", m}};
                 params.collect(leaves, "sq.");
                 Tensor w = gradcheck::random_const({6, 5}, rng);
                 return gradcheck::check([&] { return sum(mul(attn::map_squeeze(a, m, params), w)); }, leaves,
                                         kGradEps, 0, s);
               }});
  p.push_back({"decoder layer", [](std::mt19937_64& rng, unsigned s) {
                 Rng r(rng());
                 attn::DecoderLayerParams params(8, 2, 12, r);
                 Tensor q = gradcheck::random_leaf({3, 8}, rng), k = gradcheck::random_leaf({5, 8}, rng);
                 Tensor v = gradcheck::random_leaf({5, 8}, rng);
                 std::vector<NamedTensor> leaves{{"q", q}, {"k", k}, {"v", v}};
                 params.collect(leaves, "layer.");
                 Tensor w = gradcheck::random_const({3, 8}, rng);
                 return gradcheck::check([&] { return sum(mul(attn::decoder_layer(q, k, v, params), w)); }, leaves,
                                         kGradEps, 4, s, true);
               }});
  p.push_back({"head + loss", [](std::mt19937_64& rng, unsigned s) {
                 Rng r(rng());
                 head::FusionHead h(6, r);
                 Tensor qa = gradcheck::random_leaf({3, 6}, rng), qd = gradcheck::random_leaf({3, 6}, rng);
                 std::vector<NamedTensor> leaves{{"qa", qa}, {"qd", qd}};
                 h.collect(leaves, "head.");
                 const int label[1] = {static_cast<int>(s % 2)};
                 return gradcheck::check(
                     [&] {
                       auto sc = head::fuse_and_score(head::modality_logits(qa, h.fc_a_w, h.fc_a_b),
                                                      head::modality_logits(qd, h.fc_d_w, h.fc_d_b), h.alpha());
                       return head::complete_loss(reshape(sc.p, {1}), reshape(sc.p_a, {1}), reshape(sc.p_d, {1}),
                                                  label);
                     },
                     leaves, kGradEps, 0, s);
               }});
  return p;
}

Tensor random_clip(std::size_t t, std::size_t hw, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  std::vector<double> v(t * 3 * hw * hw);
  for (double& x : v) x = d(rng);
  return Tensor::from({t, 3, hw, hw}, std::move(v));
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0, kinks = 0;
  auto note = [&](const std::string& what, int seed, const gradcheck::Report& r) {
    checked += r.checked;
    kinks += r.kinks;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      where = what + " seed " + std::to_string(seed) + " " + r.worst;
    }
  };
  const auto probes = primitive_probes();
  for (int seed = 0; seed < kGradSeeds; ++seed) {
    for (const auto& [name, probe] : probes) {
      std::mt19937_64 rng(1000 * seed + std::hash<std::string>{}(name) % 997);
      note(name, seed, probe(rng, static_cast<unsigned>(seed)));
    }
    // Composite model on the T = 5, C = 16 toy configuration.
    model::DdmNet net(fixtures::toy_model_config(), 500 + seed);
    std::mt19937_64 rng(seed);
    const Tensor clip = random_clip(5, 8, rng);
    const int label[1] = {seed % 2};
    note("full model", seed,
         gradcheck::check(
             [&] {
               auto f = net.forward(clip);
               return head::complete_loss(f.scores.p, f.scores.p_a, f.scores.p_d, label, net.loss_terms());
             },
             net.parameters(), kGradEps, 3, static_cast<unsigned>(seed), true));
  }
  const double secs = seconds_since(t0);
  char buf[512];
  std::snprintf(buf, sizeof buf, "max rel err %.2e over %zu probes, %zu ReLU-kink probes bracketed, %.1fs%s%s",
                worst, checked, kinks, secs, where.empty() ? "" : "; worst: ", where.c_str());
  return {worst <= kGradTol && kinks * 100 <= checked && secs < kGradSeconds, buf};
}

// ---- 2. matching oracle -------------------------------------------------

std::size_t brute_force_tp(const std::vector<std::size_t>& p, const std::vector<std::size_t>& g, std::size_t e,
                           double thr) {
  std::vector<bool> used(g.size(), false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
    if (i == p.size()) return 0;
    std::size_t best = go(i + 1);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (used[j] || std::fabs(double(p[i]) - double(g[j])) / double(e) > thr) continue;
      used[j] = true;
      best = std::max(best, 1 + go(i + 1));
      used[j] = false;
    }
    return best;
  };
  return go(0);
}

Outcome criterion_matching() {
  std::mt19937_64 rng(2);
  int mismatches = 0, comparisons = 0;
  for (int trial = 0; trial < kMatchInstances; ++trial) {
    const std::size_t e = 1 + rng() % 200;
    std::vector<std::size_t> p(rng() % 7), g(rng() % 7);
    for (auto& x : p) x = rng() % e;
    for (auto& x : g) x = rng() % e;
    for (double thr : eval::default_thresholds()) {
      ++comparisons;
      mismatches += eval::match_predictions(p, g, e, thr) != brute_force_tp(p, g, e, thr);
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches in " + std::to_string(comparisons) +
                               " instance/threshold pairs"};
}

// ---- 3. DDM structure ---------------------------------------------------

Outcome criterion_ddm() {
  std::mt19937_64 rng(3);
  double diag = 0.0, asym = 0.0, triangle = 0.0;
  for (int b = 0; b < kDdmBanks; ++b) {
    const std::size_t levels = 1 + rng() % 4, c = 1 + rng() % 8, t = 2 + rng() % 10;
    bank::FeatureBank fb;
    fb.m = levels;
    fb.n = 1;
    for (std::size_t l = 0; l < levels; ++l) fb.levels.push_back(gradcheck::random_const({c, t}, rng));
    // Occasional exact repeats and zero frames exercise the edge conventions.
    if (b % 5 == 0) {
      auto v = fb.levels[0].mutable_values();
      for (std::size_t ch = 0; ch < c; ++ch) v[ch * t + t - 1] = b % 10 == 0 ? 0.0 : v[ch * t];
    }
    for (auto metric : {ddm::Metric::Euclidean, ddm::Metric::Manhattan, ddm::Metric::Chebyshev, ddm::Metric::Cosine}) {
      const Tensor raw = ddm::build_raw_ddm(fb, metric);
      auto d = raw.values();
      for (std::size_t l = 0; l < levels; ++l) {
        auto at = [&](std::size_t i, std::size_t j) { return d[(l * t + i) * t + j]; };
        for (std::size_t i = 0; i < t; ++i) {
          diag = std::max(diag, std::fabs(at(i, i)));
          for (std::size_t j = 0; j < t; ++j) {
            asym = std::max(asym, std::fabs(at(i, j) - at(j, i)));
            if (metric == ddm::Metric::Cosine) continue;
            for (std::size_t k = 0; k < t; ++k) triangle = std::max(triangle, at(i, k) - at(i, j) - at(j, k));
          }
        }
      }
    }
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "max |diag| %.1e, max asymmetry %.1e, max triangle excess %.1e", diag, asym,
                triangle);
  return {diag <= kDdmTol && asym <= kDdmTol && triangle <= kDdmTol, buf};
}

// ---- 4. attention normalization -----------------------------------------

Outcome criterion_attention() {
  double worst_row = 0.0, avg_gap = 0.0;
  std::size_t rows = 0;
  auto rows_of = [&](const Tensor& w) {
    const std::size_t k = w.dim(-1);
    auto v = w.values();
    for (std::size_t r = 0; r < w.numel() / k; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += v[r * k + j];
      worst_row = std::max(worst_row, std::fabs(s - 1.0));
      ++rows;
    }
  };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    model::DdmNet net(fixtures::toy_model_config(), seed);
    std::mt19937_64 rng(seed);
    attn::AttentionTrace trace;
    net.forward(random_clip(5, 8, rng), &trace);
    for (const auto& r : trace.records) {
      if (r.name != "ddm.raw") rows_of(r.tensor);
    }
    // W_mu = 0 makes every score equal, so gamma is exactly uniform.
    Rng prng(seed);
    attn::MapSqueezeParams params(6, prng);
    for (double& x : params.w_mu.mutable_values()) x = 0.0;
    const std::size_t t = 7;
    Tensor a = gradcheck::random_const({6, t}, rng), m = gradcheck::random_const({6, t, t}, rng);
    Tensor d = attn::map_squeeze(a, m, params), avg = mean(m, 2);
    for (std::size_t i = 0; i < d.numel(); ++i) avg_gap = std::max(avg_gap, std::fabs(d.values()[i] - avg.values()[i]));
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu weight rows, max |sum-1| %.1e; W_mu=0 vs temporal mean max gap %.1e", rows,
                worst_row, avg_gap);
  return {worst_row <= kSoftmaxTol && avg_gap <= kUniformSqueezeTol, buf};
}

// ---- shared training harness --------------------------------------------

struct RunResult {
  double f1_005 = 0.0;
  double avg_f1 = 0.0;
  // Best over the evaluated epochs (validation-based model selection).
  double best_f1_005 = 0.0;
  double best_avg_f1 = 0.0;
  std::size_t epochs = 0;
  double seconds = 0.0;
};

eval::EvalReport evaluate(const model::DdmNet& net, const synth::Dataset& data, std::size_t stride) {
  std::vector<eval::VideoPrediction> preds;
  for (const auto* v : data.split("val")) {
    auto s = eval::score_video(net, *v, stride);
    eval::VideoPrediction p{v->id, {}, {}};
    for (std::size_t i : eval::post_process(s, {})) {
      p.positions.push_back(i * stride);
      p.scores.push_back(s[i]);
    }
    preds.push_back(std::move(p));
  }
  return eval::compute_report(preds, data);
}

// Trains and evaluates after every epoch; `stop` may end the run early.
RunResult train_run(const synth::Dataset& data, const model::ModelConfig& mc, train::TrainConfig tc,
                    std::uint64_t seed, const std::function<bool(const RunResult&)>& stop = {}) {
  const auto t0 = Clock::now();
  tc.seed = seed;
  model::DdmNet net(mc, seed);
  train::Trainer trainer(net, tc);
  RunResult result;
  const auto videos = data.split("train");
  // The stop predicate unwinds out of the trainer's epoch loop.
  struct Stop {};
  try {
    trainer.run(videos, [&](std::size_t epoch, const std::vector<train::LossRecord>&) {
      auto report = evaluate(net, data, tc.eval_stride);
      result.f1_005 = report.rows[0].f1;
      result.avg_f1 = report.avg_f1;
      result.best_f1_005 = std::max(result.best_f1_005, result.f1_005);
      result.best_avg_f1 = std::max(result.best_avg_f1, result.avg_f1);
      result.epochs = epoch + 1;
      result.seconds = seconds_since(t0);
      std::printf("    epoch %2zu  F1@0.05 %.4f  avg F1 %.4f  %.0fs\n", epoch + 1, result.f1_005, result.avg_f1,
                  result.seconds);
      std::fflush(stdout);
      if (stop && stop(result)) throw Stop{};
    });
  } catch (const Stop&) {
  }
  result.seconds = seconds_since(t0);
  return result;
}

// ---- 5. learnability ----------------------------------------------------

Outcome criterion_learnability() {
  synth::GenSpec gs;  // 64 train / 32 val, E in [90, 110], jitter-free
  const auto t0 = Clock::now();
  synth::Dataset data = synth::generate_dataset(gs);
  train::TrainConfig tc = train::TrainConfig::desk();
  tc.epochs = kLearnEpochs;
  double best = 0.0;
  std::size_t best_epoch = 0;
  train_run(data, model::ModelConfig::desk(), tc, 1, [&](const RunResult& r) {
    if (r.f1_005 > best) best = r.f1_005, best_epoch = r.epochs;
    return r.f1_005 >= kLearnF1 || seconds_since(t0) >= kLearnSeconds;
  });
  const double secs = seconds_since(t0);
  char buf[256];
  std::snprintf(buf, sizeof buf, "best val F1@0.05 %.4f at epoch %zu (target %.2f within %zu epochs), %.0fs", best,
                best_epoch, kLearnF1, kLearnEpochs, secs);
  return {best >= kLearnF1 && secs < kLearnSeconds, buf};
}

// The comparative runs use the learnability data and a shorter schedule;
// each run is scored at its best validation epoch.
synth::GenSpec comparison_data(double jitter) {
  synth::GenSpec gs;
  gs.jitter = jitter;
  return gs;
}

train::TrainConfig comparison_train() {
  train::TrainConfig tc = train::TrainConfig::desk();
  tc.epochs = kCompareEpochs;
  return tc;
}

// ---- 6. ablation direction ----------------------------------------------

Outcome criterion_ablation() {
  synth::Dataset data = synth::generate_dataset(comparison_data(kAblationJitter));
  int wins = 0;
  std::string detail;
  for (int s = 0; s < kAblationSeeds; ++s) {
    model::ModelConfig fused = model::ModelConfig::desk(), rgb = fused;
    rgb.ablation = model::Ablation::RgbOnly;
    const double f = train_run(data, fused, comparison_train(), 10 + s).best_f1_005;
    const double r = train_run(data, rgb, comparison_train(), 10 + s).best_f1_005;
    wins += f >= r;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%sseed %d fused %.3f vs rgb %.3f", s ? "; " : "", 10 + s, f, r);
    detail += buf;
  }
  return {wins >= kAblationWins, std::to_string(wins) + "/" + std::to_string(kAblationSeeds) + " wins (" + detail + ")"};
}

// ---- 7. operator robustness ---------------------------------------------

Outcome criterion_operators() {
  synth::Dataset data = synth::generate_dataset(comparison_data(0.0));
  std::vector<double> scores;
  std::string detail;
  for (auto metric : {ddm::Metric::Euclidean, ddm::Metric::Manhattan, ddm::Metric::Cosine}) {
    model::ModelConfig mc = model::ModelConfig::desk();
    mc.metric = metric;
    scores.push_back(train_run(data, mc, comparison_train(), 20).best_avg_f1);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%s %.3f", detail.empty() ? "" : ", ", ddm::to_string(metric).c_str(),
                  scores.back());
    detail += buf;
  }
  const double spread = *std::max_element(scores.begin(), scores.end()) - *std::min_element(scores.begin(), scores.end());
  char buf[64];
  std::snprintf(buf, sizeof buf, "; spread %.3f (limit %.2f)", spread, kOperatorSpread);
  return {spread <= kOperatorSpread, "avg F1 " + detail + buf};
}

// ---- 8. post-processing -------------------------------------------------

std::vector<std::size_t> scan_oracle(const std::vector<double>& s, double theta, std::size_t window) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < theta) continue;
    bool keep = true;
    for (std::size_t j = i >= window ? i - window : 0; j < i; ++j) keep &= s[i] > s[j];
    for (std::size_t j = i + 1; j <= i + window && j < s.size(); ++j) keep &= s[i] >= s[j];
    if (keep) out.push_back(i);
  }
  return out;
}

Outcome criterion_postprocess() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> big(10000);
  for (double& x : big) x = u(rng);
  double best_ms = 1e9;
  for (int rep = 0; rep < 5; ++rep) {
    const auto t0 = Clock::now();
    auto idx = eval::post_process(big, {});
    best_ms = std::min(best_ms, seconds_since(t0) * 1e3);
    if (idx.empty()) best_ms = 1e9;
  }
  int mismatches = 0;
  for (int trial = 0; trial < kPostprocessSequences; ++trial) {
    std::vector<double> s(1 + rng() % 60);
    for (double& x : s) x = trial % 2 ? double(rng() % 5) / 4.0 : u(rng);
    const double theta = 0.05 + 0.9 * u(rng);
    const std::size_t window = 1 + rng() % 6;
    mismatches += eval::post_process(s, {theta, window}) != scan_oracle(s, theta, window);
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "10k scores in %.3f ms (limit %.0f); %d/%d oracle mismatches", best_ms,
                kPostprocessMs, mismatches, kPostprocessSequences);
  return {best_ms < kPostprocessMs && mismatches == 0, buf};
}

// ---- 9. determinism -----------------------------------------------------

struct Artifacts {
  std::string checkpoint, predictions, report;
};

Artifacts pipeline(std::size_t workers) {
  synth::GenSpec gs;
  gs.train_videos = 6;
  gs.val_videos = 3;
  gs.height = gs.width = 16;
  gs.jitter = 0.02;
  synth::Dataset data = synth::generate_dataset(gs, workers);
  model::ModelConfig mc = model::ModelConfig::desk();
  mc.bank.widths = {8, 16};
  mc.intra_layers = mc.cross_layers = 1;
  train::TrainConfig tc = train::TrainConfig::desk();
  tc.epochs = 2;
  tc.batch_size = 5;
  tc.workers = workers;
  model::DdmNet net(mc, 9);
  train::Trainer trainer(net, tc);
  trainer.run(data.split("train"));
  std::vector<eval::VideoPrediction> preds;
  for (const auto* v : data.split("val")) {
    auto s = eval::score_video(net, *v, tc.eval_stride);
    eval::VideoPrediction p{v->id, {}, {}};
    for (std::size_t i : eval::post_process(s, {0.3, 5})) {
      p.positions.push_back(i * tc.eval_stride);
      p.scores.push_back(s[i]);
    }
    preds.push_back(std::move(p));
  }
  return {encode_checkpoint(trainer.checkpoint_records()), eval::encode_predictions(preds),
          eval::format_report_csv(eval::compute_report(preds, data))};
}

Outcome criterion_determinism() {
  const Artifacts a = pipeline(1), b = pipeline(1), c = pipeline(3);
  const bool same_runs = a.checkpoint == b.checkpoint && a.predictions == b.predictions && a.report == b.report;
  const bool same_workers = a.checkpoint == c.checkpoint && a.predictions == c.predictions && a.report == c.report;
  return {same_runs && same_workers, std::string("repeat run ") + (same_runs ? "identical" : "DIFFERS") +
                                         ", 1 vs 3 workers " + (same_workers ? "identical" : "DIFFERS")};
}

// ---- 10. F1 monotonicity ------------------------------------------------

Outcome criterion_monotonicity() {
  std::mt19937_64 rng(10);
  int violations = 0, reports = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    synth::Dataset ds;
    std::vector<eval::VideoPrediction> preds;
    const int videos = 1 + static_cast<int>(rng() % 5);
    for (int v = 0; v < videos; ++v) {
      synth::VideoRecord rec;
      rec.id = "v" + std::to_string(v);
      rec.num_frames = 20 + rng() % 180;
      std::vector<std::size_t> g(rng() % 6), p(rng() % 8);
      for (auto& x : g) x = 1 + rng() % (rec.num_frames - 1);
      for (auto& x : p) x = rng() % rec.num_frames;
      rec.boundaries = g;
      ds.videos.push_back(rec);
      preds.push_back({rec.id, p, std::vector<double>(p.size(), 0.5)});
    }
    for (auto mode : {eval::MatchMode::Optimal, eval::MatchMode::Greedy}) {
      for (auto agg : {eval::Aggregation::Global, eval::Aggregation::PerVideo}) {
        auto r = eval::compute_report(preds, ds, eval::default_thresholds(), mode, agg);
        ++reports;
        for (std::size_t k = 1; k < r.rows.size(); ++k) violations += r.rows[k].f1 < r.rows[k - 1].f1;
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " decreasing steps across " + std::to_string(reports) +
                               " reports (optimal/greedy x global/per-video)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"metric-oracle equivalence", criterion_matching},
      {"DDM structural invariants", criterion_ddm},
      {"attention normalization", criterion_attention},
      {"end-to-end learnability", criterion_learnability},
      {"ablation direction (RGB+DDM >= RGB)", criterion_ablation},
      {"operator robustness", criterion_operators},
      {"post-processing throughput", criterion_postprocess},
      {"determinism", criterion_determinism},
      {"F1 monotonicity", criterion_monotonicity},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    std::printf("[%d] %s ...\n", number, criteria[i].first.c_str());
    std::fflush(stdout);
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", number, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
