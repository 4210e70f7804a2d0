#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <map>

#include "ddmnet/errors.hpp"
#include "ddmnet/training.hpp"
#include "model_fixtures.hpp"

using namespace ddmnet;
using namespace ddmnet::train;

TEST(AssignLabels, Examples) {
  std::vector<std::size_t> b{6};
  EXPECT_EQ(assign_labels(b, 12, 3), (std::vector<int>{0, 0, 1, 0}));
  EXPECT_EQ(assign_labels(std::vector<std::size_t>{}, 12, 3), (std::vector<int>{0, 0, 0, 0}));
  std::vector<std::size_t> five{5};
  EXPECT_EQ(assign_labels(five, 12, 3), (std::vector<int>{0, 0, 1, 0}));
  EXPECT_EQ(num_positions(30, 3), 10u);
  EXPECT_EQ(num_positions(31, 3), 11u);
}

TEST(AssignLabels, IntervalRuleOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t e = 5 + rng() % 60, stride = 1 + rng() % 5;
    std::vector<std::size_t> b;
    for (std::size_t t = 1; t < e; ++t) {
      if (rng() % 7 == 0) b.push_back(t);
    }
    auto labels = assign_labels(b, e, stride);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      // Doubled coordinates avoid halves: 2p - s < 2b <= 2p + s.
      int expect = 0;
      for (std::size_t x : b) {
        const long lhs = 2 * long(i * stride) - long(stride), rhs = 2 * long(i * stride) + long(stride);
        if (lhs < 2 * long(x) && 2 * long(x) <= rhs) expect = 1;
      }
      EXPECT_EQ(labels[i], expect);
    }
  }
}

TEST(AssignLabels, OutOfRangeIsDataError) {
  std::vector<std::size_t> b{12};
  EXPECT_THROW(assign_labels(b, 12, 3), DataError);
}

TEST(BalancedSample, Examples) {
  Rng rng(2);
  std::vector<int> labels(13, 0);
  labels[6] = 1;
  auto s = balanced_sample(labels, 6, rng);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_LT(s[0], 6u);
  EXPECT_EQ(s[1], 6u);
  EXPECT_GT(s[2], 6u);
  std::vector<int> all(5, 1);
  EXPECT_EQ(balanced_sample(all, 6, rng), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(BalancedSample, ChunksAreUniform) {
  std::vector<int> labels(13, 0);
  std::map<std::size_t, int> counts;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    auto s = balanced_sample(labels, 6, rng);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_LT(s[0], 6u);
    EXPECT_GE(s[1], 6u);
    EXPECT_LT(s[1], 12u);
    EXPECT_EQ(s[2], 12u);
    for (std::size_t i : s) ++counts[i];
  }
  for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(counts[i] / 1000.0, 1.0 / 6.0, 0.05) << i;
}

TEST(BalancedSample, KeepsPositivesAndExpectedNegatives) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> labels(1 + gen() % 80);
    for (int& l : labels) l = gen() % 8 == 0;
    Rng rng(trial);
    const std::size_t r = 1 + gen() % 7;
    auto s = balanced_sample(labels, r, rng);
    std::size_t expected_neg = 0;
    for (std::size_t i = 0; i < labels.size();) {
      if (labels[i]) {
        EXPECT_TRUE(std::binary_search(s.begin(), s.end(), i));
        ++i;
        continue;
      }
      std::size_t run = 0;
      while (i < labels.size() && !labels[i]) ++i, ++run;
      expected_neg += (run + r - 1) / r;
    }
    std::size_t neg = 0;
    for (std::size_t i : s) neg += labels[i] == 0;
    EXPECT_EQ(neg, expected_neg);
  }
}

TEST(Adam, SingleStepScalarOracle) {
  Tensor p = Tensor::parameter({2}, {1.0, -2.0});
  std::vector<NamedTensor> params{{"p", p}};
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam adam(cfg, params);
  std::vector<std::vector<double>> g{{0.5, -3.0}};
  adam.step(params, g);
  for (std::size_t i = 0; i < 2; ++i) {
    const double m = (1 - 0.9) * g[0][i], v = (1 - 0.999) * g[0][i] * g[0][i];
    const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
    EXPECT_DOUBLE_EQ(p.values()[i], (i == 0 ? 1.0 : -2.0) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8));
  }
  // Second step against the running moments.
  std::vector<std::vector<double>> g2{{0.25, 1.0}};
  const double before = p.values()[0];
  adam.step(params, g2);
  const double m = 0.9 * 0.05 + 0.1 * 0.25, v = 0.999 * 0.001 * 0.25 + 0.001 * 0.0625;
  EXPECT_DOUBLE_EQ(p.values()[0], before - 0.1 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8));
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(Adam, ZeroGradientLeavesParametersAlone) {
  Tensor p = Tensor::parameter({3}, {0.1, 0.2, 0.3});
  std::vector<NamedTensor> params{{"p", p}};
  Adam adam(AdamConfig{}, params);
  adam.step(params, {{0.0, 0.0, 0.0}});
  EXPECT_EQ(std::vector<double>(p.values().begin(), p.values().end()), (std::vector<double>{0.1, 0.2, 0.3}));
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Tensor a = Tensor::parameter({1}, {0.0}), b = Tensor::parameter({2}, {0.0, 0.0});
  std::vector<NamedTensor> params{{"alpha", a}, {"beta.weight", b}};
  Adam adam(AdamConfig{}, params);
  try {
    adam.step(params, {{1.0}, {0.0, std::nan("")}});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("beta.weight"), std::string::npos);
  }
  EXPECT_EQ(a.values()[0], 0.0);
  EXPECT_EQ(adam.steps(), 0u);
}

TEST(Adam, StateRoundTrips) {
  Tensor p = Tensor::parameter({2}, {1.0, 2.0});
  std::vector<NamedTensor> params{{"p", p}};
  Adam a(AdamConfig{}, params);
  a.step(params, {{0.3, -0.1}});
  std::vector<NamedTensor> state;
  a.export_state(params, state);
  Adam b(AdamConfig{}, params);
  b.import_state(params, state);
  Tensor q = Tensor::parameter({2}, {p.values()[0], p.values()[1]});
  std::vector<NamedTensor> qparams{{"p", q}};
  a.step(params, {{0.2, 0.2}});
  b.step(qparams, {{0.2, 0.2}});
  EXPECT_EQ(p.values()[0], q.values()[0]);
  EXPECT_EQ(p.values()[1], q.values()[1]);
}

TEST(LossCsv, SeventeenDigits) {
  std::string csv = loss_csv({{1, 0, 0.1}, {2, 0, 1.0 / 3.0}});
  EXPECT_EQ(csv, "step,epoch,loss\n1,0,0.10000000000000001\n2,0,0.33333333333333331\n");
}

TEST(Trainer, LossDecreasesOnToySet) {
  auto data = fixtures::toy_dataset(8);
  auto videos = data.split("train");
  model::DdmNet net(fixtures::toy_model_config(), 3);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 100;
  cfg.adam.lr = 3e-3;
  Trainer trainer(net, cfg);
  std::vector<double> losses;
  const auto samples = epoch_samples(videos, cfg, 0);
  for (int step = 0; step < 50; ++step) {
    const std::size_t start = (step * cfg.batch_size) % (samples.size() - cfg.batch_size);
    losses.push_back(trainer.step(videos, std::span<const Sample>(samples).subspan(start, cfg.batch_size)));
  }
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) first += losses[i], last += losses[40 + i];
  EXPECT_LT(last, first);
}

TEST(Trainer, ZeroLearningRateKeepsParameters) {
  auto data = fixtures::toy_dataset(3);
  model::DdmNet net(fixtures::toy_model_config(), 4);
  auto before = fixtures::snapshot(net);
  TrainConfig cfg;
  cfg.adam.lr = 0.0;
  cfg.epochs = 1;
  Trainer trainer(net, cfg);
  trainer.run(data.split("train"));
  EXPECT_EQ(fixtures::snapshot(net), before);
}

TEST(Trainer, EmptyDatasetIsConfigError) {
  model::DdmNet net(fixtures::toy_model_config(), 4);
  Trainer trainer(net, TrainConfig{});
  EXPECT_THROW(trainer.run({}), ConfigError);
}

TEST(Trainer, WorkerCountDoesNotChangeResults) {
  auto data = fixtures::toy_dataset(4);
  std::vector<std::string> checkpoints;
  for (std::size_t workers : {1u, 3u}) {
    model::DdmNet net(fixtures::toy_model_config(), 5);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 5;
    cfg.workers = workers;
    Trainer trainer(net, cfg);
    trainer.run(data.split("train"));
    checkpoints.push_back(encode_checkpoint(trainer.checkpoint_records()));
  }
  EXPECT_EQ(checkpoints[0], checkpoints[1]);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  auto data = fixtures::toy_dataset(3);
  auto videos = data.split("train");
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;

  model::DdmNet straight(fixtures::toy_model_config(), 6);
  Trainer a(straight, cfg);
  std::vector<LossRecord> curve_a;
  a.run(videos, [&](std::size_t, const std::vector<LossRecord>& r) { curve_a.insert(curve_a.end(), r.begin(), r.end()); });

  model::DdmNet first(fixtures::toy_model_config(), 6);
  TrainConfig one = cfg;
  one.epochs = 1;
  Trainer b(first, one);
  std::vector<LossRecord> curve_b;
  auto collect = [&](std::size_t, const std::vector<LossRecord>& r) { curve_b.insert(curve_b.end(), r.begin(), r.end()); };
  b.run(videos, collect);
  const std::string saved = encode_checkpoint(b.checkpoint_records());

  model::DdmNet resumed(fixtures::toy_model_config(), 99);
  Trainer c(resumed, cfg);
  c.restore(decode_checkpoint(saved, "resume"));
  EXPECT_EQ(c.epochs_done(), 1u);
  c.run(videos, collect);

  EXPECT_EQ(encode_checkpoint(a.checkpoint_records()), encode_checkpoint(c.checkpoint_records()));
  ASSERT_EQ(curve_a.size(), curve_b.size());
  for (std::size_t i = 0; i < curve_a.size(); ++i) {
    EXPECT_EQ(curve_a[i].step, curve_b[i].step);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(curve_a[i].loss), std::bit_cast<std::uint64_t>(curve_b[i].loss));
  }
}

TEST(Trainer, RgbOnlyAblationTrains) {
  auto data = fixtures::toy_dataset(2);
  auto cfg_model = fixtures::toy_model_config();
  cfg_model.ablation = model::Ablation::RgbOnly;
  model::DdmNet net(cfg_model, 7);
  auto ddm_before = fixtures::snapshot(net, "ddm_embed.");
  auto rgb_before = fixtures::snapshot(net, "intra_rgb.");
  TrainConfig cfg;
  cfg.epochs = 1;
  Trainer trainer(net, cfg);
  trainer.run(data.split("train"));
  // The DDM branch sees no gradient, so Adam leaves it untouched.
  EXPECT_EQ(fixtures::snapshot(net, "ddm_embed."), ddm_before);
  EXPECT_NE(fixtures::snapshot(net, "intra_rgb."), rgb_before);
}

TEST(EpochSamples, DeterministicAndRedrawnPerEpoch) {
  auto data = fixtures::toy_dataset(4);
  auto videos = data.split("train");
  TrainConfig cfg;
  auto a = epoch_samples(videos, cfg, 0), b = epoch_samples(videos, cfg, 0), c = epoch_samples(videos, cfg, 1);
  auto key = [](const std::vector<Sample>& s) {
    std::vector<std::size_t> k;
    for (auto& x : s) k.push_back(x.video * 1000 + x.position);
    return k;
  };
  EXPECT_EQ(key(a), key(b));
  EXPECT_NE(key(a), key(c));
}
