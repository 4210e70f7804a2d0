#include <gtest/gtest.h>

#include <cmath>

#include "ddmnet/errors.hpp"
#include "ddmnet/head.hpp"
#include "gradcheck.hpp"

using namespace ddmnet;
using namespace ddmnet::head;

TEST(ModalityLogits, SingleQueryIsPlainAffine) {
  Tensor w = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({2}, {0.5, -0.5});
  Tensor l = modality_logits(Tensor::from({1, 3}, {1, 0, -1}), w, b);
  EXPECT_DOUBLE_EQ(l.at({0}), 1 - 5 + 0.5);
  EXPECT_DOUBLE_EQ(l.at({1}), 2 - 6 - 0.5);
}

TEST(ModalityLogits, ZeroWeightsGiveBias) {
  std::mt19937_64 r(1);
  Tensor l = modality_logits(gradcheck::random_const({5, 4}, r), Tensor::zeros({4, 2}), Tensor::from({2}, {0.3, -0.3}));
  EXPECT_DOUBLE_EQ(l.at({0}), 0.3);
  EXPECT_DOUBLE_EQ(l.at({1}), -0.3);
}

TEST(ModalityLogits, GradientsMatchFiniteDifferences) {
  std::mt19937_64 r(2);
  Tensor q = gradcheck::random_leaf({5, 4}, r), w = gradcheck::random_leaf({4, 2}, r), b = gradcheck::random_leaf({2}, r);
  Tensor probe = gradcheck::random_const({2}, r);
  auto report = gradcheck::check([&] { return sum(mul(modality_logits(q, w, b), probe)); },
                                 {{"q", q}, {"w", w}, {"b", b}}, 1e-5);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
}

TEST(Fusion, AlphaOneIsRgbLogits) {
  Tensor la = Tensor::from({2}, {0.7, -1.1}), ld = Tensor::from({2}, {3.0, 2.0});
  Scores s = fuse_and_score(la, ld, Tensor::from({1}, {1.0}));
  EXPECT_EQ(s.logits.at({0}), 0.7);
  EXPECT_EQ(s.logits.at({1}), -1.1);
}

TEST(Fusion, SymmetricHalf) {
  Scores s = fuse_and_score(Tensor::from({2}, {1, 0}), Tensor::from({2}, {0, 1}), Tensor::from({1}, {0.5}));
  EXPECT_DOUBLE_EQ(s.logits.at({0}), 0.5);
  EXPECT_DOUBLE_EQ(s.logits.at({1}), 0.5);
  EXPECT_DOUBLE_EQ(s.p.item(), 0.5);
}

TEST(Fusion, ClosedFormSoftmax) {
  EXPECT_NEAR(boundary_probability(Tensor::from({2}, {0, std::log(3.0)})).item(), 0.75, 1e-15);
  Tensor batch = boundary_probability(Tensor::from({2, 2}, {0, 0, 0, std::log(3.0)}));
  EXPECT_EQ(batch.shape(), (Shape{2}));
  EXPECT_NEAR(batch.at({1}), 0.75, 1e-15);
}

TEST(Fusion, AlphaStaysInUnitInterval) {
  Rng rng(3);
  FusionHead head(4, rng);
  for (double raw : {-50.0, -3.0, 0.0, 3.0, 30.0}) {
    head.alpha_raw.mutable_values()[0] = raw;
    const double a = head.alpha().item();
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    if (std::fabs(raw) < 10) {
      EXPECT_GT(a, 0.0);
      EXPECT_LT(a, 1.0);
    }
  }
}

TEST(Loss, HalfProbabilitiesGiveThreeLn2) {
  Tensor half = Tensor::from({1}, {0.5});
  for (int y : {0, 1}) {
    std::vector<int> labels{y};
    EXPECT_NEAR(complete_loss(half, half, half, labels).item(), 3 * std::log(2.0), 1e-12);
  }
}

TEST(Loss, PerfectPredictionIsClampBound) {
  std::vector<int> labels{1, 0};
  Tensor p = Tensor::from({2}, {1.0, 0.0});
  const double loss = complete_loss(p, p, p, labels).item();
  EXPECT_GT(loss, 0.0);
  EXPECT_LE(loss, 3 * std::fabs(std::log(1 - kLossClamp)) + 1e-15);
}

TEST(Loss, BatchIsMeanOfSamples) {
  std::mt19937_64 r(4);
  std::vector<double> pf{0.2, 0.9}, pa{0.4, 0.6}, pd{0.7, 0.3};
  std::vector<int> labels{0, 1};
  const double joint = complete_loss(Tensor::from({2}, pf), Tensor::from({2}, pa), Tensor::from({2}, pd), labels).item();
  double separate = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    separate += complete_loss(Tensor::from({1}, {pf[i]}), Tensor::from({1}, {pa[i]}), Tensor::from({1}, {pd[i]}),
                              std::vector<int>{labels[i]})
                    .item();
  }
  EXPECT_NEAR(joint, separate / 2, 1e-14);
  // Direct formula.
  double expect = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    for (double p : {pf[i], pa[i], pd[i]}) expect -= labels[i] ? std::log(p) : std::log(1 - p);
  }
  EXPECT_NEAR(joint, expect / 2, 1e-14);
}

TEST(Loss, TermsCanBeDropped) {
  Tensor a = Tensor::from({1}, {0.3}), b = Tensor::from({1}, {0.6}), c = Tensor::from({1}, {0.8});
  std::vector<int> y{1};
  EXPECT_NEAR(complete_loss(a, b, c, y, {true, true, false}).item(), -std::log(0.3) - std::log(0.6), 1e-14);
  EXPECT_THROW(complete_loss(a, b, c, y, {false, false, false}), ConfigError);
  EXPECT_THROW(complete_loss(a, b, c, std::vector<int>{2}), ContractError);
}

TEST(Loss, NonNegativeOnRandomInputs) {
  std::mt19937_64 r(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<int> y{int(u(r) < 0.5)};
    EXPECT_GE(complete_loss(Tensor::from({1}, {u(r)}), Tensor::from({1}, {u(r)}), Tensor::from({1}, {u(r)}), y).item(),
              0.0);
  }
}

TEST(Loss, AlphaRawGradientMatchesFiniteDifferences) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    FusionHead head(3, rng);
    std::mt19937_64 r(seed);
    head.alpha_raw.mutable_values()[0] = std::uniform_real_distribution<double>(-2, 2)(r);
    Tensor qa = gradcheck::random_const({2, 3}, r), qd = gradcheck::random_const({2, 3}, r);
    std::vector<NamedTensor> leaves;
    head.collect(leaves, "head.");
    std::vector<int> y{int(seed % 2)};
    auto f = [&] {
      Scores s = fuse_and_score(modality_logits(qa, head.fc_a_w, head.fc_a_b),
                                modality_logits(qd, head.fc_d_w, head.fc_d_b), head.alpha());
      return complete_loss(s.p, s.p_a, s.p_d, y);
    };
    auto report = gradcheck::check(f, leaves, 1e-5);
    EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
  }
}
