#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ptd/error.hpp"
#include "ptd/losses.hpp"
#include "ptd/verify.hpp"

using namespace ptd;

namespace {

Tensor<double> logits_for_probs(const std::vector<std::vector<double>>& probs) {
  const int n = static_cast<int>(probs.size()), k = static_cast<int>(probs[0].size());
  Tensor<double> t({n, k});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) t[static_cast<std::size_t>(i * k + j)] = std::log(probs[i][j]);
  return t;
}

}  // namespace

TEST(Softmax, Examples) {
  const std::vector<double> flat{5, 5, 5};
  for (double tau : {0.5, 1.0, 7.0})
    for (double p : softmax(flat, tau)) EXPECT_NEAR(p, 1.0 / 3, 1e-12);
  const std::vector<double> z{1, 2, 3};
  const auto p = softmax(z, 1.0);
  EXPECT_NEAR(p[0], 0.09003, 1e-5);
  EXPECT_NEAR(p[1], 0.24473, 1e-5);
  EXPECT_NEAR(p[2], 0.66524, 1e-5);
  for (double q : softmax(z, 1000.0)) EXPECT_NEAR(q, 1.0 / 3, 1e-3);
  EXPECT_THROW(softmax(z, 0.0), ConfigError);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(0);
  std::normal_distribution<double> n(0, 5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> z(1 + t % 12), shifted;
    for (auto& v : z) v = n(rng);
    for (double v : z) shifted.push_back(v + 123.0);
    const double tau = 0.1 + (t % 7);
    const auto p = softmax(z, tau), q = softmax(shifted, tau);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-6);
  }
}

TEST(CrossEntropy, Examples) {
  EXPECT_EQ(cross_entropy(std::vector<double>{0, 1}, std::vector<double>{0, 1}), 0.0);
  EXPECT_NEAR(cross_entropy(one_hot(2, 3), std::vector<double>{0.1, 0.2, 0.7}), 0.35667, 1e-5);
  EXPECT_NEAR(cross_entropy(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}), 0.69315, 1e-5);
  EXPECT_THROW(cross_entropy(std::vector<double>{1}, std::vector<double>{0.5, 0.5}), ShapeError);
  // Clamped, so a zero prediction is finite.
  EXPECT_NEAR(cross_entropy(std::vector<double>{1, 0}, std::vector<double>{0, 1}), -std::log(kProbFloor), 1e-9);
}

TEST(CrossEntropy, GibbsInequality) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = 2 + t % 8;
    std::vector<double> p(k), q(k);
    for (auto& v : p) v = u(rng);
    for (auto& v : q) v = u(rng);
    const double sp = std::accumulate(p.begin(), p.end(), 0.0), sq = std::accumulate(q.begin(), q.end(), 0.0);
    for (auto& v : p) v /= sp;
    for (auto& v : q) v /= sq;
    EXPECT_GE(cross_entropy(p, q) - cross_entropy(p, p), -1e-9);
  }
}

TEST(SmoothedLabel, Examples) {
  const std::vector<double> y{1, 0}, t{0.6, 0.4};
  EXPECT_EQ(smoothed_label(y, t, 0.0), y);
  EXPECT_EQ(smoothed_label(y, t, 1.0), t);
  const auto m = smoothed_label(y, t, 0.5);
  EXPECT_NEAR(m[0], 0.8, 1e-15);
  EXPECT_NEAR(m[1], 0.2, 1e-15);
  EXPECT_NEAR(m[0] + m[1], 1.0, 1e-15);
  EXPECT_THROW(smoothed_label(y, std::vector<double>{1, 0, 0}, 0.5), ShapeError);
}

TEST(KdLoss, AlphaZeroIsCrossEntropy) {
  const Tensor<double> zs({2, 3}, std::vector<double>{0.1, 2.0, -1.0, 0.5, 0.5, 3.0});
  const Tensor<double> zt({2, 3}, std::vector<double>{3.0, 0.0, 0.0, 0.0, 1.0, 0.0});
  const std::vector<int> labels{1, 2};
  const double ce = cross_entropy_loss(zs, labels).loss;
  EXPECT_NEAR(kd_loss(zs, zt, labels, DistillConfig{0.0, 4.0, true}), ce, 1e-14);
  EXPECT_NEAR(lsr_loss(zs, zt, labels, 0.0), ce, 1e-14);
}

TEST(KdLoss, TwoClassHandExpansion) {
  const auto zt = logits_for_probs({{0.6, 0.4}});
  const auto zs = logits_for_probs({{0.5, 0.5}});
  const std::vector<int> labels{0};
  EXPECT_NEAR(kd_loss(zs, zt, labels, DistillConfig{0.5, 1.0, true}), 0.69315, 1e-5);
  EXPECT_NEAR(lsr_loss(zs, zt, labels, 0.5), 0.69315, 1e-5);
}

TEST(KdLoss, SelfTargetGivesTeacherEntropy) {
  const Tensor<double> z({1, 3}, std::vector<double>{0.3, -1.0, 2.0});
  const std::vector<int> labels{0};
  const auto p = softmax(std::vector<double>{0.3, -1.0, 2.0});
  EXPECT_NEAR(kd_loss(z, z, labels, DistillConfig{1.0, 1.0, true}), cross_entropy(p, p), 1e-14);
  EXPECT_NEAR(mean_entropy(z), cross_entropy(p, p), 1e-14);
}

TEST(KdLoss, EqualsLsrAtTauOne) {
  std::mt19937_64 rng(0);
  std::normal_distribution<double> n(0, 2);
  Tensor<double> zs({8, 10}), zt({8, 10});
  for (auto& v : zs.values()) v = n(rng);
  for (auto& v : zt.values()) v = n(rng);
  std::vector<int> labels(8);
  for (auto& y : labels) y = static_cast<int>(rng() % 10);
  const double kd = kd_loss(zs, zt, labels, DistillConfig{0.95, 1.0, false});
  const double lsr = lsr_loss(zs, zt, labels, 0.95);
  EXPECT_LE(std::abs(kd - lsr) / std::abs(lsr), 1e-10);
  EXPECT_TRUE(check_kd_lsr(1000, 3).passed);
}

TEST(KdLoss, TauSquaredScalesSoftTerm) {
  const Tensor<double> zs({1, 3}, std::vector<double>{1.0, 0.0, -1.0});
  const Tensor<double> zt({1, 3}, std::vector<double>{0.0, 2.0, 0.0});
  const std::vector<int> labels{2};
  const double on = kd_loss(zs, zt, labels, DistillConfig{1.0, 4.0, true});
  const double off = kd_loss(zs, zt, labels, DistillConfig{1.0, 4.0, false});
  EXPECT_NEAR(on, 16.0 * off, 1e-12);
}

TEST(KdLoss, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 2);
  Tensor<double> zs({3, 4}), zt({3, 4});
  for (auto& v : zs.values()) v = n(rng);
  for (auto& v : zt.values()) v = n(rng);
  const std::vector<int> labels{0, 3, 1};
  const DistillConfig cfg{0.7, 3.0, true};
  const auto lg = kd_loss_with_grad(zs, zt, labels, cfg);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    auto a = zs, b = zs;
    a[i] += 1e-6;
    b[i] -= 1e-6;
    const double fd = (kd_loss(a, zt, labels, cfg) - kd_loss(b, zt, labels, cfg)) / 2e-6;
    EXPECT_NEAR(lg.grad[i], fd, 1e-7);
  }
}

TEST(DistillConfig, Validation) {
  EXPECT_THROW((DistillConfig{1.5, 1.0, true}.validate()), ConfigError);
  EXPECT_THROW((DistillConfig{0.5, 0.0, true}.validate()), ConfigError);
  EXPECT_NO_THROW((DistillConfig{}.validate()));
  EXPECT_EQ(DistillConfig{}.alpha, 0.95);
  EXPECT_EQ(DistillConfig{}.tau, 10.0);
}
