#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "depthforensics/error.hpp"
#include "depthforensics/losses.hpp"
#include "depthforensics/rng.hpp"
#include "oracles.hpp"

using namespace dfx;
namespace ag = dfx::ag;

namespace {

std::vector<double> uniform(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform();
  return v;
}

}  // namespace

TEST(Ssim, IdentitySymmetryAndConstants) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto a = uniform(rng, 16), b = uniform(rng, 16);
    EXPECT_NEAR(loss::ssim(a, a), 1.0, 1e-12);
    EXPECT_NEAR(loss::ssim_loss(a, a), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(loss::ssim(a, b), loss::ssim(b, a));
    EXPECT_LE(loss::ssim(a, b), 1.0);
    EXPECT_NEAR(loss::ssim(a, b), oracle::ssim(a, b, 1e-4, 9e-4), 1e-12);
    EXPECT_GT(loss::ssim_loss(a, b), 0.0);
  }
  const std::vector<double> a(196, 0.2), b(196, 0.8);
  EXPECT_NEAR(loss::ssim(a, b), 0.4707, 1e-4);
  EXPECT_GT(loss::ssim_loss(a, b), 0.0);
  EXPECT_THROW(loss::ssim(a, std::vector<double>(3, 0.0)), Error);
}

TEST(Ssim, TapeValueMatchesAndGradientChecks) {
  Rng rng(2);
  ParamStore s;
  const int p = s.add_constant("p", 6, 1, 0.0);
  for (auto& v : s.at(p).value) v = rng.uniform();
  const auto target = uniform(rng, 6);
  auto build = [&](ag::Tape& t) { return loss::ssim_loss(t, t.param(s, p), t.constant(6, 1, target)); };
  ag::Tape t;
  EXPECT_NEAR(t.scalar(build(t)), loss::ssim_loss(s.at(p).value, target), 1e-14);
  EXPECT_LT(oracle::check_param_grads(s, build, {p}, 6).max_rel, 1e-5);
}

TEST(PatchMse, LiteralSumSemantics) {
  EXPECT_NEAR(loss::patch_mse({{0.5, 0.5}}, {{0.2, 0.1}}), 0.7, 1e-12);
  EXPECT_EQ(loss::patch_mse({{0.1, 0.9}}, {{0.1, 0.9}}), 0.0);
  const std::vector<std::vector<double>> p = {{0.3, 0.8, 0.1}}, q = {{0.0, 0.5, 0.4}};
  const double one = loss::patch_mse(p, q);
  EXPECT_NEAR(loss::patch_mse({p[0], p[0]}, {q[0], q[0]}), 2 * one, 1e-12);
  EXPECT_THROW(loss::patch_mse({{0.1}}, {{0.1, 0.2}}), Error);
  EXPECT_THROW(loss::patch_mse({{0.1}}, {{0.1}, {0.2}}), Error);

  ag::Tape t;
  EXPECT_NEAR(t.scalar(loss::patch_mse(t, t.constant(2, 1, {0.5, 0.5}), t.constant(2, 1, {0.2, 0.1}))), 0.7, 1e-12);
}

TEST(PatchMse, NonNegativeZeroIffEqual) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto a = uniform(rng, 5), b = uniform(rng, 5);
    EXPECT_GT(loss::patch_mse({a}, {b}), 0.0);
    EXPECT_EQ(loss::patch_mse({a}, {a}), 0.0);
  }
}

TEST(TotalLoss, WeightedSum) {
  EXPECT_NEAR(loss::total_loss(1.0, 0.2, 0.4), 1.42, 1e-12);
  EXPECT_EQ(loss::total_loss(1.3, 0.2, 0.4, {0.0, 0.0}), 1.3);
  EXPECT_GT(loss::total_loss(1.0, 0.3, 0.4), loss::total_loss(1.0, 0.2, 0.4));
  EXPECT_GT(loss::total_loss(1.0, 0.2, 0.5), loss::total_loss(1.0, 0.2, 0.4));
  EXPECT_THROW(loss::total_loss(NAN, 0.2, 0.4), Error);
  EXPECT_THROW(loss::total_loss(1.0, INFINITY, 0.4), Error);
  ag::Tape t;
  EXPECT_NEAR(t.scalar(loss::total_loss(t, t.constant(1, 1, {1.0}), t.constant(1, 1, {0.2}), t.constant(1, 1, {0.4}))),
              1.42, 1e-12);
}

TEST(Accuracy, Examples) {
  const std::vector<int> truth = {0, 1, 1, 0};
  EXPECT_EQ(metrics::accuracy(truth, truth), 1.0);
  EXPECT_EQ(metrics::accuracy(std::vector<int>{1, 0, 0, 1}, truth), 0.0);
  EXPECT_EQ(metrics::accuracy(std::vector<int>{0, 1, 1, 1}, truth), 0.75);
  EXPECT_THROW(metrics::accuracy(std::vector<int>{}, std::vector<int>{}), Error);
  EXPECT_THROW(metrics::accuracy(std::vector<int>{1}, truth), Error);
}

TEST(Auc, Examples) {
  EXPECT_EQ(metrics::auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(metrics::auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{0, 1, 1}), 0.5);
  EXPECT_THROW(metrics::auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
  EXPECT_THROW(metrics::auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), Error);
}

TEST(Auc, MatchesPairwiseOracleOn100Cases) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(2, 200);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> l(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      // Coarse scores force plenty of ties.
      s[i] = std::round(rng.uniform() * 10) / 10;
      l[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    l[0] = 1;
    l[1] = 0;
    EXPECT_NEAR(metrics::auc(s, l), oracle::pairwise_auc(s, l), 1e-9);
  }
}

TEST(Auc, InvariantUnderStrictlyMonotoneMaps) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(2, 100);
    std::vector<double> s(static_cast<std::size_t>(n)), m(static_cast<std::size_t>(n));
    std::vector<int> l(static_cast<std::size_t>(n));
    const double k = rng.uniform(0.5, 3.0), off = rng.uniform(-2, 2);
    for (int i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform() * 20) / 20;
      l[i] = rng.uniform() < 0.5;
    }
    l[0] = 1;
    l[1] = 0;
    for (int i = 0; i < n; ++i) m[i] = std::exp(k * s[i]) + off;
    EXPECT_NEAR(metrics::auc(s, l), metrics::auc(m, l), 1e-12);
  }
}

TEST(Metrics, CrossCheckAgainstIndependentImplementation) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(4, 80);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> l(static_cast<std::size_t>(n)), pred(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = rng.uniform();
      l[i] = rng.uniform() < 0.5;
      pred[i] = s[i] > 0.5;
    }
    l[0] = 1;
    l[1] = 0;
    int agree = 0;
    for (int i = 0; i < n; ++i) agree += pred[i] == l[i];
    EXPECT_NEAR(metrics::accuracy(pred, l), static_cast<double>(agree) / n, 1e-15);
    EXPECT_NEAR(metrics::auc(s, l), oracle::pairwise_auc(s, l), 1e-9);
  }
}
