#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "softbart/simulate.hpp"

namespace softbart {
namespace {

double friedman_direct(double x1, double x2, double x3, double x4, double x5) {
  return 10.0 * std::sin(std::numbers::pi * x1 * x2) +
         20.0 * (x3 - 0.5) * (x3 - 0.5) + 10.0 * x4 + 5.0 * x5;
}

TEST(Simulate, FriedmanMeanMatchesFormula) {
  Rng rng(1);
  const Table t = simulate_friedman(rng, 250, 250, 1.0);
  EXPECT_EQ(t.rows(), 250u);
  EXPECT_EQ(t.cols(), 252u);
  EXPECT_TRUE(t.has("X.250"));
  const auto& mu = t.column("mu").numeric();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double direct = friedman_direct(
        t.column("X.1").numeric()[i], t.column("X.2").numeric()[i],
        t.column("X.3").numeric()[i], t.column("X.4").numeric()[i],
        t.column("X.5").numeric()[i]);
    ASSERT_NEAR(mu[i], direct, 1e-12);
  }
  for (const auto& c : t.columns()) {
    if (c.name.rfind("X.", 0) != 0) continue;
    for (double v : c.numeric()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Simulate, Reproducible) {
  Rng a(7), b(7), c(8);
  const Table ta = simulate_friedman(a, 20, 6, 1.0);
  const Table tb = simulate_friedman(b, 20, 6, 1.0);
  const Table tc = simulate_friedman(c, 20, 6, 1.0);
  EXPECT_EQ(ta.column("Y").numeric(), tb.column("Y").numeric());
  EXPECT_NE(ta.column("Y").numeric(), tc.column("Y").numeric());
}

TEST(Simulate, ZeroNoiseGivesMean) {
  Rng rng(2);
  const Table t = simulate_friedman(rng, 50, 5, 0.0);
  EXPECT_EQ(t.column("Y").numeric(), t.column("mu").numeric());
}

TEST(Simulate, NoiseHasRequestedScale) {
  Rng rng(3);
  const Table t = simulate_friedman(rng, 20000, 5, 2.0);
  double ss = 0.0;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double e = t.column("Y").numeric()[i] - t.column("mu").numeric()[i];
    ss += e * e;
  }
  EXPECT_NEAR(std::sqrt(ss / 20000.0), 2.0, 0.05);
}

TEST(Simulate, SineHasOneCovariate) {
  Rng rng(4);
  const Table t = simulate_sine(rng, 30, 0.1);
  ASSERT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.columns()[0].name, "x");
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double x = t.column("x").numeric()[i];
    ASSERT_NEAR(t.column("mu").numeric()[i], std::sin(2.0 * std::numbers::pi * x), 1e-12);
  }
}

TEST(Simulate, ProbitColumnsAreConsistent) {
  Rng rng(5);
  const Table t = simulate_probit(rng, 500, 6);
  double ones = 0.0;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double y = t.column("Y").numeric()[i];
    ASSERT_TRUE(y == 0.0 || y == 1.0);
    ones += y;
    const double r = t.column("r").numeric()[i];
    const double p = t.column("p").numeric()[i];
    ASSERT_NEAR(p, 0.5 * std::erfc(-r / std::numbers::sqrt2), 1e-12);
  }
  // Both classes occur.
  EXPECT_GT(ones, 50.0);
  EXPECT_LT(ones, 450.0);
}

TEST(Simulate, VcDecomposes) {
  Rng rng(6);
  const Table t = simulate_vc(rng, 100, 5, 0.0);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const double z = t.column("Z").numeric()[i];
    const double beta = t.column("beta").numeric()[i];
    ASSERT_EQ(t.column("alpha").numeric()[i], 0.0);
    ASSERT_NEAR(t.column("Y").numeric()[i], z * beta, 1e-12);
  }
}

TEST(Simulate, RejectsInvalidSizes) {
  Rng rng(1);
  EXPECT_THROW(simulate_friedman(rng, 0, 10, 1.0), InputError);
  EXPECT_THROW(simulate_friedman(rng, 10, 4, 1.0), InputError);
  EXPECT_THROW(simulate_friedman(rng, 10, 10, -1.0), InputError);
  EXPECT_THROW(simulate_sine(rng, 0, 0.1), InputError);
  EXPECT_THROW(simulate_probit(rng, 10, 3), InputError);
}

}  // namespace
}  // namespace softbart
