#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "softbart/csv.hpp"
#include "softbart/random.hpp"

namespace softbart {

/// 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5.
inline double friedman_mean(std::span<const double> x) {
  return 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) +
         20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4];
}

namespace sim_detail {

inline void check_sizes(int n, int p, double sigma, int min_p) {
  if (n < 1) throw InputError("simulate: n must be positive");
  if (p < min_p) {
    throw InputError("simulate: p must be at least " + std::to_string(min_p));
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InputError("simulate: sigma must be nonnegative");
  }
}

/// Uniform design drawn row by row, columns named X.1 .. X.p.
inline std::vector<std::vector<double>> uniform_design(Rng& rng, int n, int p) {
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(p),
                                        std::vector<double>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      cols[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = rng.uniform();
    }
  }
  return cols;
}

inline std::vector<double> friedman_column(
    const std::vector<std::vector<double>>& cols) {
  const std::size_t n = cols[0].size();
  std::vector<double> mu(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x[5] = {cols[0][i], cols[1][i], cols[2][i], cols[3][i],
                         cols[4][i]};
    mu[i] = friedman_mean(x);
  }
  return mu;
}

inline void add_design(Table& t, std::vector<std::vector<double>>& cols) {
  for (std::size_t j = 0; j < cols.size(); ++j) {
    t.add_numeric("X." + std::to_string(j + 1), std::move(cols[j]));
  }
}

}  // namespace sim_detail

/// Columns X.1..X.p, Y, mu with Y = mu + sigma * noise.
inline Table simulate_friedman(Rng& rng, int n, int p, double sigma) {
  sim_detail::check_sizes(n, p, sigma, 5);
  auto cols = sim_detail::uniform_design(rng, n, p);
  const auto mu = sim_detail::friedman_column(cols);
  std::vector<double> y(mu.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = mu[i] + sigma * rng.normal();
  Table t;
  sim_detail::add_design(t, cols);
  t.add_numeric("Y", std::move(y));
  t.add_numeric("mu", mu);
  return t;
}

/// Single covariate x ~ Uniform(0, 1), Y = sin(2 pi x) + sigma * noise.
inline Table simulate_sine(Rng& rng, int n, double sigma) {
  sim_detail::check_sizes(n, 1, sigma, 1);
  std::vector<double> x(static_cast<std::size_t>(n)), mu(x.size()), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform();
    mu[i] = std::sin(2.0 * std::numbers::pi * x[i]);
    y[i] = mu[i] + sigma * rng.normal();
  }
  Table t;
  t.add_numeric("x", std::move(x));
  t.add_numeric("Y", std::move(y));
  t.add_numeric("mu", std::move(mu));
  return t;
}

/// Probit variant: r = 3 (mu - 14) / 5, p = Phi(r), Y ~ Bernoulli(p).
inline Table simulate_probit(Rng& rng, int n, int p) {
  sim_detail::check_sizes(n, p, 0.0, 5);
  auto cols = sim_detail::uniform_design(rng, n, p);
  const auto mu = sim_detail::friedman_column(cols);
  const boost::math::normal_distribution<double> std_normal;
  std::vector<double> r(mu.size()), prob(mu.size()), y(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    r[i] = 3.0 * (mu[i] - 14.0) / 5.0;
    prob[i] = boost::math::cdf(std_normal, r[i]);
    y[i] = rng.uniform() < prob[i] ? 1.0 : 0.0;
  }
  Table t;
  sim_detail::add_design(t, cols);
  t.add_numeric("Y", std::move(y));
  t.add_numeric("r", std::move(r));
  t.add_numeric("p", std::move(prob));
  return t;
}

/// Varying-coefficient variant: beta(x) = friedman mean, alpha = 0,
/// Z ~ Normal(0, 1), Y = alpha + Z beta + sigma * noise.
inline Table simulate_vc(Rng& rng, int n, int p, double sigma) {
  sim_detail::check_sizes(n, p, sigma, 5);
  auto cols = sim_detail::uniform_design(rng, n, p);
  const auto beta = sim_detail::friedman_column(cols);
  std::vector<double> z(beta.size()), y(beta.size()), mu(beta.size());
  for (std::size_t i = 0; i < beta.size(); ++i) {
    z[i] = rng.normal();
    mu[i] = z[i] * beta[i];
    y[i] = mu[i] + sigma * rng.normal();
  }
  Table t;
  sim_detail::add_design(t, cols);
  t.add_numeric("Z", std::move(z));
  t.add_numeric("Y", std::move(y));
  t.add_numeric("mu", std::move(mu));
  t.add_numeric("beta", beta);
  t.add_numeric("alpha", std::vector<double>(beta.size(), 0.0));
  return t;
}

/// Partial-linear fits reuse the Friedman table with X.4 and X.5 treated
/// linearly.
inline Table simulate_gbart(Rng& rng, int n, int p, double sigma) {
  return simulate_friedman(rng, n, p, sigma);
}

}  // namespace softbart
