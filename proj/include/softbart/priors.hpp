#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "softbart/random.hpp"
#include "softbart/tree.hpp"

namespace softbart {

/// Prior configuration.
struct Hypers {
  int num_tree = 20;
  double gamma = 0.95;
  double beta = 2.0;
  double k = 2.0;
  /// Overrides the default leaf-scale anchor 0.5 / (k sqrt(T)).
  std::optional<double> sigma_mu_hat_override;
  /// Anchor for the half-Cauchy prior on sigma.
  double sigma_hat = 1.0;
  /// Mean of the Exponential prior on each tree's bandwidth.
  double tau_scale = 0.1;
  double alpha_shape_a = 0.5;
  double alpha_shape_b = 1.0;
  /// Number of (dummy-expanded) covariate columns.
  int num_vars = 1;

  double sigma_mu_hat() const {
    if (sigma_mu_hat_override) return *sigma_mu_hat_override;
    return 0.5 / (k * std::sqrt(static_cast<double>(num_tree)));
  }

  void validate() const {
    auto fail = [](const std::string& what) {
      throw std::invalid_argument("invalid hypers: " + what);
    };
    if (num_tree < 1) fail("num_tree must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0, 1)");
    if (!(beta >= 0.0)) fail("beta must be nonnegative");
    if (!(k > 0.0)) fail("k must be positive");
    if (!(sigma_mu_hat() > 0.0)) fail("sigma_mu_hat must be positive");
    if (!(sigma_hat > 0.0)) fail("sigma_hat must be positive");
    if (!(tau_scale > 0.0)) fail("tau_scale must be positive");
    if (!(alpha_shape_a > 0.0 && alpha_shape_b > 0.0)) {
      fail("alpha shapes must be positive");
    }
    if (num_vars < 1) fail("num_vars must be positive");
  }
};

/// Splitting proportions s on the simplex, stored alongside log s so that
/// vanishingly small proportions keep a finite log.
class SparsityState {
 public:
  SparsityState() = default;

  static SparsityState uniform(int num_vars, double alpha = 1.0) {
    SparsityState st;
    st.log_s_.assign(static_cast<std::size_t>(num_vars),
                     -std::log(static_cast<double>(num_vars)));
    st.s_.assign(static_cast<std::size_t>(num_vars),
                 1.0 / static_cast<double>(num_vars));
    st.alpha = alpha;
    return st;
  }

  /// Normalizes arbitrary log weights onto the simplex.
  void set_log_weights(std::vector<double> log_w) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : log_w) mx = std::max(mx, v);
    double total = 0.0;
    for (double v : log_w) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    s_.resize(log_w.size());
    for (std::size_t j = 0; j < log_w.size(); ++j) {
      log_w[j] -= lse;
      s_[j] = std::exp(log_w[j]);
    }
    log_s_ = std::move(log_w);
  }

  void set_s(const std::vector<double>& s) {
    std::vector<double> lw(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) lw[j] = std::log(s[j]);
    set_log_weights(std::move(lw));
  }

  const std::vector<double>& s() const { return s_; }
  const std::vector<double>& log_s() const { return log_s_; }
  std::size_t size() const { return s_.size(); }

  double alpha = 1.0;
  bool update_enabled = true;

 private:
  std::vector<double> s_;
  std::vector<double> log_s_;
};

/// Prior probability that a node at depth d is a branch: gamma / (1 + d)^beta.
inline double branch_prob(int depth, double gamma, double beta) {
  return gamma / std::pow(1.0 + static_cast<double>(depth), beta);
}

/// alpha * sum_{i<B} 1 / (alpha + i): the approximate Poisson mean of the
/// number of extra predictors used by an ensemble with B branches.
inline double theta_B(double alpha, int B) {
  if (!(alpha > 0.0) || B < 1) {
    throw std::invalid_argument("theta_B requires alpha > 0 and B >= 1");
  }
  double sum = 0.0;
  for (int i = 0; i < B; ++i) sum += 1.0 / (alpha + static_cast<double>(i));
  return alpha * sum;
}

inline double log_exponential_density(double x, double mean) {
  if (x < 0.0) return -std::numeric_limits<double>::infinity();
  return -std::log(mean) - x / mean;
}

/// Log density of the half-Cauchy with the given scale, on x > 0.
inline double log_half_cauchy_density(double x, double scale) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  const double z = x / scale;
  return std::log(2.0 / (std::numbers::pi * scale)) - std::log1p(z * z);
}

inline double sample_half_cauchy(Rng& rng, double scale) {
  return scale * std::tan(0.5 * std::numbers::pi * rng.uniform_open());
}

inline double sample_sigma_mu_prior(Rng& rng, const Hypers& hypers) {
  return sample_half_cauchy(rng, hypers.sigma_mu_hat());
}

inline double sample_tau_prior(Rng& rng, const Hypers& hypers) {
  return rng.exponential(1.0 / hypers.tau_scale);
}

namespace detail {

inline void grow_from_prior(Rng& rng, Node& node, int depth, Hyperrect& rect,
                            const Hypers& hypers, const SparsityState& sparsity,
                            double sigma_mu) {
  if (rng.uniform() < branch_prob(depth, hypers.gamma, hypers.beta)) {
    const auto j = rng.categorical(sparsity.s());
    const double lo = rect.lower[j];
    const double hi = rect.upper[j];
    node.grow(static_cast<int>(j), rng.uniform(lo, hi));
    rect.upper[j] = node.cut;
    grow_from_prior(rng, *node.left, depth + 1, rect, hypers, sparsity,
                    sigma_mu);
    rect.upper[j] = hi;
    rect.lower[j] = node.cut;
    grow_from_prior(rng, *node.right, depth + 1, rect, hypers, sparsity,
                    sigma_mu);
    rect.lower[j] = lo;
  } else {
    node.mu = rng.normal(0.0, sigma_mu);
  }
}

inline double log_prior_impl(const Node& node, int depth, Hyperrect& rect,
                             const Hypers& hypers,
                             const SparsityState* sparsity) {
  const double p = branch_prob(depth, hypers.gamma, hypers.beta);
  if (node.is_leaf()) return std::log1p(-p);
  double out = std::log(p);
  if (sparsity == nullptr) {
    return out + log_prior_impl(*node.left, depth + 1, rect, hypers, nullptr) +
           log_prior_impl(*node.right, depth + 1, rect, hypers, nullptr);
  }
  const auto j = static_cast<std::size_t>(node.var);
  const double lo = rect.lower[j];
  const double hi = rect.upper[j];
  if (node.cut < lo || node.cut > hi) {
    return -std::numeric_limits<double>::infinity();
  }
  out += sparsity->log_s()[j] - std::log(hi - lo);
  rect.upper[j] = node.cut;
  out += log_prior_impl(*node.left, depth + 1, rect, hypers, sparsity);
  rect.upper[j] = hi;
  rect.lower[j] = node.cut;
  out += log_prior_impl(*node.right, depth + 1, rect, hypers, sparsity);
  rect.lower[j] = lo;
  return out;
}

}  // namespace detail

/// Draws a tree from the branching-process prior with splitting-rule prior
/// (Categorical(s) variable, uniform cutpoint over the hard-induced interval).
inline SoftTree sample_tree_from_prior(Rng& rng, const Hypers& hypers,
                                       const SparsityState& sparsity,
                                       bool hard = false) {
  SoftTree tree;
  tree.hard = hard;
  Hyperrect rect = Hyperrect::unit_cube(sparsity.size());
  detail::grow_from_prior(rng, tree.root, 0, rect, hypers, sparsity,
                          hypers.sigma_mu_hat());
  tree.tau = hard ? 0.0 : sample_tau_prior(rng, hypers);
  return tree;
}

/// Log probability of the tree's shape alone under the branching process.
inline double log_shape_prior(const Node& root, const Hypers& hypers) {
  Hyperrect rect;
  return detail::log_prior_impl(root, 0, rect, hypers, nullptr);
}

/// Log prior density of shape, splitting rules and (for soft trees) the
/// bandwidth. Leaf values are not included.
inline double log_tree_prior(const SoftTree& tree, const Hypers& hypers,
                             const SparsityState& sparsity) {
  Hyperrect rect = Hyperrect::unit_cube(sparsity.size());
  double out = detail::log_prior_impl(tree.root, 0, rect, hypers, &sparsity);
  if (!tree.hard) out += log_exponential_density(tree.tau, hypers.tau_scale);
  return out;
}

}  // namespace softbart
