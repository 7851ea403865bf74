#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "softbart/priors.hpp"
#include "softbart/random.hpp"
#include "softbart/tree.hpp"

namespace softbart {

/// Chain-control configuration.
struct Opts {
  int num_burn = 2500;
  int num_save = 2500;
  int num_thin = 1;
  bool update_s = true;
  bool update_sigma = true;
  bool update_sigma_mu = true;
  bool update_tau = true;
  bool cache_trees = true;
  /// Indicator splits instead of logistic gates; bandwidths are not sampled.
  bool hard_trees = false;
  /// Model drivers keep s and alpha fixed for the first half of burn-in so
  /// that the splitting proportions are not learned from a forest that has
  /// not yet found the signal.
  bool warmup_s = true;
  /// Standard deviation of the random-walk step on log(tau).
  double tau_step_sd = 0.3;

  void validate() const {
    if (num_burn < 0 || num_save < 0) {
      throw std::invalid_argument("invalid opts: negative iteration count");
    }
    if (num_thin < 1) throw std::invalid_argument("invalid opts: num_thin < 1");
    if (!(tau_step_sd > 0.0)) {
      throw std::invalid_argument("invalid opts: tau_step_sd must be positive");
    }
  }
};

/// Complete sampler state for one forest.
struct ForestState {
  std::vector<SoftTree> trees;
  double sigma = 1.0;
  double sigma_mu = 1.0;
  SparsityState sparsity;
  Hypers hypers;
  Opts opts;
  /// Per-tree fitted values on the rows of `cached_X`.
  std::vector<Eigen::VectorXd> tree_fits;
  Eigen::VectorXd total_fit;
  Eigen::MatrixXd cached_X;
  std::vector<int> branch_var_counts;
};

inline ForestState init_forest_state(const Hypers& hypers, const Opts& opts,
                                     Rng& rng) {
  hypers.validate();
  opts.validate();
  ForestState st;
  st.hypers = hypers;
  st.opts = opts;
  st.sigma = hypers.sigma_hat;
  st.sigma_mu = hypers.sigma_mu_hat();
  st.sparsity = SparsityState::uniform(hypers.num_vars, 1.0);
  st.sparsity.update_enabled = opts.update_s;
  st.branch_var_counts.assign(static_cast<std::size_t>(hypers.num_vars), 0);
  st.trees.resize(static_cast<std::size_t>(hypers.num_tree));
  for (auto& tree : st.trees) {
    tree.hard = opts.hard_trees;
    tree.tau = opts.hard_trees ? 0.0 : sample_tau_prior(rng, hypers);
  }
  return st;
}

inline std::vector<int> count_branch_vars(std::span<const SoftTree> trees,
                                          std::size_t num_vars) {
  std::vector<int> counts(num_vars, 0);
  for (const auto& tree : trees) accumulate_var_counts(tree.root, counts);
  return counts;
}

/// Recomputes per-tree fits when X differs from the rows they were cached on.
inline void ensure_cache(ForestState& st, const Eigen::MatrixXd& X) {
  const bool fresh = st.cached_X.rows() == X.rows() &&
                     st.cached_X.cols() == X.cols() &&
                     st.tree_fits.size() == st.trees.size() &&
                     st.cached_X == X;
  if (fresh) return;
  st.cached_X = X;
  st.tree_fits.clear();
  st.total_fit = Eigen::VectorXd::Zero(X.rows());
  for (const auto& tree : st.trees) {
    st.tree_fits.push_back(tree_predict(tree, X));
    st.total_fit += st.tree_fits.back();
  }
}

// ---------------------------------------------------------------------------
// Marginal likelihood and leaf posterior.

namespace detail {

inline void check_leaf_model_args(const Eigen::MatrixXd& phi,
                                  const Eigen::VectorXd& r,
                                  const Eigen::VectorXd& w, double sigma,
                                  double sigma_mu) {
  if (phi.rows() != r.size() || r.size() != w.size()) {
    throw std::invalid_argument("leaf model: length mismatch");
  }
  if (!(sigma > 0.0) || !(sigma_mu > 0.0)) {
    throw std::invalid_argument("leaf model: sigma and sigma_mu must be > 0");
  }
  if (w.size() > 0 && !(w.minCoeff() > 0.0)) {
    throw std::invalid_argument("leaf model: weights must be positive");
  }
}

/// Posterior precision Lambda = Phi' W Phi / sigma^2 + I / sigma_mu^2 and
/// b = Phi' W r / sigma^2.
struct LeafPosterior {
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::VectorXd b;
};

inline LeafPosterior leaf_posterior(const Eigen::MatrixXd& phi,
                                    const Eigen::VectorXd& r,
                                    const Eigen::VectorXd& w, double sigma,
                                    double sigma_mu) {
  const double inv_s2 = 1.0 / (sigma * sigma);
  const Eigen::MatrixXd wphi = phi.array().colwise() * w.array();
  Eigen::MatrixXd lambda = (phi.transpose() * wphi) * inv_s2;
  lambda.diagonal().array() += 1.0 / (sigma_mu * sigma_mu);
  LeafPosterior out{Eigen::LLT<Eigen::MatrixXd>(lambda),
                    (wphi.transpose() * r) * inv_s2};
  if (out.chol.info() != Eigen::Success) {
    throw std::runtime_error("leaf posterior precision is not positive definite");
  }
  return out;
}

}  // namespace detail

/// log of the marginal density of r after integrating out leaf values:
/// r ~ Normal(0, diag(sigma^2 / w) + sigma_mu^2 Phi Phi').
inline double log_marginal(const Eigen::MatrixXd& phi, const Eigen::VectorXd& r,
                           const Eigen::VectorXd& w, double sigma,
                           double sigma_mu) {
  detail::check_leaf_model_args(phi, r, w, sigma, sigma_mu);
  const auto n = static_cast<double>(r.size());
  if (r.size() == 0) return 0.0;
  const auto post = detail::leaf_posterior(phi, r, w, sigma, sigma_mu);
  const Eigen::MatrixXd L = post.chol.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  const Eigen::VectorXd z = post.chol.matrixL().solve(post.b);
  const double wrr = (w.array() * r.array().square()).sum() / (sigma * sigma);
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - n * std::log(sigma) +
         0.5 * w.array().log().sum() - 0.5 * wrr -
         static_cast<double>(phi.cols()) * std::log(sigma_mu) -
         0.5 * log_det + 0.5 * z.squaredNorm();
}

inline double log_marginal(const SoftTree& tree, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& r, const Eigen::VectorXd& w,
                           double sigma, double sigma_mu) {
  return log_marginal(leaf_basis(tree, X), r, w, sigma, sigma_mu);
}

/// Draws leaf values from Normal(Lambda^{-1} b, Lambda^{-1}).
inline Eigen::VectorXd draw_leaves(Rng& rng, const Eigen::MatrixXd& phi,
                                   const Eigen::VectorXd& r,
                                   const Eigen::VectorXd& w, double sigma,
                                   double sigma_mu) {
  detail::check_leaf_model_args(phi, r, w, sigma, sigma_mu);
  const auto post = detail::leaf_posterior(phi, r, w, sigma, sigma_mu);
  Eigen::VectorXd z(phi.cols());
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
  return post.chol.solve(post.b) + post.chol.matrixU().solve(z);
}

// ---------------------------------------------------------------------------
// Tree structure moves.

enum class Move { kGrow, kPrune };

struct Proposal {
  SoftTree tree;
  Move move = Move::kGrow;
  NodePath path;
  int var = -1;
  /// log[q(current | proposal) / q(proposal | current)].
  double log_q_ratio = 0.0;
};

/// GROW or PRUNE with probability 1/2 each; stumps always GROW.
inline Proposal propose_tree(Rng& rng, const SoftTree& tree,
                             const SparsityState& sparsity,
                             const Hypers& /*hypers*/) {
  const std::size_t dims = sparsity.size();
  const bool stump = tree.root.is_leaf();
  const double p_grow_here = stump ? 1.0 : 0.5;
  Proposal prop;
  prop.tree = tree;
  if (stump || rng.uniform() < 0.5) {
    const auto leaves = leaf_paths(tree.root);
    const auto& path = leaves[rng.uniform_index(leaves.size())];
    const auto rect = branch_hyperrect(tree, path, dims);
    const auto j = rng.categorical(sparsity.s());
    const double width = rect.upper[j] - rect.lower[j];
    const double cut = rng.uniform(rect.lower[j], rect.upper[j]);
    find_node(prop.tree.root, path)->grow(static_cast<int>(j), cut);
    const auto nogs_after = nog_paths(prop.tree.root).size();
    const double log_fwd = std::log(p_grow_here) -
                           std::log(static_cast<double>(leaves.size())) +
                           sparsity.log_s()[j] - std::log(width);
    const double log_rev =
        std::log(0.5) - std::log(static_cast<double>(nogs_after));
    prop.move = Move::kGrow;
    prop.path = path;
    prop.var = static_cast<int>(j);
    prop.log_q_ratio = log_rev - log_fwd;
    return prop;
  }
  const auto nogs = nog_paths(tree.root);
  const auto& path = nogs[rng.uniform_index(nogs.size())];
  Node* node = find_node(prop.tree.root, path);
  const auto j = static_cast<std::size_t>(node->var);
  const auto rect = branch_hyperrect(tree, path, dims);
  const double width = rect.upper[j] - rect.lower[j];
  node->prune();
  const bool stump_after = prop.tree.root.is_leaf();
  const auto leaves_after = num_leaves(prop.tree.root);
  const double log_fwd =
      std::log(0.5) - std::log(static_cast<double>(nogs.size()));
  const double log_rev = std::log(stump_after ? 1.0 : 0.5) -
                         std::log(static_cast<double>(leaves_after)) +
                         sparsity.log_s()[j] - std::log(width);
  prop.move = Move::kPrune;
  prop.path = path;
  prop.var = static_cast<int>(j);
  prop.log_q_ratio = log_rev - log_fwd;
  return prop;
}

/// Accepts with probability min(1, exp(log_ratio)).
inline bool mh_accept(Rng& rng, double log_ratio) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

/// One Metropolis-Hastings structure step against an arbitrary tree
/// log-likelihood. `current_loglik` is updated on acceptance. Returns the
/// accepted proposal, or nullopt on rejection.
template <typename LogLik>
std::optional<Proposal> mh_tree_step(Rng& rng, SoftTree& tree,
                                     const SparsityState& sparsity,
                                     const Hypers& hypers,
                                     double& current_loglik, LogLik&& loglik) {
  Proposal prop = propose_tree(rng, tree, sparsity, hypers);
  const double new_loglik = loglik(prop.tree);
  const double log_ratio = new_loglik - current_loglik +
                           log_tree_prior(prop.tree, hypers, sparsity) -
                           log_tree_prior(tree, hypers, sparsity) +
                           prop.log_q_ratio;
  if (!mh_accept(rng, log_ratio)) return std::nullopt;
  tree = prop.tree;
  current_loglik = new_loglik;
  return prop;
}

/// Random-walk MH on log(tau) with an Exponential(mean tau_scale) prior.
/// Returns true if the move was accepted.
template <typename LogLik>
bool update_tau_step(Rng& rng, SoftTree& tree, const Hypers& hypers,
                     double step_sd, double& current_loglik,
                     LogLik&& loglik) {
  if (tree.hard) return false;
  const double old_tau = tree.tau;
  const double new_tau = old_tau * std::exp(step_sd * rng.normal());
  SoftTree candidate = tree;
  candidate.tau = new_tau;
  const double new_loglik = loglik(candidate);
  const double log_ratio =
      new_loglik - current_loglik +
      log_exponential_density(new_tau, hypers.tau_scale) -
      log_exponential_density(old_tau, hypers.tau_scale) +
      std::log(new_tau) - std::log(old_tau);
  if (!mh_accept(rng, log_ratio)) return false;
  tree.tau = new_tau;
  current_loglik = new_loglik;
  return true;
}

/// MH structure update of tree t against residuals r with weights w,
/// keeping branch_var_counts in sync.
inline bool mh_tree_update(Rng& rng, ForestState& st, std::size_t t,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& r,
                           const Eigen::VectorXd& w) {
  auto loglik = [&](const SoftTree& tr) {
    return log_marginal(tr, X, r, w, st.sigma, st.sigma_mu);
  };
  double current = loglik(st.trees[t]);
  auto accepted = mh_tree_step(rng, st.trees[t], st.sparsity, st.hypers,
                               current, loglik);
  if (!accepted) return false;
  const auto j = static_cast<std::size_t>(accepted->var);
  st.branch_var_counts[j] += accepted->move == Move::kGrow ? 1 : -1;
  return true;
}

/// Bandwidth update of tree t against residuals r with weights w.
inline bool update_tau(Rng& rng, ForestState& st, std::size_t t,
                       const Eigen::MatrixXd& X, const Eigen::VectorXd& r,
                       const Eigen::VectorXd& w) {
  if (!st.opts.update_tau) return false;
  auto loglik = [&](const SoftTree& tr) {
    return log_marginal(tr, X, r, w, st.sigma, st.sigma_mu);
  };
  double current = loglik(st.trees[t]);
  return update_tau_step(rng, st.trees[t], st.hypers, st.opts.tau_step_sd,
                         current, loglik);
}

// ---------------------------------------------------------------------------
// Scalar hyperparameter updates.

/// Univariate slice sampler with stepping out and shrinkage. `log_density`
/// must return -inf outside the support.
template <typename LogDensity>
double slice_sample(Rng& rng, double x0, LogDensity&& log_density, double width,
                    double lower = -std::numeric_limits<double>::infinity(),
                    double upper = std::numeric_limits<double>::infinity(),
                    int max_steps = 1000) {
  const double log_y = log_density(x0) - rng.exponential(1.0);
  double left = x0 - width * rng.uniform();
  double right = left + width;
  int j = static_cast<int>(std::floor(max_steps * rng.uniform()));
  int k = max_steps - 1 - j;
  while (j > 0 && left > lower && log_density(left) > log_y) {
    left -= width;
    --j;
  }
  while (k > 0 && right < upper && log_density(right) > log_y) {
    right += width;
    --k;
  }
  left = std::max(left, lower);
  right = std::min(right, upper);
  for (int iter = 0; iter < 10000; ++iter) {
    const double x1 = left + rng.uniform() * (right - left);
    if (log_density(x1) > log_y) return x1;
    if (x1 < x0) {
      left = x1;
    } else {
      right = x1;
    }
  }
  return x0;
}

/// log of the full conditional of a scale parameter v with a half-Cauchy(scale)
/// prior and n Gaussian terms with weighted sum of squares `sum_sq`:
/// v^{-n} exp(-sum_sq / (2 v^2)) / (1 + (v / scale)^2).
inline double log_scale_conditional(double v, double n, double sum_sq,
                                    double prior_scale) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    return -std::numeric_limits<double>::infinity();
  }
  return -n * std::log(v) - 0.5 * sum_sq / (v * v) +
         log_half_cauchy_density(v, prior_scale);
}

inline double sample_scale_conditional(Rng& rng, double current, double n,
                                       double sum_sq, double prior_scale) {
  auto logf = [&](double v) {
    return log_scale_conditional(v, n, sum_sq, prior_scale);
  };
  return slice_sample(rng, current, logf, prior_scale, 0.0);
}

/// sigma | residuals under a half-Cauchy(sigma_hat) prior.
inline double update_sigma(Rng& rng, ForestState& st,
                           const Eigen::VectorXd& residuals,
                           const Eigen::VectorXd& w) {
  if (!st.opts.update_sigma) return st.sigma;
  const double sum_sq = (w.array() * residuals.array().square()).sum();
  st.sigma = sample_scale_conditional(rng, st.sigma,
                                      static_cast<double>(residuals.size()),
                                      sum_sq, st.hypers.sigma_hat);
  return st.sigma;
}

/// sigma_mu | all leaf values under a half-Cauchy(sigma_mu_hat) prior.
inline double update_sigma_mu(Rng& rng, ForestState& st) {
  if (!st.opts.update_sigma_mu) return st.sigma_mu;
  double sum_sq = 0.0;
  double n = 0.0;
  for (const auto& tree : st.trees) {
    for_each_leaf(tree.root, [&](const Node& leaf) {
      sum_sq += leaf.mu * leaf.mu;
      n += 1.0;
    });
  }
  st.sigma_mu = sample_scale_conditional(rng, st.sigma_mu, n, sum_sq,
                                         st.hypers.sigma_mu_hat());
  return st.sigma_mu;
}

/// s | counts ~ Dirichlet(alpha / P + c_1, ..., alpha / P + c_P), drawn on the
/// log scale.
inline void draw_sparsity(Rng& rng, SparsityState& sparsity,
                          std::span<const int> counts) {
  const auto p = static_cast<double>(sparsity.size());
  std::vector<double> log_w(sparsity.size());
  for (std::size_t j = 0; j < log_w.size(); ++j) {
    log_w[j] = rng.log_gamma(sparsity.alpha / p + counts[j]);
  }
  sparsity.set_log_weights(std::move(log_w));
}

inline void update_s(Rng& rng, ForestState& st) {
  if (!st.opts.update_s) return;
  draw_sparsity(rng, st.sparsity, st.branch_var_counts);
}

/// log conditional of rho = alpha / (alpha + P) given log s: the
/// Beta(a, b) prior on rho times the Dirichlet(alpha / P) density of s.
inline double log_rho_conditional(double rho, std::span<const double> log_s,
                                  double shape_a, double shape_b) {
  if (!(rho > 0.0 && rho < 1.0)) return -std::numeric_limits<double>::infinity();
  const auto p = static_cast<double>(log_s.size());
  const double alpha = p * rho / (1.0 - rho);
  double sum_log_s = 0.0;
  for (double v : log_s) sum_log_s += v;
  return (shape_a - 1.0) * std::log(rho) + (shape_b - 1.0) * std::log1p(-rho) +
         std::lgamma(alpha) - p * std::lgamma(alpha / p) +
         (alpha / p) * sum_log_s;
}

inline double sample_alpha_conditional(Rng& rng, double alpha,
                                       std::span<const double> log_s,
                                       double shape_a, double shape_b) {
  const auto p = static_cast<double>(log_s.size());
  const double rho0 = alpha / (alpha + p);
  auto logf = [&](double rho) {
    return log_rho_conditional(rho, log_s, shape_a, shape_b);
  };
  const double rho = slice_sample(rng, rho0, logf, 1.0, 0.0, 1.0);
  return p * rho / (1.0 - rho);
}

inline double update_alpha(Rng& rng, ForestState& st) {
  if (!st.opts.update_s) return st.sparsity.alpha;
  st.sparsity.alpha = sample_alpha_conditional(
      rng, st.sparsity.alpha, st.sparsity.log_s(), st.hypers.alpha_shape_a,
      st.hypers.alpha_shape_b);
  return st.sparsity.alpha;
}

// ---------------------------------------------------------------------------
// Full sweep.

/// One Bayesian backfitting sweep: for each tree in order, structure MH,
/// bandwidth MH, then leaf draw; then sigma, sigma_mu, s and alpha. Unit
/// weights give the homoskedastic sampler.
inline void gibbs_sweep(Rng& rng, ForestState& st, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  if (X.rows() != y.size() || y.size() != w.size()) {
    throw std::invalid_argument("gibbs_sweep: row count mismatch");
  }
  if (X.cols() != st.hypers.num_vars) {
    throw std::invalid_argument("gibbs_sweep: expected " +
                                std::to_string(st.hypers.num_vars) +
                                " columns, got " + std::to_string(X.cols()));
  }
  ensure_cache(st, X);
  for (std::size_t t = 0; t < st.trees.size(); ++t) {
    SoftTree& tree = st.trees[t];
    const Eigen::VectorXd r = y - (st.total_fit - st.tree_fits[t]);

    Eigen::MatrixXd phi = leaf_basis(tree, X);
    Eigen::MatrixXd candidate_phi;
    auto loglik = [&](const SoftTree& tr) {
      candidate_phi = leaf_basis(tr, X);
      return log_marginal(candidate_phi, r, w, st.sigma, st.sigma_mu);
    };
    double current = log_marginal(phi, r, w, st.sigma, st.sigma_mu);

    if (auto acc = mh_tree_step(rng, tree, st.sparsity, st.hypers, current,
                                loglik)) {
      phi = candidate_phi;
      st.branch_var_counts[static_cast<std::size_t>(acc->var)] +=
          acc->move == Move::kGrow ? 1 : -1;
    }
    if (!tree.hard && st.opts.update_tau) {
      if (update_tau_step(rng, tree, st.hypers, st.opts.tau_step_sd, current,
                          loglik)) {
        phi = candidate_phi;
      }
    }
    const Eigen::VectorXd mu =
        draw_leaves(rng, phi, r, w, st.sigma, st.sigma_mu);
    set_leaf_values(tree.root, std::span<const double>(mu.data(), mu.size()));
    Eigen::VectorXd fit = phi * mu;
    st.total_fit += fit - st.tree_fits[t];
    st.tree_fits[t] = std::move(fit);
  }
  st.total_fit.setZero();
  for (const auto& fit : st.tree_fits) st.total_fit += fit;

  update_sigma(rng, st, y - st.total_fit, w);
  update_sigma_mu(rng, st);
  update_s(rng, st);
  update_alpha(rng, st);
}

inline void gibbs_sweep(Rng& rng, ForestState& st, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& y) {
  gibbs_sweep(rng, st, X, y, Eigen::VectorXd::Ones(y.size()));
}

}  // namespace softbart
