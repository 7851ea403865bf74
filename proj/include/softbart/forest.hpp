#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "softbart/priors.hpp"
#include "softbart/random.hpp"
#include "softbart/sampler.hpp"
#include "softbart/tree.hpp"

namespace softbart {

/// Embeddable forest handle. Inputs are expected on the scaled representation
/// (covariates in [0, 1], outcome already standardized); the handle checks
/// only range and finiteness.
///
/// A handle owns its state and random stream. It may be moved between threads
/// but must not be used concurrently.
class Forest {
 public:
  Forest(const Hypers& hypers, const Opts& opts, std::uint64_t seed)
      : rng_(seed), state_(init_forest_state(hypers, opts, rng_)) {}

  /// Runs `iterations` backfitting sweeps; row r of the result holds the
  /// predictions at X_test after sweep r.
  Eigen::MatrixXd do_gibbs(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                           const Eigen::MatrixXd& X_test, int iterations) {
    return do_gibbs_weighted(X, Y, Eigen::VectorXd::Ones(Y.size()), X_test,
                             iterations);
  }

  /// Heteroskedastic variant: observation i has error variance sigma^2 / w_i.
  Eigen::MatrixXd do_gibbs_weighted(const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& Y,
                                    const Eigen::VectorXd& weights,
                                    const Eigen::MatrixXd& X_test,
                                    int iterations) {
    check_design(X, "X");
    check_design(X_test, "X_test");
    if (Y.size() != X.rows() || weights.size() != X.rows()) {
      throw std::invalid_argument("do_gibbs: X, Y and weights disagree in length");
    }
    if (!Y.allFinite()) throw std::invalid_argument("do_gibbs: Y is not finite");
    if (weights.size() > 0 && !(weights.minCoeff() > 0.0 && weights.allFinite())) {
      throw std::invalid_argument("do_gibbs: weights must be positive and finite");
    }
    if (iterations < 0) throw std::invalid_argument("do_gibbs: negative iterations");
    Eigen::MatrixXd out(iterations, X_test.rows());
    const bool same_rows = X_test.rows() == X.rows() && X_test == X;
    for (int it = 0; it < iterations; ++it) {
      gibbs_sweep(rng_, state_, X, Y, weights);
      if (same_rows) {
        out.row(it) = state_.total_fit.transpose();
      } else {
        out.row(it) = forest_predict(state_.trees, X_test).transpose();
      }
    }
    return out;
  }

  /// Predictions at the current state. Does not mutate the handle.
  Eigen::VectorXd do_predict(const Eigen::MatrixXd& X) const {
    check_design(X, "X");
    return forest_predict(state_.trees, X);
  }

  double get_sigma() const { return state_.sigma; }
  void set_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw std::invalid_argument("set_sigma: sigma must be positive");
    }
    state_.sigma = sigma;
  }

  double get_sigma_mu() const { return state_.sigma_mu; }
  void set_sigma_mu(double sigma_mu) {
    if (!(sigma_mu > 0.0) || !std::isfinite(sigma_mu)) {
      throw std::invalid_argument("set_sigma_mu: sigma_mu must be positive");
    }
    state_.sigma_mu = sigma_mu;
  }

  std::vector<double> get_s() const { return state_.sparsity.s(); }
  void set_s(const std::vector<double>& s) {
    if (s.size() != state_.sparsity.size()) {
      throw std::invalid_argument("set_s: wrong length");
    }
    for (double v : s) {
      if (!(v > 0.0)) throw std::invalid_argument("set_s: entries must be > 0");
    }
    state_.sparsity.set_s(s);
  }

  double get_alpha() const { return state_.sparsity.alpha; }
  void set_alpha(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("set_alpha: alpha must be > 0");
    state_.sparsity.alpha = alpha;
  }

  /// Number of branches splitting on each column.
  std::vector<int> get_counts() const { return state_.branch_var_counts; }

  const std::vector<SoftTree>& trees() const { return state_.trees; }
  const ForestState& state() const { return state_; }
  ForestState& mutable_state() { return state_; }
  const Hypers& hypers() const { return state_.hypers; }
  const Opts& opts() const { return state_.opts; }
  Rng& rng() { return rng_; }

 private:
  void check_design(const Eigen::MatrixXd& X, const char* name) const {
    if (X.cols() != state_.hypers.num_vars) {
      throw std::invalid_argument(std::string(name) + ": expected " +
                                  std::to_string(state_.hypers.num_vars) +
                                  " columns, got " + std::to_string(X.cols()));
    }
    if (X.size() > 0 && !(X.allFinite() && X.minCoeff() >= 0.0 &&
                          X.maxCoeff() <= 1.0)) {
      throw std::invalid_argument(std::string(name) +
                                  ": entries must be finite and lie in [0, 1]");
    }
  }

  Rng rng_;
  ForestState state_;
};

inline Forest make_forest(const Hypers& hypers, const Opts& opts,
                          std::uint64_t seed) {
  return Forest(hypers, opts, seed);
}

}  // namespace softbart
