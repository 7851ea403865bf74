#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "softbart/forest.hpp"
#include "softbart/sampler.hpp"
#include "test_util.hpp"

namespace softbart {
namespace {

using testing::random_design;
using testing::random_tree;

Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

// Normalized CDF of an unnormalized log density on (lo, hi) by adaptive
// quadrature.
template <typename LogF>
auto quadrature_cdf(LogF logf, double lo, double hi) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [logf](double x) { return std::exp(logf(x)); };
  const double total = gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-12);
  return [f, lo, total](double x) {
    return gauss_kronrod<double, 61>::integrate(f, lo, x, 15, 1e-12) / total;
  };
}

TEST(LogMarginal, MatchesDenseGaussian) {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.uniform_index(20));
    const SoftTree tree = random_tree(rng, 3, 3, 0.7, rep % 5 == 0);
    const Eigen::MatrixXd X = random_design(rng, n, 3);
    const Eigen::VectorXd r = random_vector(rng, n, -2.0, 2.0);
    const Eigen::VectorXd w = random_vector(rng, n, 0.2, 3.0);
    const double sigma = rng.uniform(0.3, 2.0);
    const double sigma_mu = rng.uniform(0.1, 1.5);

    const Eigen::MatrixXd phi = leaf_basis(tree, X);
    Eigen::MatrixXd cov = sigma_mu * sigma_mu * phi * phi.transpose();
    cov.diagonal() += (sigma * sigma / w.array()).matrix();
    EXPECT_NEAR(log_marginal(tree, X, r, w, sigma, sigma_mu),
                testing::dense_mvn_logpdf(r, cov), 1e-8);
  }
}

TEST(LogMarginal, EdgeCases) {
  const Eigen::MatrixXd phi(0, 2);
  const Eigen::VectorXd empty(0);
  EXPECT_EQ(log_marginal(phi, empty, empty, 1.0, 1.0), 0.0);
  const Eigen::MatrixXd phi2 = Eigen::MatrixXd::Ones(3, 1);
  const Eigen::VectorXd r = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(log_marginal(phi2, r, r, 1.0, 1.0), std::invalid_argument);
  const Eigen::VectorXd r3 = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(log_marginal(phi2, r3, r3, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(log_marginal(phi2, r3, Eigen::VectorXd::Ones(3), 0.0, 1.0),
               std::invalid_argument);
}

TEST(DrawLeaves, MomentsMatchConjugatePosterior) {
  Rng rng(12);
  const SoftTree tree = random_tree(rng, 2, 2, 1.0);
  const Eigen::MatrixXd X = random_design(rng, 15, 2);
  const Eigen::VectorXd r = random_vector(rng, 15, -1.0, 1.0);
  const Eigen::VectorXd w = random_vector(rng, 15, 0.5, 2.0);
  const double sigma = 0.7, sigma_mu = 0.4;
  const Eigen::MatrixXd phi = leaf_basis(tree, X);

  // Posterior in covariance form, independent of the sampler's precision form.
  const Eigen::Index L = phi.cols();
  const Eigen::MatrixXd prior_cov =
      sigma_mu * sigma_mu * Eigen::MatrixXd::Identity(L, L);
  Eigen::MatrixXd marg = phi * prior_cov * phi.transpose();
  marg.diagonal() += (sigma * sigma / w.array()).matrix();
  const Eigen::MatrixXd gain = prior_cov * phi.transpose() * marg.inverse();
  const Eigen::VectorXd mean = gain * r;
  const Eigen::MatrixXd cov = prior_cov - gain * phi * prior_cov;

  const int n = 40000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(L);
  Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(L, L);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd mu = draw_leaves(rng, phi, r, w, sigma, sigma_mu);
    sum += mu;
    sum_sq += mu * mu.transpose();
  }
  const Eigen::VectorXd emp_mean = sum / n;
  const Eigen::MatrixXd emp_cov =
      sum_sq / n - emp_mean * emp_mean.transpose();
  for (Eigen::Index k = 0; k < L; ++k) {
    const double se = std::sqrt(cov(k, k) / n);
    EXPECT_NEAR(emp_mean[k], mean[k], 3 * se);
    // Var of a sample variance is about 2 sigma^4 / n.
    EXPECT_NEAR(emp_cov(k, k), cov(k, k), 3 * cov(k, k) * std::sqrt(2.0 / n));
  }
}

// Two-state chain: pseudo-likelihood is a for stumps, b for single splits and
// zero mass for deeper trees, so the exact stationary law is
// (1 - g) e^a : g (1 - g / 2^beta)^2 e^b.
TEST(StructureMove, DetailedBalanceOnTwoShapes) {
  Hypers h;
  h.gamma = 0.8;
  h.beta = 1.5;
  h.num_vars = 3;
  SparsityState s;
  s.set_s({0.5, 0.3, 0.2});
  const double a = 0.0, b = std::log(0.5);
  auto loglik = [&](const SoftTree& t) {
    if (t.root.is_leaf()) return a;
    if (num_branches(t.root) == 1) return b;
    return -std::numeric_limits<double>::infinity();
  };
  const double leaf1 = 1.0 - h.gamma / std::pow(2.0, h.beta);
  const double w_stump = (1.0 - h.gamma) * std::exp(a);
  const double w_split = h.gamma * leaf1 * leaf1 * std::exp(b);
  const double expected = w_stump / (w_stump + w_split);

  Rng rng(4);
  SoftTree tree;
  tree.hard = true;
  double current = loglik(tree);
  const int n = 400000;
  double stumps = 0;
  std::vector<double> var_counts(3, 0.0);
  for (int i = 0; i < n; ++i) {
    mh_tree_step(rng, tree, s, h, current, loglik);
    if (tree.root.is_leaf()) {
      ++stumps;
    } else {
      var_counts[static_cast<std::size_t>(tree.root.var)] += 1;
    }
  }
  EXPECT_NEAR(stumps / n, expected, 0.005);
  const double splits = n - stumps;
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(var_counts[j] / splits, s.s()[j], 0.01);
  }
}

// With a flat likelihood the structure and bandwidth moves leave the prior
// invariant.
TEST(StructureMove, PriorRecovery) {
  Hypers h;
  h.num_vars = 4;
  const auto s = SparsityState::uniform(4);
  Rng rng(2024);
  auto flat = [](const SoftTree&) { return 0.0; };
  const int num_trees = 20, sweeps = 10000;
  std::vector<SoftTree> trees(num_trees);
  for (auto& t : trees) t.tau = sample_tau_prior(rng, h);
  double roots = 0, tau_sum = 0, leaves = 0, n = 0;
  for (int it = 0; it < sweeps; ++it) {
    for (auto& t : trees) {
      double cur = 0.0;
      mh_tree_step(rng, t, s, h, cur, flat);
      update_tau_step(rng, t, h, 0.3, cur, flat);
      roots += !t.root.is_leaf();
      tau_sum += t.tau;
      leaves += static_cast<double>(num_leaves(t.root));
      n += 1;
    }
  }
  EXPECT_NEAR(roots / n, 0.95, 0.02);
  EXPECT_NEAR(tau_sum / n, 0.1, 0.005);

  // Expected leaf count under the prior, by Monte Carlo from direct draws.
  double direct = 0;
  for (int i = 0; i < 200000; ++i) {
    direct += static_cast<double>(num_leaves(sample_tree_from_prior(rng, h, s).root));
  }
  EXPECT_NEAR(leaves / n, direct / 200000, 0.05);
}

TEST(SliceSampler, ScaleConditionalIsInvariant) {
  const double n_obs = 30, sum_sq = 30 * 0.64, scale = 1.0;
  auto logf = [&](double v) {
    return log_scale_conditional(v, n_obs, sum_sq, scale);
  };
  const auto cdf = quadrature_cdf(logf, 0.0, 20.0);
  Rng rng(6);
  double v = 3.0;
  std::vector<double> draws;
  for (int i = 0; i < 25000; ++i) {
    v = sample_scale_conditional(rng, v, n_obs, sum_sq, scale);
    if (i >= 100 && i % 5 == 0) draws.push_back(v);
  }
  EXPECT_LT(testing::ks_distance(draws, cdf), 0.03);
}

TEST(SliceSampler, AlphaConditionalIsInvariant) {
  Rng rng(7);
  SparsityState s = SparsityState::uniform(10, 1.0);
  const std::vector<int> counts{5, 3, 0, 0, 1, 0, 0, 0, 0, 0};
  draw_sparsity(rng, s, counts);
  const auto log_s = s.log_s();
  auto logf = [&](double rho) { return log_rho_conditional(rho, log_s, 0.5, 1.0); };
  const auto cdf = quadrature_cdf(logf, 0.0, 1.0);
  double alpha = 1.0;
  std::vector<double> rhos;
  for (int i = 0; i < 25000; ++i) {
    alpha = sample_alpha_conditional(rng, alpha, log_s, 0.5, 1.0);
    if (i >= 100 && i % 5 == 0) rhos.push_back(alpha / (alpha + 10.0));
  }
  EXPECT_LT(testing::ks_distance(rhos, cdf), 0.03);
}

TEST(Sparsity, DirichletMoments) {
  Rng rng(8);
  SparsityState s = SparsityState::uniform(4, 2.0);
  const std::vector<int> counts{6, 2, 0, 0};
  const double total = 2.0 + 8.0;
  const std::vector<double> shape{0.5 + 6, 0.5 + 2, 0.5, 0.5};
  std::vector<double> sum(4, 0.0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    draw_sparsity(rng, s, counts);
    double check = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      sum[j] += s.s()[j];
      check += s.s()[j];
    }
    ASSERT_NEAR(check, 1.0, 1e-12);
  }
  for (std::size_t j = 0; j < 4; ++j) {
    const double m = shape[j] / total;
    const double var = m * (1 - m) / (total + 1);
    EXPECT_NEAR(sum[j] / n, m, 3.5 * std::sqrt(var / n));
  }
}

TEST(Sparsity, TinyShapesStayFinite) {
  Rng rng(9);
  SparsityState s = SparsityState::uniform(1000, 0.01);
  std::vector<int> counts(1000, 0);
  counts[3] = 4;
  draw_sparsity(rng, s, counts);
  for (double v : s.log_s()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(s.s()[3], 0.5);
}

// Small regression problem shared by the sweep-level tests.
struct Problem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Problem small_problem(std::uint64_t seed, Eigen::Index n = 60) {
  Rng rng(seed);
  Problem p;
  p.X = random_design(rng, n, 3);
  p.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.y[i] = std::sin(3 * p.X(i, 0)) + p.X(i, 1) + rng.normal(0.0, 0.1);
  }
  p.y.array() -= p.y.mean();
  return p;
}

Hypers small_hypers() {
  Hypers h;
  h.num_tree = 10;
  h.num_vars = 3;
  return h;
}

TEST(GibbsSweep, CacheStaysConsistent) {
  const auto p = small_problem(1);
  ForestState st;
  Rng rng(10);
  st = init_forest_state(small_hypers(), Opts{}, rng);
  for (int it = 0; it < 200; ++it) {
    gibbs_sweep(rng, st, p.X, p.y);
    const Eigen::VectorXd direct = forest_predict(st.trees, p.X);
    ASSERT_LE((st.total_fit - direct).cwiseAbs().maxCoeff(), 1e-10);
    for (std::size_t t = 0; t < st.trees.size(); ++t) {
      ASSERT_LE((st.tree_fits[t] - tree_predict(st.trees[t], p.X))
                    .cwiseAbs()
                    .maxCoeff(),
                1e-10);
    }
    ASSERT_EQ(st.branch_var_counts, count_branch_vars(st.trees, 3));
  }
}

TEST(GibbsSweep, CacheRebuiltForNewDesign) {
  const auto p = small_problem(1);
  const auto q = small_problem(2);
  Rng rng(10);
  auto st = init_forest_state(small_hypers(), Opts{}, rng);
  for (int it = 0; it < 20; ++it) gibbs_sweep(rng, st, p.X, p.y);
  gibbs_sweep(rng, st, q.X, q.y);
  EXPECT_LE((st.total_fit - forest_predict(st.trees, q.X)).cwiseAbs().maxCoeff(),
            1e-10);
}

TEST(GibbsSweep, UnitWeightsBitIdentical) {
  const auto p = small_problem(3);
  Forest a(small_hypers(), Opts{}, 77);
  Forest b(small_hypers(), Opts{}, 77);
  const Eigen::MatrixXd ra = a.do_gibbs(p.X, p.y, p.X, 30);
  const Eigen::MatrixXd rb =
      b.do_gibbs_weighted(p.X, p.y, Eigen::VectorXd::Ones(p.y.size()), p.X, 30);
  EXPECT_TRUE(ra == rb);
  EXPECT_EQ(a.get_sigma(), b.get_sigma());
  EXPECT_EQ(a.get_s(), b.get_s());
}

TEST(GibbsSweep, SameSeedSameChain) {
  const auto p = small_problem(4);
  Forest a(small_hypers(), Opts{}, 5);
  Forest b(small_hypers(), Opts{}, 5);
  Forest c(small_hypers(), Opts{}, 6);
  const auto ra = a.do_gibbs(p.X, p.y, p.X, 25);
  const auto rb = b.do_gibbs(p.X, p.y, p.X, 25);
  const auto rc = c.do_gibbs(p.X, p.y, p.X, 25);
  EXPECT_TRUE(ra == rb);
  EXPECT_FALSE(ra == rc);
}

TEST(GibbsSweep, DisabledUpdatesHoldValues) {
  const auto p = small_problem(5);
  Opts o;
  o.update_sigma = false;
  o.update_sigma_mu = false;
  o.update_s = false;
  Forest f(small_hypers(), o, 1);
  f.set_sigma(0.37);
  f.set_sigma_mu(0.21);
  const auto s0 = f.get_s();
  const double alpha0 = f.get_alpha();
  f.do_gibbs(p.X, p.y, p.X, 30);
  EXPECT_EQ(f.get_sigma(), 0.37);
  EXPECT_EQ(f.get_sigma_mu(), 0.21);
  EXPECT_EQ(f.get_s(), s0);
  EXPECT_EQ(f.get_alpha(), alpha0);

  Opts o2;
  o2.update_tau = false;
  Forest g(small_hypers(), o2, 2);
  std::vector<double> taus;
  for (const auto& t : g.trees()) taus.push_back(t.tau);
  g.do_gibbs(p.X, p.y, p.X, 10);
  for (std::size_t t = 0; t < taus.size(); ++t) EXPECT_EQ(g.trees()[t].tau, taus[t]);
}

TEST(GibbsSweep, HardTreesStayHard) {
  const auto p = small_problem(6);
  Opts o;
  o.hard_trees = true;
  Forest f(small_hypers(), o, 3);
  f.do_gibbs(p.X, p.y, p.X, 20);
  for (const auto& t : f.trees()) {
    EXPECT_TRUE(t.hard);
    EXPECT_EQ(t.tau, 0.0);
  }
  // Hard predictions are piecewise constant: one leaf weight per row.
  for (const auto& t : f.trees()) {
    const Eigen::MatrixXd phi = leaf_basis(t, p.X);
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
      EXPECT_EQ(phi.row(i).sum(), 1.0);
      EXPECT_EQ(phi.row(i).maxCoeff(), 1.0);
    }
  }
}

TEST(GibbsSweep, FitsSignal) {
  const auto p = small_problem(7, 150);
  Forest f(small_hypers(), Opts{}, 11);
  const Eigen::MatrixXd draws = f.do_gibbs(p.X, p.y, p.X, 400);
  const Eigen::VectorXd post = draws.bottomRows(200).colwise().mean().transpose();
  const double rmse = std::sqrt((post - p.y).squaredNorm() / p.y.size());
  EXPECT_LT(rmse, 0.2);
  EXPECT_LT(f.get_sigma(), 0.3);
}

TEST(GibbsSweep, RejectsBadShapes) {
  const auto p = small_problem(8);
  Rng rng(1);
  auto st = init_forest_state(small_hypers(), Opts{}, rng);
  Eigen::MatrixXd wide(p.X.rows(), 4);
  wide.setConstant(0.5);
  EXPECT_THROW(gibbs_sweep(rng, st, wide, p.y), std::invalid_argument);
  EXPECT_THROW(gibbs_sweep(rng, st, p.X, p.y.head(10)), std::invalid_argument);
}

TEST(Opts, Validate) {
  Opts o;
  o.num_thin = 0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
  o = Opts{};
  o.num_burn = -1;
  EXPECT_THROW(o.validate(), std::invalid_argument);
}

TEST(LogMarginal, SingleObservationStump) {
  const SoftTree stump;
  Eigen::MatrixXd X(1, 2);
  X << 0.3, 0.8;
  const Eigen::VectorXd r = Eigen::VectorXd::Constant(1, 0.7);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  const double s2 = 0.5 * 0.5 + 0.2 * 0.2;
  const double expected = -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5 * 0.49 / s2;
  EXPECT_NEAR(log_marginal(stump, X, r, w, 0.5, 0.2), expected, 1e-14);
}

TEST(DrawLeaves, SingleLeafPosteriorMean) {
  Rng rng(41);
  const Eigen::VectorXd r = Eigen::Vector4d(1.0, 0.4, -0.2, 2.0);
  const Eigen::MatrixXd phi = Eigen::MatrixXd::Ones(4, 1);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(4);
  const double sigma = 0.8, sigma_mu = 0.5;
  const double prec = 4.0 / (sigma * sigma) + 1.0 / (sigma_mu * sigma_mu);
  const double mean = (r.sum() / (sigma * sigma)) / prec;
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += draw_leaves(rng, phi, r, w, sigma, sigma_mu)[0];
  EXPECT_NEAR(sum / n, mean, 3.0 * std::sqrt(1.0 / prec / n));
}

TEST(DrawLeaves, NoObservationsDrawsFromPrior) {
  Rng rng(42);
  const Eigen::MatrixXd phi(0, 3);
  const Eigen::VectorXd empty(0);
  const double sigma_mu = 0.4;
  const int n = 50000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd mu = draw_leaves(rng, phi, empty, empty, 1.0, sigma_mu);
    sum += mu;
    sq += mu.cwiseProduct(mu);
  }
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(sum[k] / n, 0.0, 3.0 * sigma_mu / std::sqrt(n));
    // The sample variance of a normal has sd sqrt(2) var / sqrt(n).
    EXPECT_NEAR(sq[k] / n, sigma_mu * sigma_mu,
                3.0 * std::sqrt(2.0) * sigma_mu * sigma_mu / std::sqrt(n));
  }
}

TEST(StructureMove, StumpAlwaysGrows) {
  Rng rng(43);
  const auto sparsity = SparsityState::uniform(3);
  const SoftTree stump;
  for (int i = 0; i < 500; ++i) {
    const Proposal p = propose_tree(rng, stump, sparsity, Hypers{});
    ASSERT_EQ(p.move, Move::kGrow);
    ASSERT_FALSE(p.tree.root.is_leaf());
  }
}

TEST(StructureMove, GrowThenPruneRestoresShape) {
  Rng rng(44);
  const auto sparsity = SparsityState::uniform(3);
  for (int rep = 0; rep < 200; ++rep) {
    const SoftTree tree = random_tree(rng, 3, 3);
    Proposal grow;
    do {
      grow = propose_tree(rng, tree, sparsity, Hypers{});
    } while (grow.move != Move::kGrow);
    SoftTree back = grow.tree;
    find_node(back.root, grow.path)->prune(find_node(tree.root, grow.path)->mu);
    EXPECT_TRUE(same_shape(back.root, tree.root));
    EXPECT_EQ(leaf_values(back.root), leaf_values(tree.root));
    // A prune proposal reverses the grow: its q-ratio is the negative.
    double found = 0.0;
    for (int i = 0; i < 4000 && found == 0.0; ++i) {
      const Proposal prune = propose_tree(rng, grow.tree, sparsity, Hypers{});
      if (prune.move == Move::kPrune && prune.path == grow.path) {
        EXPECT_NEAR(prune.log_q_ratio, -grow.log_q_ratio, 1e-12);
        found = 1.0;
      }
    }
    EXPECT_EQ(found, 1.0);
  }
}

TEST(StructureMove, HandComputedAcceptanceRatio) {
  Hypers h;
  h.num_vars = 1;
  const auto sparsity = SparsityState::uniform(1);
  const double x = 0.3, r = 0.9, sigma = 0.6, sigma_mu = 0.4;
  Eigen::MatrixXd X(1, 1);
  X << x;
  const Eigen::VectorXd rv = Eigen::VectorXd::Constant(1, r);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  auto loglik = [&](const SoftTree& t) {
    return log_marginal(t, X, rv, w, sigma, sigma_mu);
  };
  auto normal_logpdf = [](double v, double var) {
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * v * v / var;
  };
  int accepted = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    SoftTree stump;
    stump.tau = 0.15;
    Rng a(seed);
    const Proposal p = propose_tree(a, stump, sparsity, h);
    const double cut = p.tree.root.cut;
    const double left = 1.0 / (1.0 + std::exp(-(cut - x) / stump.tau));
    const double var_new =
        sigma * sigma + sigma_mu * sigma_mu * (left * left + (1 - left) * (1 - left));
    const double var_old = sigma * sigma + sigma_mu * sigma_mu;
    // Prior: root splits and both children stop; one variable on [0, 1].
    const double p0 = 0.95, p1 = 0.95 / 4.0;
    const double log_prior_ratio =
        std::log(p0) + 2.0 * std::log(1.0 - p1) - std::log(1.0 - p0);
    // Forward: forced grow at the only leaf; reverse: prune with prob 1/2.
    const double log_q = std::log(0.5);
    const double hand = normal_logpdf(r, var_new) - normal_logpdf(r, var_old) +
                        log_prior_ratio + log_q;
    const double library = loglik(p.tree) - loglik(stump) +
                           log_tree_prior(p.tree, h, sparsity) -
                           log_tree_prior(stump, h, sparsity) + p.log_q_ratio;
    ASSERT_NEAR(hand, library, 1e-10);
    const bool expected = hand >= 0.0 || std::log(a.uniform()) < hand;
    Rng b(seed);
    double current = loglik(stump);
    const bool did = mh_tree_step(b, stump, sparsity, h, current, loglik).has_value();
    EXPECT_EQ(did, expected);
    accepted += did ? 1 : 0;
  }
  EXPECT_GT(accepted, 0);
}

TEST(StructureMove, ZeroLogRatioAlwaysAccepted) {
  Rng rng(45);
  for (int i = 0; i < 1000; ++i) ASSERT_TRUE(mh_accept(rng, 0.0));
  EXPECT_FALSE(mh_accept(rng, std::nan("")));
}

TEST(TauMove, RejectedMoveKeepsTau) {
  Rng rng(46);
  SoftTree tree = random_tree(rng, 2, 2);
  const double tau = tree.tau;
  double current = 0.0;
  auto refuse = [&](const SoftTree& t) {
    return t.tau == tau ? 0.0 : -std::numeric_limits<double>::infinity();
  };
  for (int i = 0; i < 100; ++i) {
    EXPECT_FALSE(update_tau_step(rng, tree, Hypers{}, 0.3, current, refuse));
    EXPECT_EQ(tree.tau, tau);
  }
}

TEST(ScaleUpdates, SigmaConcentratesOnTruth) {
  Rng rng(47);
  const int n = 10000;
  double sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double e = 2.0 * rng.normal();
    sum_sq += e * e;
  }
  double v = 1.0, total = 0.0;
  for (int it = 0; it < 2000; ++it) {
    v = sample_scale_conditional(rng, v, n, sum_sq, 1.0);
    if (it >= 200) total += v;
  }
  const double mean = total / 1800.0;
  EXPECT_GE(mean, 1.9);
  EXPECT_LE(mean, 2.1);
}

TEST(ScaleUpdates, SigmaMuConcentratesOnTruth) {
  Rng rng(48);
  Hypers h;
  h.num_tree = 1;
  h.num_vars = 1;
  Opts o;
  ForestState st = init_forest_state(h, o, rng);
  // One tree with 10,000 leaves is awkward; spread them over many stumps.
  st.trees.assign(10000, SoftTree{});
  for (auto& t : st.trees) t.root.mu = 0.3 * rng.normal();
  std::vector<double> draws;
  for (int it = 0; it < 2000; ++it) {
    update_sigma_mu(rng, st);
    if (it >= 200) draws.push_back(st.sigma_mu);
  }
  EXPECT_NEAR(testing::mean(draws), 0.3, 0.02);
}

TEST(Sparsity, SingleUsedVariablePosteriorMean) {
  Rng rng(49);
  SparsityState s = SparsityState::uniform(3, 0.3);
  const std::vector<int> counts{10, 0, 0};
  const int n = 40000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    draw_sparsity(rng, s, counts);
    sum += s.s()[0];
  }
  const double m = 10.1 / 10.3;
  EXPECT_NEAR(sum / n, m, 4.0 * std::sqrt(m * (1 - m) / 11.3 / n));
}

TEST(Sparsity, AlphaLargerForSpreadOutS) {
  Rng rng(50);
  const int p = 20;
  const std::vector<double> uniform(p, -std::log(static_cast<double>(p)));
  std::vector<double> peaked(p, std::log(1e-6));
  peaked[0] = std::log(1.0 - 19e-6);
  auto median_alpha = [&](const std::vector<double>& log_s) {
    std::vector<double> draws;
    double a = 1.0;
    for (int i = 0; i < 6000; ++i) {
      a = sample_alpha_conditional(rng, a, log_s, 0.5, 1.0);
      EXPECT_GT(a, 0.0);
      if (i >= 1000) draws.push_back(a);
    }
    std::nth_element(draws.begin(), draws.begin() + draws.size() / 2, draws.end());
    return draws[draws.size() / 2];
  };
  EXPECT_GT(median_alpha(uniform), 2.0 * median_alpha(peaked));
}

}  // namespace
}  // namespace softbart
