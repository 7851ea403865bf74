#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "softbart/csv.hpp"
#include "softbart/forest.hpp"
#include "softbart/preprocess.hpp"
#include "softbart/truncnorm.hpp"

namespace softbart {

/// Raised when a fitted model lacks something an operation needs, e.g.
/// prediction without cached trees.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { kRegression, kProbit, kVc, kGbart };

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kRegression: return "regression";
    case ModelKind::kProbit: return "probit";
    case ModelKind::kVc: return "vc";
    case ModelKind::kGbart: return "gbart";
  }
  return "regression";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "regression") return ModelKind::kRegression;
  if (s == "probit") return ModelKind::kProbit;
  if (s == "vc") return ModelKind::kVc;
  if (s == "gbart") return ModelKind::kGbart;
  throw InputError("unknown model kind '" + s + "'");
}

/// Which columns play which role.
struct ModelSpec {
  std::string outcome;
  /// Columns left out of the forest covariates.
  std::vector<std::string> exclude;
  /// Linear covariates: exactly one for vc, one or more for gbart.
  std::vector<std::string> z_columns;
  /// When false, hypers.sigma_hat is used as given (in scaled units).
  bool estimate_sigma_hat = true;
};

/// Posterior draws from any of the model drivers. Draw matrices have one row
/// per saved iteration and are on the outcome's original scale.
///
/// regression: y_hat_* are draws of r(x).
/// probit: y_hat_* are latent r(x); prob_* = Phi(r).
/// vc: y_hat_* = alpha + Z beta, with alpha_* and beta_* alongside.
/// gbart: y_hat_* = r + eta, with r_* and eta_* = Z beta alongside.
struct FitResult {
  ModelKind kind = ModelKind::kRegression;
  ModelSpec spec;
  TransformSet transforms;
  OutcomeScaler scaler;
  Hypers hypers;
  /// Second forest (beta) for vc.
  Hypers beta_hypers;
  Opts opts;
  std::uint64_t seed = 0;

  Eigen::MatrixXd y_hat_train, y_hat_test;
  std::vector<double> sigma;
  /// Branch counts per expanded column, per saved iteration.
  std::vector<std::vector<int>> counts;
  std::vector<double> sparsity_alpha;

  Eigen::MatrixXd prob_train, prob_test;
  Eigen::MatrixXd alpha_train, alpha_test, beta_train, beta_test;
  Eigen::MatrixXd r_train, r_test, eta_train, eta_test;
  /// gbart coefficients, num_save x q.
  Eigen::MatrixXd coef;

  /// Scaled-space ensembles per saved iteration (empty unless cache_trees).
  std::vector<std::vector<SoftTree>> trees;
  std::vector<std::vector<SoftTree>> beta_trees;

  std::size_t num_draws() const { return sigma.size(); }
  bool has_trees() const { return !trees.empty(); }

  Eigen::VectorXd y_hat_train_mean() const {
    return y_hat_train.colwise().mean().transpose();
  }
  Eigen::VectorXd y_hat_test_mean() const {
    return y_hat_test.colwise().mean().transpose();
  }
  double sigma_mean() const {
    double s = 0.0;
    for (double v : sigma) s += v;
    return sigma.empty() ? 0.0 : s / static_cast<double>(sigma.size());
  }
};

/// Draws for new data and their column means.
struct Prediction {
  Eigen::MatrixXd mu;
  Eigen::VectorXd mu_mean;
  /// Probit only: Phi(mu).
  Eigen::MatrixXd prob;
};

/// splitmix64 step, used to derive independent streams from one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Residual standard deviation of an OLS fit of y on [1, X], or sd(y) when
/// there are too few rows for that.
inline double estimate_sigma_hat(const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = X.cols();
  if (n > p + 2) {
    Eigen::MatrixXd A(n, p + 1);
    A.col(0).setOnes();
    A.rightCols(p) = X;
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    const Eigen::VectorXd resid = y - A * qr.solve(y);
    const auto dof = static_cast<double>(n - qr.rank());
    if (dof > 0.0) {
      const double s = std::sqrt(resid.squaredNorm() / dof);
      if (s > 0.0 && std::isfinite(s)) return s;
    }
  }
  if (n < 2) return 1.0;
  const double m = y.mean();
  const double s = std::sqrt((y.array() - m).square().sum() /
                             static_cast<double>(n - 1));
  return s > 0.0 ? s : 1.0;
}

namespace model_detail {

inline int total_iterations(const Opts& opts) {
  return opts.num_burn + opts.num_save * opts.num_thin;
}

/// True when iteration `it` (0-based) is kept; sets `slot` to its row.
inline bool is_saved(const Opts& opts, int it, int& slot) {
  const int k = it - opts.num_burn;
  if (k < 0 || (k + 1) % opts.num_thin != 0) return false;
  slot = (k + 1) / opts.num_thin - 1;
  return true;
}

inline Eigen::VectorXd numeric_column(const Table& t, const std::string& name) {
  const Column& c = t.column(name);
  if (!c.is_numeric()) throw InputError("column '" + name + "' must be numeric");
  const auto& v = c.numeric();
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw InputError("column '" + name + "' has non-finite values");
    }
    out[static_cast<Eigen::Index>(i)] = v[i];
  }
  return out;
}

inline Eigen::MatrixXd z_matrix(const Table& t,
                                const std::vector<std::string>& names) {
  Eigen::MatrixXd Z(static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    Z.col(static_cast<Eigen::Index>(k)) = numeric_column(t, names[k]);
  }
  return Z;
}

inline std::vector<std::string> with_excluded(std::vector<std::string> base,
                                              const std::vector<std::string>& more) {
  for (const auto& m : more) {
    if (std::find(base.begin(), base.end(), m) == base.end()) base.push_back(m);
  }
  return base;
}

/// Preprocesses the training table, fills in num_vars and sigma_hat, and
/// transforms the optional test table.
struct Prepared {
  Dataset data;
  TransformSet transforms;
  Eigen::MatrixXd X_test;
};

inline Prepared prepare(const Table& train, const Table* test,
                        const ModelSpec& spec, ScaleMode mode) {
  const auto excluded = with_excluded(spec.exclude, spec.z_columns);
  for (const auto& z : spec.z_columns) {
    if (!train.has(z)) throw InputError("unknown column '" + z + "'");
    if (z == spec.outcome) throw InputError("outcome cannot be a linear covariate");
  }
  auto [data, ts] = fit_transforms(train, spec.outcome, mode, excluded);
  Prepared p{std::move(data), std::move(ts), {}};
  if (test != nullptr) p.X_test = apply_transforms(p.transforms, *test);
  return p;
}

inline Hypers complete_hypers(Hypers h, const ModelSpec& spec,
                              const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y) {
  h.num_vars = static_cast<int>(X.cols());
  if (spec.estimate_sigma_hat) h.sigma_hat = estimate_sigma_hat(X, y);
  return h;
}

inline FitResult make_result(ModelKind kind, const ModelSpec& spec,
                             const Prepared& p, const Hypers& h,
                             const Opts& o, std::uint64_t seed,
                             Eigen::Index n_test) {
  FitResult fit;
  fit.kind = kind;
  fit.spec = spec;
  fit.transforms = p.transforms;
  fit.scaler = p.data.scaler;
  fit.hypers = h;
  fit.beta_hypers = h;
  fit.opts = o;
  fit.seed = seed;
  const auto ns = static_cast<Eigen::Index>(o.num_save);
  const Eigen::Index n = p.data.y.size();
  fit.y_hat_train.resize(ns, n);
  fit.y_hat_test.resize(ns, n_test);
  fit.sigma.assign(static_cast<std::size_t>(ns), 0.0);
  fit.counts.resize(static_cast<std::size_t>(ns));
  fit.sparsity_alpha.assign(static_cast<std::size_t>(ns), 0.0);
  if (o.cache_trees) fit.trees.resize(static_cast<std::size_t>(ns));
  return fit;
}

/// Phi(v), kept strictly inside (0, 1).
inline double probit_prob(double v) {
  const boost::math::normal_distribution<double> std_normal;
  return std::clamp(boost::math::cdf(std_normal, v),
                    std::numeric_limits<double>::min(),
                    1.0 - std::numeric_limits<double>::epsilon() / 2);
}

inline void begin_iteration(Forest& forest, const Opts& opts, int it) {
  forest.mutable_state().opts.update_s =
      opts.update_s && !(opts.warmup_s && it < opts.num_burn / 2);
}

inline void save_forest_draw(FitResult& fit, int slot, const Forest& f) {
  const auto k = static_cast<std::size_t>(slot);
  fit.counts[k] = f.get_counts();
  fit.sparsity_alpha[k] = f.get_alpha();
  if (fit.opts.cache_trees) fit.trees[k] = f.trees();
}

}  // namespace model_detail

/// Gaussian regression: standardizes the outcome, maps covariates to [0, 1],
/// runs one chain and returns draws on the original scale.
inline FitResult fit_regression(const Table& train, const ModelSpec& spec,
                                const Table* test, const Hypers& hypers,
                                const Opts& opts, std::uint64_t seed) {
  auto p = model_detail::prepare(train, test, spec, ScaleMode::kStandardize);
  const Hypers h = model_detail::complete_hypers(hypers, spec, p.data.X, p.data.y);
  FitResult fit = model_detail::make_result(ModelKind::kRegression, spec, p, h,
                                            opts, seed, p.X_test.rows());
  Forest forest(h, opts, seed);
  const auto& sc = p.data.scaler;
  const int total = model_detail::total_iterations(opts);
  for (int it = 0; it < total; ++it) {
    model_detail::begin_iteration(forest, opts, it);
    const Eigen::MatrixXd r = forest.do_gibbs(p.data.X, p.data.y, p.data.X, 1);
    int slot;
    if (!model_detail::is_saved(opts, it, slot)) continue;
    fit.y_hat_train.row(slot) = sc.inverse(r.row(0).transpose()).transpose();
    if (p.X_test.rows() > 0) {
      fit.y_hat_test.row(slot) =
          sc.inverse(forest.do_predict(p.X_test)).transpose();
    }
    fit.sigma[static_cast<std::size_t>(slot)] = forest.get_sigma() * sc.scale;
    model_detail::save_forest_draw(fit, slot, forest);
  }
  return fit;
}

/// Probit regression by data augmentation. The outcome may be 0/1 numbers or
/// a two-level factor (first sorted level = 0). sigma is fixed at 1 and the
/// leaf-scale anchor is 3 / sqrt(T) unless overridden.
inline FitResult fit_probit(const Table& train, const ModelSpec& spec,
                            const Table* test, Hypers hypers, Opts opts,
                            std::uint64_t seed) {
  auto p = model_detail::prepare(train, test, spec, ScaleMode::kNone);
  for (Eigen::Index i = 0; i < p.data.y.size(); ++i) {
    if (p.data.y[i] != 0.0 && p.data.y[i] != 1.0) {
      throw InputError("probit outcome must be binary (0/1)");
    }
  }
  if (!hypers.sigma_mu_hat_override) {
    hypers.sigma_mu_hat_override =
        3.0 / std::sqrt(static_cast<double>(hypers.num_tree));
  }
  hypers.sigma_hat = 1.0;
  hypers.num_vars = static_cast<int>(p.data.X.cols());
  opts.update_sigma = false;
  FitResult fit = model_detail::make_result(ModelKind::kProbit, spec, p, hypers,
                                            opts, seed, p.X_test.rows());
  fit.prob_train.resize(fit.y_hat_train.rows(), fit.y_hat_train.cols());
  fit.prob_test.resize(fit.y_hat_test.rows(), fit.y_hat_test.cols());

  Forest forest(hypers, opts, seed);
  forest.set_sigma(1.0);
  Rng& rng = forest.rng();
  const Eigen::VectorXd& y = p.data.y;
  Eigen::VectorXd r = forest.do_predict(p.data.X);
  Eigen::VectorXd z(y.size());
  auto draw_latent = [&] {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      z[i] = truncnorm_sign(rng, r[i], y[i] == 1.0);
    }
  };
  draw_latent();
  const int total = model_detail::total_iterations(opts);
  for (int it = 0; it < total; ++it) {
    model_detail::begin_iteration(forest, opts, it);
    r = forest.do_gibbs(p.data.X, z, p.data.X, 1).row(0).transpose();
    draw_latent();
    int slot;
    if (!model_detail::is_saved(opts, it, slot)) continue;
    fit.y_hat_train.row(slot) = r.transpose();
    if (p.X_test.rows() > 0) {
      fit.y_hat_test.row(slot) = forest.do_predict(p.X_test).transpose();
    }
    fit.sigma[static_cast<std::size_t>(slot)] = 1.0;
    model_detail::save_forest_draw(fit, slot, forest);
  }
  fit.prob_train = fit.y_hat_train.unaryExpr(&model_detail::probit_prob);
  fit.prob_test = fit.y_hat_test.unaryExpr(&model_detail::probit_prob);
  return fit;
}

/// Varying-coefficient model y = alpha(x) + Z beta(x) + noise with a single
/// linear covariate Z (spec.z_columns[0]). The outcome is standardized;
/// Z is used as given.
inline FitResult fit_vc(const Table& train, const ModelSpec& spec,
                        const Table* test, const Hypers& alpha_hypers,
                        const Hypers& beta_hypers, const Opts& opts,
                        std::uint64_t seed) {
  if (spec.z_columns.size() != 1) {
    throw InputError("vc model needs exactly one linear covariate");
  }
  const Eigen::VectorXd Z = model_detail::numeric_column(train, spec.z_columns[0]);
  for (Eigen::Index i = 0; i < Z.size(); ++i) {
    if (Z[i] == 0.0) {
      throw InputError("linear covariate '" + spec.z_columns[0] +
                       "' is zero in row " + std::to_string(i + 1));
    }
  }
  auto p = model_detail::prepare(train, test, spec, ScaleMode::kStandardize);
  Eigen::VectorXd Z_test;
  if (test != nullptr) Z_test = model_detail::numeric_column(*test, spec.z_columns[0]);
  const Eigen::MatrixXd& X = p.data.X;
  const Eigen::VectorXd& y = p.data.y;

  Eigen::MatrixXd XZ(X.rows(), X.cols() + 1);
  XZ << X, Z;
  Hypers ha = alpha_hypers;
  ha.num_vars = static_cast<int>(X.cols());
  if (spec.estimate_sigma_hat) ha.sigma_hat = estimate_sigma_hat(XZ, y);
  Hypers hb = beta_hypers;
  hb.num_vars = ha.num_vars;
  hb.sigma_hat = ha.sigma_hat;

  FitResult fit = model_detail::make_result(ModelKind::kVc, spec, p, ha, opts,
                                            seed, p.X_test.rows());
  fit.beta_hypers = hb;
  const auto ns = fit.y_hat_train.rows();
  fit.alpha_train.resize(ns, y.size());
  fit.beta_train.resize(ns, y.size());
  fit.alpha_test.resize(ns, p.X_test.rows());
  fit.beta_test.resize(ns, p.X_test.rows());
  if (opts.cache_trees) fit.beta_trees.resize(static_cast<std::size_t>(ns));

  Forest alpha_forest(ha, opts, seed);
  Forest beta_forest(hb, opts, derive_seed(seed, 1));
  const Eigen::VectorXd w = Z.array().square();
  Eigen::VectorXd alpha = alpha_forest.do_predict(X);
  Eigen::VectorXd beta = beta_forest.do_predict(X);
  const double loc = p.data.scaler.location;
  const double scale = p.data.scaler.scale;
  const int total = model_detail::total_iterations(opts);
  for (int it = 0; it < total; ++it) {
    model_detail::begin_iteration(alpha_forest, opts, it);
    model_detail::begin_iteration(beta_forest, opts, it);
    const Eigen::VectorXd r_beta = ((y - alpha).array() / Z.array()).matrix();
    beta = beta_forest.do_gibbs_weighted(X, r_beta, w, X, 1).row(0).transpose();
    alpha_forest.set_sigma(beta_forest.get_sigma());
    const Eigen::VectorXd r_alpha = y - (Z.array() * beta.array()).matrix();
    alpha = alpha_forest.do_gibbs(X, r_alpha, X, 1).row(0).transpose();
    beta_forest.set_sigma(alpha_forest.get_sigma());
    int slot;
    if (!model_detail::is_saved(opts, it, slot)) continue;
    const Eigen::VectorXd a = (loc + scale * alpha.array()).matrix();
    const Eigen::VectorXd b = scale * beta;
    fit.alpha_train.row(slot) = a.transpose();
    fit.beta_train.row(slot) = b.transpose();
    fit.y_hat_train.row(slot) = (a.array() + Z.array() * b.array()).matrix().transpose();
    if (p.X_test.rows() > 0) {
      const Eigen::VectorXd at =
          (loc + scale * alpha_forest.do_predict(p.X_test).array()).matrix();
      const Eigen::VectorXd bt = scale * beta_forest.do_predict(p.X_test);
      fit.alpha_test.row(slot) = at.transpose();
      fit.beta_test.row(slot) = bt.transpose();
      fit.y_hat_test.row(slot) =
          (at.array() + Z_test.array() * bt.array()).matrix().transpose();
    }
    fit.sigma[static_cast<std::size_t>(slot)] = alpha_forest.get_sigma() * scale;
    model_detail::save_forest_draw(fit, slot, alpha_forest);
    if (opts.cache_trees) {
      fit.beta_trees[static_cast<std::size_t>(slot)] = beta_forest.trees();
    }
  }
  return fit;
}

/// Treatment-effect summaries from a varying-coefficient fit with
/// Z = 1/2 - A. Then alpha = mu + tau / 2 and beta = -tau.
struct BcfResult {
  FitResult vc;
  /// Conditional effects tau(X_i) per draw (num_save x N).
  Eigen::MatrixXd cace_train, cace_test;
  /// Population effect per draw: the row means of cace_train.
  std::vector<double> pace;
};

inline BcfResult fit_bcf(const Table& train, const std::string& outcome,
                         const std::string& treatment, const Table* test,
                         const Hypers& alpha_hypers, const Hypers& beta_hypers,
                         const Opts& opts, std::uint64_t seed,
                         const std::vector<std::string>& exclude = {}) {
  auto encode = [&](const Table& t) {
    const Eigen::VectorXd a = model_detail::numeric_column(t, treatment);
    std::vector<double> z(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (a[i] != 0.0 && a[i] != 1.0) {
        throw InputError("treatment '" + treatment + "' must be 0/1");
      }
      z[static_cast<std::size_t>(i)] = 0.5 - a[i];
    }
    Table out = t;
    out.replace(Column{treatment, std::move(z)});
    return out;
  };
  const Table train_z = encode(train);
  std::optional<Table> test_z;
  if (test != nullptr) test_z = encode(*test);
  ModelSpec spec;
  spec.outcome = outcome;
  spec.exclude = exclude;
  spec.z_columns = {treatment};
  BcfResult out;
  out.vc = fit_vc(train_z, spec, test_z ? &*test_z : nullptr, alpha_hypers,
                  beta_hypers, opts, seed);
  out.cace_train = -out.vc.beta_train;
  out.cace_test = -out.vc.beta_test;
  out.pace.resize(static_cast<std::size_t>(out.cace_train.rows()));
  for (Eigen::Index k = 0; k < out.cace_train.rows(); ++k) {
    out.pace[static_cast<std::size_t>(k)] = out.cace_train.row(k).mean();
  }
  return out;
}

/// Draw from Normal((Z'Z)^{-1} Z'R, sigma^2 (Z'Z)^{-1}).
inline Eigen::VectorXd draw_linear_coefficients(Rng& rng,
                                                const Eigen::VectorXd& R,
                                                const Eigen::MatrixXd& Z,
                                                double sigma) {
  const Eigen::LLT<Eigen::MatrixXd> llt(Z.transpose() * Z);
  if (llt.info() != Eigen::Success) {
    throw InputError("linear design Z'Z is singular");
  }
  const Eigen::VectorXd mean = llt.solve(Z.transpose() * R);
  Eigen::VectorXd e(Z.cols());
  for (Eigen::Index k = 0; k < e.size(); ++k) e[k] = rng.normal();
  return mean + sigma * llt.matrixU().solve(e);
}

/// Partial-linear model y = r(x) + Z beta + noise with a flat prior on beta.
/// No intercept column is added; the forest absorbs the level.
inline FitResult fit_gbart(const Table& train, const ModelSpec& spec,
                           const Table* test, const Hypers& hypers,
                           const Opts& opts, std::uint64_t seed) {
  if (spec.z_columns.empty()) {
    throw InputError("gbart model needs at least one linear covariate");
  }
  const Eigen::MatrixXd Z = model_detail::z_matrix(train, spec.z_columns);
  {
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    if (qr.rank() < Z.cols()) throw InputError("linear design Z'Z is singular");
  }
  auto p = model_detail::prepare(train, test, spec, ScaleMode::kStandardize);
  Eigen::MatrixXd Z_test;
  if (test != nullptr) Z_test = model_detail::z_matrix(*test, spec.z_columns);
  const Eigen::MatrixXd& X = p.data.X;
  const Eigen::VectorXd& y = p.data.y;

  Eigen::MatrixXd XZ(X.rows(), X.cols() + Z.cols());
  XZ << X, Z;
  Hypers h = hypers;
  h.num_vars = static_cast<int>(X.cols());
  if (spec.estimate_sigma_hat) h.sigma_hat = estimate_sigma_hat(XZ, y);

  FitResult fit = model_detail::make_result(ModelKind::kGbart, spec, p, h, opts,
                                            seed, p.X_test.rows());
  const auto ns = fit.y_hat_train.rows();
  fit.r_train.resize(ns, y.size());
  fit.eta_train.resize(ns, y.size());
  fit.r_test.resize(ns, p.X_test.rows());
  fit.eta_test.resize(ns, p.X_test.rows());
  fit.coef.resize(ns, Z.cols());

  Forest forest(h, opts, seed);
  Rng beta_rng(derive_seed(seed, 1));
  Eigen::VectorXd r = forest.do_predict(X);
  const double loc = p.data.scaler.location;
  const double scale = p.data.scaler.scale;
  const int total = model_detail::total_iterations(opts);
  for (int it = 0; it < total; ++it) {
    model_detail::begin_iteration(forest, opts, it);
    const Eigen::VectorXd beta =
        draw_linear_coefficients(beta_rng, y - r, Z, forest.get_sigma());
    const Eigen::VectorXd eta = Z * beta;
    r = forest.do_gibbs(X, y - eta, X, 1).row(0).transpose();
    int slot;
    if (!model_detail::is_saved(opts, it, slot)) continue;
    const Eigen::VectorXd b = scale * beta;
    const Eigen::VectorXd r_orig = (loc + scale * r.array()).matrix();
    const Eigen::VectorXd eta_orig = Z * b;
    fit.coef.row(slot) = b.transpose();
    fit.r_train.row(slot) = r_orig.transpose();
    fit.eta_train.row(slot) = eta_orig.transpose();
    fit.y_hat_train.row(slot) = (r_orig + eta_orig).transpose();
    if (p.X_test.rows() > 0) {
      const Eigen::VectorXd rt =
          (loc + scale * forest.do_predict(p.X_test).array()).matrix();
      const Eigen::VectorXd et = Z_test * b;
      fit.r_test.row(slot) = rt.transpose();
      fit.eta_test.row(slot) = et.transpose();
      fit.y_hat_test.row(slot) = (rt + et).transpose();
    }
    fit.sigma[static_cast<std::size_t>(slot)] = forest.get_sigma() * scale;
    model_detail::save_forest_draw(fit, slot, forest);
  }
  return fit;
}

/// Dispatches on kind. For vc, `hypers` configures both forests.
inline FitResult fit_model(ModelKind kind, const Table& train,
                           const ModelSpec& spec, const Table* test,
                           const Hypers& hypers, const Opts& opts,
                           std::uint64_t seed) {
  switch (kind) {
    case ModelKind::kRegression:
      return fit_regression(train, spec, test, hypers, opts, seed);
    case ModelKind::kProbit:
      return fit_probit(train, spec, test, hypers, opts, seed);
    case ModelKind::kVc:
      return fit_vc(train, spec, test, hypers, hypers, opts, seed);
    case ModelKind::kGbart:
      return fit_gbart(train, spec, test, hypers, opts, seed);
  }
  throw std::logic_error("unknown model kind");
}

/// Stacks the draws of several chains in order. Chains must come from the
/// same data and settings.
inline FitResult merge_chains(std::vector<FitResult> chains) {
  if (chains.empty()) throw std::invalid_argument("merge_chains: no chains");
  FitResult out = std::move(chains[0]);
  auto stack = [](Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.cols() != b.cols()) {
      throw std::invalid_argument("merge_chains: chains disagree in shape");
    }
    Eigen::MatrixXd m(a.rows() + b.rows(), a.cols());
    m.topRows(a.rows()) = a;
    m.bottomRows(b.rows()) = b;
    a = std::move(m);
  };
  for (std::size_t c = 1; c < chains.size(); ++c) {
    FitResult& f = chains[c];
    stack(out.y_hat_train, f.y_hat_train);
    stack(out.y_hat_test, f.y_hat_test);
    stack(out.prob_train, f.prob_train);
    stack(out.prob_test, f.prob_test);
    stack(out.alpha_train, f.alpha_train);
    stack(out.alpha_test, f.alpha_test);
    stack(out.beta_train, f.beta_train);
    stack(out.beta_test, f.beta_test);
    stack(out.r_train, f.r_train);
    stack(out.r_test, f.r_test);
    stack(out.eta_train, f.eta_train);
    stack(out.eta_test, f.eta_test);
    stack(out.coef, f.coef);
    out.sigma.insert(out.sigma.end(), f.sigma.begin(), f.sigma.end());
    out.counts.insert(out.counts.end(), f.counts.begin(), f.counts.end());
    out.sparsity_alpha.insert(out.sparsity_alpha.end(), f.sparsity_alpha.begin(),
                              f.sparsity_alpha.end());
    for (auto& t : f.trees) out.trees.push_back(std::move(t));
    for (auto& t : f.beta_trees) out.beta_trees.push_back(std::move(t));
  }
  return out;
}

/// Runs `num_chains` chains with seeds seed, seed + 1, ... on separate
/// threads and merges them in chain order.
template <typename FitFn>
FitResult fit_chains(FitFn&& fit_one, int num_chains, std::uint64_t seed) {
  if (num_chains < 1) throw InputError("number of chains must be positive");
  std::vector<FitResult> results(static_cast<std::size_t>(num_chains));
  std::vector<std::exception_ptr> errors(results.size());
  std::vector<std::thread> threads;
  for (std::size_t c = 0; c < results.size(); ++c) {
    threads.emplace_back([&, c] {
      try {
        results[c] = fit_one(seed + c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return merge_chains(std::move(results));
}

/// Evaluates every cached ensemble on new data. vc and gbart models need the
/// linear covariate columns in `table`.
inline Prediction predict(const FitResult& fit, const Table& table) {
  if (!fit.has_trees()) {
    throw ContractError(
        "model was fitted without cached trees; refit with tree caching "
        "enabled to predict");
  }
  const Eigen::MatrixXd X = apply_transforms(fit.transforms, table);
  const auto nd = static_cast<Eigen::Index>(fit.trees.size());
  const Eigen::Index n = X.rows();
  Prediction out;
  out.mu.resize(nd, n);
  Eigen::MatrixXd Z;
  if (fit.kind == ModelKind::kVc || fit.kind == ModelKind::kGbart) {
    Z = model_detail::z_matrix(table, fit.spec.z_columns);
  }
  const double loc = fit.scaler.location;
  const double scale = fit.scaler.scale;
  for (Eigen::Index k = 0; k < nd; ++k) {
    const auto& trees = fit.trees[static_cast<std::size_t>(k)];
    const Eigen::VectorXd f = forest_predict(trees, X, X.cols());
    switch (fit.kind) {
      case ModelKind::kRegression:
        out.mu.row(k) = fit.scaler.inverse(f).transpose();
        break;
      case ModelKind::kProbit:
        out.mu.row(k) = f.transpose();
        break;
      case ModelKind::kVc: {
        const Eigen::VectorXd a = (loc + scale * f.array()).matrix();
        const Eigen::VectorXd b =
            scale * forest_predict(fit.beta_trees[static_cast<std::size_t>(k)], X);
        out.mu.row(k) = (a.array() + Z.col(0).array() * b.array()).matrix().transpose();
        break;
      }
      case ModelKind::kGbart: {
        const Eigen::VectorXd r = (loc + scale * f.array()).matrix();
        const Eigen::VectorXd eta = Z * fit.coef.row(k).transpose();
        out.mu.row(k) = (r + eta).transpose();
        break;
      }
    }
  }
  out.mu_mean = nd > 0 ? Eigen::VectorXd(out.mu.colwise().mean().transpose())
                       : Eigen::VectorXd::Zero(n);
  if (fit.kind == ModelKind::kProbit) {
    out.prob = out.mu.unaryExpr(&model_detail::probit_prob);
  }
  return out;
}

}  // namespace softbart
