#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "softbart/archive.hpp"
#include "softbart/csv.hpp"
#include "softbart/models.hpp"
#include "softbart/simulate.hpp"
#include "softbart/summaries.hpp"

namespace softbart {

/// Process exit statuses.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 2,
  kExitContract = 3,
  kExitInternal = 4,
};

namespace cli_detail {

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

/// One row per draw: draw,row_1,...,row_N. With no observations only the
/// header is written.
inline std::string draws_csv(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  std::vector<std::string> fields{"draw"};
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    fields.push_back("row_" + std::to_string(i + 1));
  }
  write_csv_row(os, fields);
  if (m.cols() == 0) return os.str();
  for (Eigen::Index k = 0; k < m.rows(); ++k) {
    fields.assign(1, std::to_string(k));
    for (Eigen::Index i = 0; i < m.cols(); ++i) fields.push_back(format_double(m(k, i)));
    write_csv_row(os, fields);
  }
  return os.str();
}

inline std::string vector_csv(const std::string& index_name,
                              const std::vector<std::string>& names,
                              const std::vector<Eigen::VectorXd>& cols) {
  std::ostringstream os;
  std::vector<std::string> fields{index_name};
  fields.insert(fields.end(), names.begin(), names.end());
  write_csv_row(os, fields);
  const Eigen::Index n = cols.empty() ? 0 : cols[0].size();
  for (Eigen::Index i = 0; i < n; ++i) {
    fields.assign(1, std::to_string(i + 1));
    for (const auto& c : cols) fields.push_back(format_double(c[i]));
    write_csv_row(os, fields);
  }
  return os.str();
}

/// Column type overrides that reproduce the training schema.
inline CsvReadOptions schema_options(const TransformSet& ts) {
  CsvReadOptions o;
  for (const auto& c : ts.columns) {
    if (c.kind == ColumnTransform::Kind::kCategorical) {
      o.categorical.insert(c.name);
    } else {
      o.numeric.insert(c.name);
    }
  }
  return o;
}

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Training or test error of posterior-mean predictions, when the table has
/// the outcome: RMSE, or misclassification rate for probit.
inline std::optional<double> prediction_error(const FitResult& fit,
                                              const Table& table,
                                              const Eigen::MatrixXd& mu,
                                              const Eigen::MatrixXd& prob) {
  if (!table.has(fit.spec.outcome) || table.rows() == 0) return std::nullopt;
  const Eigen::VectorXd y = to_vector(outcome_values(fit.transforms, table));
  if (fit.kind == ModelKind::kProbit) {
    const Eigen::VectorXd p = prob.colwise().mean().transpose();
    double wrong = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      wrong += ((p[i] >= 0.5) != (y[i] == 1.0)) ? 1.0 : 0.0;
    }
    return wrong / static_cast<double>(y.size());
  }
  return rmse(mu.colwise().mean().transpose(), y);
}

struct FitArgs {
  std::string model = "regression";
  std::string data;
  std::string test;
  std::string outcome;
  std::string out;
  std::uint64_t seed = 0;
  int chains = 1;
  std::vector<std::string> exclude;
  std::vector<std::string> z_columns;
  std::vector<std::string> categorical;
  std::vector<std::string> numeric;
  Hypers hypers;
  Opts opts;
  bool no_update_s = false;
  bool no_update_sigma = false;
  bool no_update_sigma_mu = false;
  bool no_update_tau = false;
  bool no_cache_trees = false;
  bool no_warmup_s = false;
};

inline int cmd_fit(FitArgs a, std::ostream& out) {
  CsvReadOptions read_opts;
  read_opts.categorical.insert(a.categorical.begin(), a.categorical.end());
  read_opts.numeric.insert(a.numeric.begin(), a.numeric.end());
  const Table train = read_csv_file(a.data, read_opts);
  std::optional<Table> test;
  if (!a.test.empty()) test = read_csv_file(a.test, read_opts);
  if (!train.has(a.outcome)) {
    throw InputError("outcome column '" + a.outcome + "' not found in '" +
                     a.data + "'");
  }

  const ModelKind kind = model_kind_from_string(a.model);
  ModelSpec spec;
  spec.outcome = a.outcome;
  spec.exclude = a.exclude;
  spec.z_columns = a.z_columns;
  Opts opts = a.opts;
  opts.update_s = !a.no_update_s;
  opts.update_sigma = !a.no_update_sigma;
  opts.update_sigma_mu = !a.no_update_sigma_mu;
  opts.update_tau = !a.no_update_tau;
  opts.cache_trees = !a.no_cache_trees;
  opts.warmup_s = !a.no_warmup_s;
  try {
    opts.validate();
    Hypers check = a.hypers;
    check.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  const Table* test_ptr = test ? &*test : nullptr;
  const FitResult fit = fit_chains(
      [&](std::uint64_t s) {
        return fit_model(kind, train, spec, test_ptr, a.hypers, opts, s);
      },
      a.chains, a.seed);

  save_archive_file(a.out, fit);
  write_file(a.out + ".yhat_train.csv", draws_csv(fit.y_hat_train));
  if (test) write_file(a.out + ".yhat_test.csv", draws_csv(fit.y_hat_test));
  write_file(a.out + ".sigma.csv",
             vector_csv("draw", {"sigma"}, {to_vector(fit.sigma)}));
  if (kind == ModelKind::kProbit) {
    write_file(a.out + ".prob_train.csv", draws_csv(fit.prob_train));
    if (test) write_file(a.out + ".prob_test.csv", draws_csv(fit.prob_test));
  }
  if (kind == ModelKind::kVc) {
    write_file(a.out + ".beta_train.csv", draws_csv(fit.beta_train));
    if (test) write_file(a.out + ".beta_test.csv", draws_csv(fit.beta_test));
  }
  if (kind == ModelKind::kGbart) {
    std::vector<Eigen::VectorXd> cols;
    for (Eigen::Index q = 0; q < fit.coef.cols(); ++q) cols.push_back(fit.coef.col(q));
    write_file(a.out + ".coef.csv", vector_csv("draw", spec.z_columns, cols));
  }

  const auto vs = posterior_probs(fit);
  const auto train_err =
      prediction_error(fit, train, fit.y_hat_train, fit.prob_train);
  const auto test_err = test ? prediction_error(fit, *test, fit.y_hat_test,
                                                fit.prob_test)
                             : std::nullopt;
  const std::string metric =
      kind == ModelKind::kProbit ? "misclassification" : "rmse";

  nlohmann::ordered_json js;
  js["model"] = to_string(kind);
  js["seed"] = a.seed;
  js["chains"] = a.chains;
  js["n_train"] = train.rows();
  js["n_test"] = test ? test->rows() : 0;
  js["num_draws"] = fit.num_draws();
  js["sigma_mean"] = fit.sigma_mean();
  js["train_" + metric] = train_err ? nlohmann::ordered_json(*train_err) : nlohmann::ordered_json();
  js["test_" + metric] = test_err ? nlohmann::ordered_json(*test_err) : nlohmann::ordered_json();
  if (kind == ModelKind::kGbart) {
    nlohmann::ordered_json coef;
    for (Eigen::Index q = 0; q < fit.coef.cols(); ++q) {
      coef[spec.z_columns[static_cast<std::size_t>(q)]] = fit.coef.col(q).mean();
    }
    js["coef_mean"] = coef;
  }
  nlohmann::ordered_json vars = nlohmann::ordered_json::array();
  for (std::size_t v = 0; v < vs.names.size(); ++v) {
    vars.push_back({{"variable", vs.names[v]},
                    {"pip", vs.post_probs[v]},
                    {"varimp", vs.varimp[v]}});
  }
  js["variables"] = vars;
  std::vector<std::string> mpm;
  for (auto v : vs.median_probability_model) mpm.push_back(vs.names[v]);
  js["median_probability_model"] = mpm;
  write_file(a.out + ".summary.json", js.dump(2) + "\n");

  out << "model: " << to_string(kind) << "\n";
  out << "observations: " << train.rows() << " train";
  if (test) out << ", " << test->rows() << " test";
  out << "\n";
  out << "draws: " << fit.num_draws() << " (" << a.chains
      << (a.chains == 1 ? " chain" : " chains") << ")\n";
  out << "sigma posterior mean: " << format_double(fit.sigma_mean()) << "\n";
  if (train_err) out << "train " << metric << ": " << format_double(*train_err) << "\n";
  if (test_err) out << "test " << metric << ": " << format_double(*test_err) << "\n";
  if (kind == ModelKind::kGbart) {
    for (Eigen::Index q = 0; q < fit.coef.cols(); ++q) {
      out << "coefficient " << spec.z_columns[static_cast<std::size_t>(q)]
          << ": " << format_double(fit.coef.col(q).mean()) << "\n";
    }
  }
  out << "median probability model:";
  for (const auto& m : mpm) out << " " << m;
  out << "\n";
  std::vector<std::size_t> order(vs.names.size());
  for (std::size_t v = 0; v < order.size(); ++v) order[v] = v;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return vs.post_probs[x] > vs.post_probs[y];
  });
  out << "top variables (pip, varimp):\n";
  for (std::size_t r = 0; r < std::min<std::size_t>(10, order.size()); ++r) {
    const auto v = order[r];
    out << "  " << vs.names[v] << " " << format_double(vs.post_probs[v]) << " "
        << format_double(vs.varimp[v]) << "\n";
  }
  out << "wrote " << a.out << "\n";
  return kExitOk;
}

struct PredictArgs {
  std::string archive;
  std::string data;
  std::string out;
};

inline int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const FitResult fit = load_archive_file(a.archive);
  if (!fit.has_trees()) {
    throw ContractError("archive '" + a.archive +
                        "' was saved without cached trees, so it cannot "
                        "predict; refit without --no-cache-trees");
  }
  const Table table = read_csv_file(a.data, schema_options(fit.transforms));
  const Prediction p = predict(fit, table);
  std::vector<std::string> names{"mean"};
  std::vector<Eigen::VectorXd> cols{p.mu_mean};
  if (fit.kind == ModelKind::kProbit) {
    names.push_back("prob");
    cols.push_back(table.rows() ? Eigen::VectorXd(p.prob.colwise().mean().transpose())
                                : Eigen::VectorXd());
  }
  const std::string means = vector_csv("row", names, cols);
  if (a.out.empty()) {
    out << means;
  } else {
    write_file(a.out + ".mean.csv", means);
    write_file(a.out + ".draws.csv", draws_csv(p.mu));
    if (fit.kind == ModelKind::kProbit) {
      write_file(a.out + ".prob_draws.csv", draws_csv(p.prob));
    }
  }
  return kExitOk;
}

struct PdpArgs {
  std::string archive;
  std::string data;
  std::string variable;
  std::optional<double> grid_min;
  std::optional<double> grid_max;
  int grid_steps = 10;
  std::string out;
};

inline int cmd_pdp(const PdpArgs& a, std::ostream& out) {
  const FitResult fit = load_archive_file(a.archive);
  if (!fit.has_trees()) {
    throw ContractError("archive '" + a.archive +
                        "' was saved without cached trees; partial dependence "
                        "needs them");
  }
  const ColumnTransform& ct = fit.transforms.find(a.variable);
  const Table background = read_csv_file(a.data, schema_options(fit.transforms));
  std::vector<GridValue> grid;
  if (ct.kind == ColumnTransform::Kind::kNumeric) {
    grid = numeric_grid(a.grid_min.value_or(ct.knots.front()),
                        a.grid_max.value_or(ct.knots.back()), a.grid_steps);
  } else {
    for (const auto& l : ct.levels) grid.emplace_back(l);
  }
  const PartialDependence pd = partial_dependence(fit, background, a.variable, grid);
  std::ostringstream os;
  write_csv_row(os, {"draw_index", "grid_value", "pd_value"});
  for (Eigen::Index k = 0; k < pd.pd.rows(); ++k) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      write_csv_row(os, {std::to_string(k), grid_label(grid[g]),
                         format_double(pd.pd(k, static_cast<Eigen::Index>(g)))});
    }
  }
  if (a.out.empty()) {
    out << os.str();
  } else {
    write_file(a.out, os.str());
  }
  return kExitOk;
}

struct VarselectArgs {
  std::string archive;
  std::string out;
};

inline int cmd_varselect(const VarselectArgs& a, std::ostream& out) {
  const FitResult fit = load_archive_file(a.archive);
  const auto vs = posterior_probs(fit);
  std::ostringstream os;
  write_csv_row(os, {"index", "variable", "pip", "varimp", "in_mpm"});
  std::set<std::size_t> mpm(vs.median_probability_model.begin(),
                            vs.median_probability_model.end());
  for (std::size_t v = 0; v < vs.names.size(); ++v) {
    write_csv_row(os, {std::to_string(v + 1), vs.names[v],
                       format_double(vs.post_probs[v]), format_double(vs.varimp[v]),
                       mpm.count(v) ? "1" : "0"});
  }
  if (!a.out.empty()) write_file(a.out, os.str());
  out << "median probability model:";
  for (auto v : vs.median_probability_model) out << " " << (v + 1);
  out << "\n";
  out << "variables:";
  for (auto v : vs.median_probability_model) out << " " << vs.names[v];
  out << "\n";
  if (a.out.empty()) out << os.str();
  return kExitOk;
}

struct SimulateArgs {
  std::string setting = "friedman";
  int n = 250;
  int p = 250;
  std::optional<double> sigma;
  std::uint64_t seed = 0;
  std::string out;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  Rng rng(a.seed);
  Table t;
  if (a.setting == "friedman") {
    t = simulate_friedman(rng, a.n, a.p, a.sigma.value_or(1.0));
  } else if (a.setting == "sine") {
    t = simulate_sine(rng, a.n, a.sigma.value_or(0.1));
  } else if (a.setting == "probit") {
    t = simulate_probit(rng, a.n, a.p);
  } else if (a.setting == "vc") {
    t = simulate_vc(rng, a.n, a.p, a.sigma.value_or(1.0));
  } else if (a.setting == "gbart") {
    t = simulate_gbart(rng, a.n, a.p, a.sigma.value_or(1.0));
  } else {
    throw InputError("unknown setting '" + a.setting + "'");
  }
  std::ostringstream os;
  write_csv(os, t);
  if (a.out.empty()) {
    out << os.str();
  } else {
    write_file(a.out, os.str());
  }
  return kExitOk;
}

}  // namespace cli_detail

/// Runs the command-line front end on `args` (without the program name).
/// Returns the process exit status.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"Soft Bayesian additive regression trees", "softbart"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "TOML/INI file; options for a subcommand go in its section, "
                 "e.g. [fit]");

  cli_detail::FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a model and write an archive");
  fit->add_option("--model", fa.model, "regression, probit, vc or gbart")
      ->check(CLI::IsMember({"regression", "probit", "vc", "gbart"}))
      ->capture_default_str();
  fit->add_option("--data", fa.data, "Training CSV")->required();
  fit->add_option("--outcome", fa.outcome, "Outcome column")->required();
  fit->add_option("--test", fa.test, "Test CSV");
  fit->add_option("--out", fa.out, "Archive path; sidecar files share it")->required();
  fit->add_option("--seed", fa.seed, "Random seed")->required();
  fit->add_option("--chains", fa.chains, "Parallel chains, merged in order")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit->add_option("--trees", fa.hypers.num_tree, "Number of trees")->capture_default_str();
  fit->add_option("--burn", fa.opts.num_burn, "Burn-in iterations")->capture_default_str();
  fit->add_option("--save", fa.opts.num_save, "Saved iterations")->capture_default_str();
  fit->add_option("--thin", fa.opts.num_thin, "Thinning interval")->capture_default_str();
  fit->add_option("--gamma", fa.hypers.gamma, "Tree depth prior base")->capture_default_str();
  fit->add_option("--beta", fa.hypers.beta, "Tree depth prior power")->capture_default_str();
  fit->add_option("--k", fa.hypers.k, "Leaf scale shrinkage")->capture_default_str();
  fit->add_option("--tau-scale", fa.hypers.tau_scale, "Prior mean of bandwidths")
      ->capture_default_str();
  fit->add_option("--exclude", fa.exclude, "Columns to leave out")->delimiter(',');
  fit->add_option("--z-column", fa.z_columns, "Linear covariates (vc, gbart)")
      ->delimiter(',');
  fit->add_option("--categorical", fa.categorical, "Force columns categorical")
      ->delimiter(',');
  fit->add_option("--numeric", fa.numeric, "Force columns numeric")->delimiter(',');
  fit->add_flag("--no-update-s", fa.no_update_s, "Keep splitting proportions uniform");
  fit->add_flag("--no-update-sigma", fa.no_update_sigma, "Fix sigma");
  fit->add_flag("--no-update-sigma-mu", fa.no_update_sigma_mu, "Fix the leaf scale");
  fit->add_flag("--no-update-tau", fa.no_update_tau, "Fix bandwidths");
  fit->add_flag("--no-warmup-s", fa.no_warmup_s,
                "Update splitting proportions from the first iteration");
  fit->add_flag("--hard-trees", fa.opts.hard_trees, "Indicator splits");
  fit->add_flag("--no-cache-trees", fa.no_cache_trees,
                "Do not store trees (archive cannot predict)");

  cli_detail::PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Predict new rows from an archive");
  pred->add_option("--archive,-m", pa.archive, "Model archive")->required();
  pred->add_option("--data", pa.data, "CSV to predict")->required();
  pred->add_option("--out", pa.out,
                   "Prefix for <out>.mean.csv and <out>.draws.csv; "
                   "means go to stdout when omitted");

  cli_detail::PdpArgs da;
  auto* pdp = app.add_subcommand("pdp", "Partial dependence as tidy CSV");
  pdp->add_option("--archive,-m", da.archive, "Model archive")->required();
  pdp->add_option("--data", da.data, "Background CSV")->required();
  pdp->add_option("--variable", da.variable, "Variable name")->required();
  pdp->add_option("--grid-min", da.grid_min, "Grid start (numeric variables)");
  pdp->add_option("--grid-max", da.grid_max, "Grid end (numeric variables)");
  pdp->add_option("--grid-steps", da.grid_steps, "Grid points")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pdp->add_option("--out", da.out, "Output CSV (stdout when omitted)");

  cli_detail::VarselectArgs va;
  auto* vsel = app.add_subcommand("varselect", "Inclusion probabilities and MPM");
  vsel->add_option("--archive,-m", va.archive, "Model archive")->required();
  vsel->add_option("--out", va.out, "Output CSV");

  cli_detail::SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Write a simulated data set");
  sim->add_option("--setting", sa.setting, "friedman, sine, probit, vc or gbart")
      ->check(CLI::IsMember({"friedman", "sine", "probit", "vc", "gbart"}))
      ->capture_default_str();
  sim->add_option("--n", sa.n, "Rows")->capture_default_str();
  sim->add_option("--p", sa.p, "Covariates")->capture_default_str();
  sim->add_option("--sigma", sa.sigma, "Noise sd (default 1; 0.1 for sine)");
  sim->add_option("--seed", sa.seed, "Random seed")->required();
  sim->add_option("--out", sa.out, "Output CSV (stdout when omitted)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (fit->parsed()) return cli_detail::cmd_fit(fa, out);
    if (pred->parsed()) return cli_detail::cmd_predict(pa, out);
    if (pdp->parsed()) return cli_detail::cmd_pdp(da, out);
    if (vsel->parsed()) return cli_detail::cmd_varselect(va, out);
    if (sim->parsed()) return cli_detail::cmd_simulate(sa, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kExitContract;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace softbart
