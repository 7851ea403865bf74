#pragma once

#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "softbart/models.hpp"

namespace softbart {

/// Model archives are JSON Lines: one header record followed by one record per
/// saved iteration. Doubles are written in shortest round-trip form, so a
/// loaded archive predicts bit-for-bit like the fit it came from.
inline constexpr const char* kArchiveFormat = "softbart-archive";
inline constexpr int kArchiveVersion = 1;

namespace archive_detail {

using nlohmann::json;

inline json hypers_to_json(const Hypers& h) {
  json j = {{"num_tree", h.num_tree},         {"gamma", h.gamma},
            {"beta", h.beta},                 {"k", h.k},
            {"sigma_hat", h.sigma_hat},       {"tau_scale", h.tau_scale},
            {"alpha_shape_a", h.alpha_shape_a}, {"alpha_shape_b", h.alpha_shape_b},
            {"num_vars", h.num_vars}};
  j["sigma_mu_hat_override"] =
      h.sigma_mu_hat_override ? json(*h.sigma_mu_hat_override) : json(nullptr);
  return j;
}

inline Hypers hypers_from_json(const json& j) {
  Hypers h;
  h.num_tree = j.at("num_tree").get<int>();
  h.gamma = j.at("gamma").get<double>();
  h.beta = j.at("beta").get<double>();
  h.k = j.at("k").get<double>();
  h.sigma_hat = j.at("sigma_hat").get<double>();
  h.tau_scale = j.at("tau_scale").get<double>();
  h.alpha_shape_a = j.at("alpha_shape_a").get<double>();
  h.alpha_shape_b = j.at("alpha_shape_b").get<double>();
  h.num_vars = j.at("num_vars").get<int>();
  if (!j.at("sigma_mu_hat_override").is_null()) {
    h.sigma_mu_hat_override = j.at("sigma_mu_hat_override").get<double>();
  }
  return h;
}

inline json opts_to_json(const Opts& o) {
  return {{"num_burn", o.num_burn},       {"num_save", o.num_save},
          {"num_thin", o.num_thin},       {"update_s", o.update_s},
          {"update_sigma", o.update_sigma}, {"update_sigma_mu", o.update_sigma_mu},
          {"update_tau", o.update_tau},   {"cache_trees", o.cache_trees},
          {"hard_trees", o.hard_trees},   {"warmup_s", o.warmup_s},
          {"tau_step_sd", o.tau_step_sd}};
}

inline Opts opts_from_json(const json& j) {
  Opts o;
  o.num_burn = j.at("num_burn").get<int>();
  o.num_save = j.at("num_save").get<int>();
  o.num_thin = j.at("num_thin").get<int>();
  o.update_s = j.at("update_s").get<bool>();
  o.update_sigma = j.at("update_sigma").get<bool>();
  o.update_sigma_mu = j.at("update_sigma_mu").get<bool>();
  o.update_tau = j.at("update_tau").get<bool>();
  o.cache_trees = j.at("cache_trees").get<bool>();
  o.hard_trees = j.at("hard_trees").get<bool>();
  o.warmup_s = j.at("warmup_s").get<bool>();
  o.tau_step_sd = j.at("tau_step_sd").get<double>();
  return o;
}

inline json transforms_to_json(const TransformSet& ts) {
  json cols = json::array();
  for (const auto& c : ts.columns) {
    json jc = {{"name", c.name}};
    if (c.kind == ColumnTransform::Kind::kNumeric) {
      jc["kind"] = "numeric";
      jc["knots"] = c.knots;
      jc["cdf"] = c.cdf;
    } else {
      jc["kind"] = "categorical";
      jc["levels"] = c.levels;
    }
    cols.push_back(std::move(jc));
  }
  return {{"outcome", ts.outcome},
          {"outcome_levels", ts.outcome_levels},
          {"columns", std::move(cols)}};
}

inline TransformSet transforms_from_json(const json& j) {
  TransformSet ts;
  ts.outcome = j.at("outcome").get<std::string>();
  ts.outcome_levels = j.at("outcome_levels").get<std::vector<std::string>>();
  for (const auto& jc : j.at("columns")) {
    ColumnTransform c;
    c.name = jc.at("name").get<std::string>();
    const auto kind = jc.at("kind").get<std::string>();
    if (kind == "numeric") {
      c.kind = ColumnTransform::Kind::kNumeric;
      c.knots = jc.at("knots").get<std::vector<double>>();
      c.cdf = jc.at("cdf").get<std::vector<double>>();
      if (c.knots.empty() || c.knots.size() != c.cdf.size()) {
        throw InputError("archive: bad knots for column '" + c.name + "'");
      }
    } else if (kind == "categorical") {
      c.kind = ColumnTransform::Kind::kCategorical;
      c.levels = jc.at("levels").get<std::vector<std::string>>();
    } else {
      throw InputError("archive: unknown column kind '" + kind + "'");
    }
    ts.columns.push_back(std::move(c));
  }
  return ts;
}

inline json node_to_json(const Node& n, const std::vector<std::string>& names) {
  if (n.is_leaf()) return {{"mu", n.mu}};
  return {{"var", n.var},
          {"column", names.at(static_cast<std::size_t>(n.var))},
          {"cut", n.cut},
          {"left", node_to_json(*n.left, names)},
          {"right", node_to_json(*n.right, names)}};
}

inline Node node_from_json(const json& j, int num_vars) {
  if (j.contains("mu")) return Node(j.at("mu").get<double>());
  Node n;
  n.var = j.at("var").get<int>();
  if (n.var < 0 || n.var >= num_vars) {
    throw InputError("archive: split variable out of range");
  }
  n.cut = j.at("cut").get<double>();
  n.left = std::make_unique<Node>(node_from_json(j.at("left"), num_vars));
  n.right = std::make_unique<Node>(node_from_json(j.at("right"), num_vars));
  return n;
}

inline json forest_to_json(const std::vector<SoftTree>& trees,
                           const std::vector<std::string>& names) {
  json out = json::array();
  for (const auto& t : trees) {
    out.push_back({{"tau", t.tau}, {"hard", t.hard},
                   {"root", node_to_json(t.root, names)}});
  }
  return out;
}

inline std::vector<SoftTree> forest_from_json(const json& j, int num_vars) {
  std::vector<SoftTree> out;
  for (const auto& jt : j) {
    SoftTree t;
    t.tau = jt.at("tau").get<double>();
    t.hard = jt.at("hard").get<bool>();
    t.root = node_from_json(jt.at("root"), num_vars);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace archive_detail

/// Writes the parts of a fit needed to predict and summarize: settings,
/// preprocessing, and per-iteration sigma, branch counts, trees and
/// coefficients. Draw matrices are not stored.
inline void save_archive(std::ostream& out, const FitResult& fit) {
  using archive_detail::json;
  const auto names = fit.transforms.expanded_names();
  const json spec = {{"outcome", fit.spec.outcome},
                     {"exclude", fit.spec.exclude},
                     {"z_columns", fit.spec.z_columns},
                     {"estimate_sigma_hat", fit.spec.estimate_sigma_hat}};
  const json scaler = {{"mode", to_string(fit.scaler.mode)},
                       {"location", fit.scaler.location},
                       {"scale", fit.scaler.scale},
                       {"offset", fit.scaler.offset}};
  const json header = {{"format", kArchiveFormat},
                       {"version", kArchiveVersion},
                       {"kind", to_string(fit.kind)},
                       {"seed", fit.seed},
                       {"spec", spec},
                       {"hypers", archive_detail::hypers_to_json(fit.hypers)},
                       {"beta_hypers", archive_detail::hypers_to_json(fit.beta_hypers)},
                       {"opts", archive_detail::opts_to_json(fit.opts)},
                       {"transforms", archive_detail::transforms_to_json(fit.transforms)},
                       {"scaler", scaler},
                       {"expanded_names", names},
                       {"num_draws", fit.num_draws()},
                       {"cache_trees", fit.has_trees()}};
  out << header.dump() << '\n';
  for (std::size_t k = 0; k < fit.num_draws(); ++k) {
    json rec = {{"iteration", k},
                {"sigma", fit.sigma[k]},
                {"counts", fit.counts[k]},
                {"sparsity_alpha", fit.sparsity_alpha[k]}};
    if (fit.has_trees()) {
      rec["trees"] = archive_detail::forest_to_json(fit.trees[k], names);
    }
    if (!fit.beta_trees.empty()) {
      rec["beta_trees"] = archive_detail::forest_to_json(fit.beta_trees[k], names);
    }
    if (fit.coef.size() > 0) {
      std::vector<double> c(static_cast<std::size_t>(fit.coef.cols()));
      for (Eigen::Index q = 0; q < fit.coef.cols(); ++q) {
        c[static_cast<std::size_t>(q)] = fit.coef(static_cast<Eigen::Index>(k), q);
      }
      rec["coef"] = c;
    }
    out << rec.dump() << '\n';
  }
}

inline void save_archive_file(const std::string& path, const FitResult& fit) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  save_archive(out, fit);
  if (!out) throw InputError("failed writing '" + path + "'");
}

/// Reads an archive back into a FitResult. Draw matrices (y_hat_*, alpha_*,
/// ...) are left empty; use predict() to regenerate them.
inline FitResult load_archive(std::istream& in) {
  using archive_detail::json;
  std::string line;
  if (!std::getline(in, line)) throw InputError("archive: empty file");
  FitResult fit;
  std::size_t num_draws = 0;
  try {
    const json h = json::parse(line);
    if (h.value("format", std::string()) != kArchiveFormat) {
      throw InputError("archive: not a softbart model archive");
    }
    const int version = h.at("version").get<int>();
    if (version != kArchiveVersion) {
      throw InputError("archive: unsupported format version " +
                       std::to_string(version) + " (expected " +
                       std::to_string(kArchiveVersion) + ")");
    }
    fit.kind = model_kind_from_string(h.at("kind").get<std::string>());
    fit.seed = h.at("seed").get<std::uint64_t>();
    const json& spec = h.at("spec");
    fit.spec.outcome = spec.at("outcome").get<std::string>();
    fit.spec.exclude = spec.at("exclude").get<std::vector<std::string>>();
    fit.spec.z_columns = spec.at("z_columns").get<std::vector<std::string>>();
    fit.spec.estimate_sigma_hat = spec.at("estimate_sigma_hat").get<bool>();
    fit.hypers = archive_detail::hypers_from_json(h.at("hypers"));
    fit.beta_hypers = archive_detail::hypers_from_json(h.at("beta_hypers"));
    fit.opts = archive_detail::opts_from_json(h.at("opts"));
    fit.transforms = archive_detail::transforms_from_json(h.at("transforms"));
    const json& sc = h.at("scaler");
    fit.scaler.mode = scale_mode_from_string(sc.at("mode").get<std::string>());
    fit.scaler.location = sc.at("location").get<double>();
    fit.scaler.scale = sc.at("scale").get<double>();
    fit.scaler.offset = sc.at("offset").get<double>();
    num_draws = h.at("num_draws").get<std::size_t>();
    if (static_cast<int>(fit.transforms.width()) != fit.hypers.num_vars) {
      throw InputError("archive: transforms disagree with num_vars");
    }

    const int nv = fit.hypers.num_vars;
    std::vector<std::vector<double>> coef;
    for (std::size_t k = 0; k < num_draws; ++k) {
      if (!std::getline(in, line)) {
        throw InputError("archive: truncated after " + std::to_string(k) +
                         " of " + std::to_string(num_draws) + " iterations");
      }
      const json r = json::parse(line);
      fit.sigma.push_back(r.at("sigma").get<double>());
      fit.counts.push_back(r.at("counts").get<std::vector<int>>());
      fit.sparsity_alpha.push_back(r.at("sparsity_alpha").get<double>());
      if (r.contains("trees")) {
        fit.trees.push_back(archive_detail::forest_from_json(r.at("trees"), nv));
      }
      if (r.contains("beta_trees")) {
        fit.beta_trees.push_back(
            archive_detail::forest_from_json(r.at("beta_trees"), nv));
      }
      if (r.contains("coef")) coef.push_back(r.at("coef").get<std::vector<double>>());
    }
    if (!fit.trees.empty() && fit.trees.size() != num_draws) {
      throw InputError("archive: some iterations lack trees");
    }
    if (fit.kind == ModelKind::kVc && fit.beta_trees.size() != fit.trees.size()) {
      throw InputError("archive: vc model lacks beta trees");
    }
    if (fit.kind == ModelKind::kGbart && coef.size() != num_draws) {
      throw InputError("archive: gbart model lacks coefficients");
    }
    if (!coef.empty()) {
      fit.coef.resize(static_cast<Eigen::Index>(coef.size()),
                      static_cast<Eigen::Index>(coef[0].size()));
      for (std::size_t k = 0; k < coef.size(); ++k) {
        if (coef[k].size() != coef[0].size()) {
          throw InputError("archive: ragged coefficients");
        }
        for (std::size_t q = 0; q < coef[k].size(); ++q) {
          fit.coef(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(q)) =
              coef[k][q];
        }
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("archive: malformed record: ") + e.what());
  }
  return fit;
}

inline FitResult load_archive_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return load_archive(in);
}

}  // namespace softbart
