#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "softbart/csv.hpp"
#include "softbart/models.hpp"
#include "softbart/preprocess.hpp"

namespace softbart {

/// Per original variable: inclusion probability, mean branch count, and the
/// median probability model (indices into `names` with PIP >= 0.5).
struct VariableSelectionSummary {
  std::vector<std::string> names;
  std::vector<double> post_probs;
  std::vector<double> varimp;
  std::vector<std::size_t> median_probability_model;
};

/// Sums each variable's dummy block per iteration; PIP is the fraction of
/// iterations in which that sum is at least one.
inline VariableSelectionSummary posterior_probs(
    const std::vector<std::vector<int>>& counts,
    const std::vector<ColumnBlock>& column_map) {
  VariableSelectionSummary out;
  const std::size_t nv = column_map.size();
  out.post_probs.assign(nv, 0.0);
  out.varimp.assign(nv, 0.0);
  for (const auto& b : column_map) out.names.push_back(b.name);
  for (const auto& row : counts) {
    for (std::size_t v = 0; v < nv; ++v) {
      const auto& b = column_map[v];
      int total = 0;
      for (int k = b.start; k < b.start + b.width; ++k) {
        const int c = row.at(static_cast<std::size_t>(k));
        if (c < 0) throw std::invalid_argument("posterior_probs: negative count");
        total += c;
      }
      out.post_probs[v] += total >= 1 ? 1.0 : 0.0;
      out.varimp[v] += total;
    }
  }
  const auto n = static_cast<double>(counts.size());
  for (std::size_t v = 0; v < nv; ++v) {
    if (n > 0) {
      out.post_probs[v] /= n;
      out.varimp[v] /= n;
    }
    if (out.post_probs[v] >= 0.5) out.median_probability_model.push_back(v);
  }
  return out;
}

inline VariableSelectionSummary posterior_probs(const FitResult& fit) {
  return posterior_probs(fit.counts, fit.transforms.column_map());
}

/// A grid point: a number for numeric variables, a level for categorical ones.
using GridValue = std::variant<double, std::string>;

inline std::string grid_label(const GridValue& g) {
  if (const auto* d = std::get_if<double>(&g)) return format_double(*d);
  return std::get<std::string>(g);
}

struct PartialDependence {
  std::string variable;
  std::vector<GridValue> grid;
  /// num_draws x grid size.
  Eigen::MatrixXd pd;

  Eigen::VectorXd mean() const { return pd.colwise().mean().transpose(); }
};

/// Averages the fit's prediction over `background` with `variable`
/// overwritten by each grid value, separately for every saved draw.
inline PartialDependence partial_dependence(const FitResult& fit,
                                            const Table& background,
                                            const std::string& variable,
                                            const std::vector<GridValue>& grid) {
  if (!fit.has_trees()) {
    throw ContractError("partial dependence needs cached trees");
  }
  const ColumnTransform& ct = fit.transforms.find(variable);
  if (background.rows() == 0) throw InputError("empty background table");
  PartialDependence out;
  out.variable = variable;
  out.grid = grid;
  out.pd.resize(static_cast<Eigen::Index>(fit.trees.size()),
                static_cast<Eigen::Index>(grid.size()));
  const std::size_t n = background.rows();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    Table modified = background;
    if (ct.kind == ColumnTransform::Kind::kNumeric) {
      const auto* v = std::get_if<double>(&grid[g]);
      if (v == nullptr) {
        throw InputError("grid for '" + variable + "' must be numeric");
      }
      modified.replace(Column{variable, std::vector<double>(n, *v)});
    } else {
      const auto* level = std::get_if<std::string>(&grid[g]);
      if (level == nullptr) {
        throw InputError("grid for '" + variable + "' must be factor levels");
      }
      ct.level_index(*level);
      modified.replace(Column{variable, std::vector<std::string>(n, *level)});
    }
    const Prediction p = predict(fit, modified);
    out.pd.col(static_cast<Eigen::Index>(g)) = p.mu.rowwise().mean();
  }
  return out;
}

/// Evenly spaced numeric grid with `steps` points.
inline std::vector<GridValue> numeric_grid(double lo, double hi, int steps) {
  if (steps < 1) throw InputError("grid needs at least one point");
  if (!(hi >= lo)) throw InputError("grid maximum is below its minimum");
  std::vector<GridValue> out;
  for (int k = 0; k < steps; ++k) {
    const double t = steps == 1 ? 0.0 : static_cast<double>(k) / (steps - 1);
    out.emplace_back(k == steps - 1 && steps > 1 ? hi : lo + t * (hi - lo));
  }
  return out;
}

inline double rmse(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw std::invalid_argument("rmse: length mismatch");
  if (x.size() == 0) return 0.0;
  return std::sqrt((x - y).squaredNorm() / static_cast<double>(x.size()));
}

}  // namespace softbart
