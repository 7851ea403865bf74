#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "softbart/csv.hpp"

namespace softbart {

enum class ScaleMode { kStandardize, kUnitInterval, kNone };

inline std::string to_string(ScaleMode mode) {
  switch (mode) {
    case ScaleMode::kStandardize: return "standardize";
    case ScaleMode::kUnitInterval: return "unit-interval";
    case ScaleMode::kNone: return "none";
  }
  return "none";
}

inline ScaleMode scale_mode_from_string(const std::string& s) {
  if (s == "standardize") return ScaleMode::kStandardize;
  if (s == "unit-interval") return ScaleMode::kUnitInterval;
  if (s == "none") return ScaleMode::kNone;
  throw InputError("unknown outcome scaling mode '" + s + "'");
}

/// Affine outcome map y -> (y - location) / scale - offset.
struct OutcomeScaler {
  ScaleMode mode = ScaleMode::kNone;
  double location = 0.0;
  double scale = 1.0;
  double offset = 0.0;

  /// Standardize uses the sample mean and (n - 1) standard deviation;
  /// unit-interval maps [min, max] onto [-0.5, 0.5].
  static OutcomeScaler fit(const std::vector<double>& y, ScaleMode mode) {
    OutcomeScaler sc;
    sc.mode = mode;
    if (mode == ScaleMode::kNone) return sc;
    if (y.empty()) throw InputError("cannot scale an empty outcome");
    if (mode == ScaleMode::kStandardize) {
      double mean = 0.0;
      for (double v : y) mean += v;
      mean /= static_cast<double>(y.size());
      double ss = 0.0;
      for (double v : y) ss += (v - mean) * (v - mean);
      const double var =
          y.size() > 1 ? ss / static_cast<double>(y.size() - 1) : 0.0;
      if (!(var > 0.0)) throw InputError("zero-variance outcome");
      sc.location = mean;
      sc.scale = std::sqrt(var);
    } else {
      const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
      if (!(*hi > *lo)) throw InputError("zero-range outcome");
      sc.location = *lo;
      sc.scale = *hi - *lo;
      sc.offset = 0.5;
    }
    return sc;
  }

  double transform(double y) const { return (y - location) / scale - offset; }
  double inverse(double v) const { return location + scale * (v + offset); }

  Eigen::VectorXd transform(const Eigen::VectorXd& y) const {
    return ((y.array() - location) / scale - offset).matrix();
  }
  Eigen::VectorXd inverse(const Eigen::VectorXd& v) const {
    return (location + scale * (v.array() + offset)).matrix();
  }
};

inline Eigen::VectorXd unscale_predictions(const OutcomeScaler& scaler,
                                           const Eigen::VectorXd& v) {
  return scaler.inverse(v);
}

/// Maps one raw column into its block of [0, 1] columns.
struct ColumnTransform {
  enum class Kind { kNumeric, kCategorical };

  std::string name;
  Kind kind = Kind::kNumeric;
  /// Sorted unique training values and F(knot) = #{train <= knot} / N.
  std::vector<double> knots;
  std::vector<double> cdf;
  /// Sorted factor levels; level k maps to dummy column k.
  std::vector<std::string> levels;

  static ColumnTransform fit_numeric(std::string name,
                                     std::vector<double> values) {
    if (values.empty()) throw InputError("column '" + name + "' is empty");
    for (double v : values) {
      if (!std::isfinite(v)) {
        throw InputError("column '" + name + "' has non-finite values");
      }
    }
    ColumnTransform ct;
    ct.name = std::move(name);
    ct.kind = Kind::kNumeric;
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
      ct.knots.push_back(values[i]);
      ct.cdf.push_back(static_cast<double>(i + 1) / n);
    }
    return ct;
  }

  static ColumnTransform fit_categorical(std::string name,
                                         const std::vector<std::string>& values) {
    if (values.empty()) throw InputError("column '" + name + "' is empty");
    ColumnTransform ct;
    ct.name = std::move(name);
    ct.kind = Kind::kCategorical;
    std::set<std::string> uniq(values.begin(), values.end());
    ct.levels.assign(uniq.begin(), uniq.end());
    return ct;
  }

  std::size_t width() const {
    return kind == Kind::kNumeric ? 1 : levels.size();
  }

  /// Training ECDF, linearly interpolated between knots and clamped to [0, 1].
  double ecdf(double x) const {
    if (std::isnan(x)) throw InputError("column '" + name + "' has NaN");
    if (x < knots.front()) return 0.0;
    if (x >= knots.back()) return 1.0;
    const auto it = std::upper_bound(knots.begin(), knots.end(), x);
    const auto k = static_cast<std::size_t>(it - knots.begin()) - 1;
    if (x == knots[k]) return cdf[k];
    const double frac = (x - knots[k]) / (knots[k + 1] - knots[k]);
    return std::clamp(cdf[k] + frac * (cdf[k + 1] - cdf[k]), 0.0, 1.0);
  }

  std::size_t level_index(const std::string& level) const {
    const auto it = std::lower_bound(levels.begin(), levels.end(), level);
    if (it == levels.end() || *it != level) {
      throw InputError("unseen level '" + level + "' in column '" + name + "'");
    }
    return static_cast<std::size_t>(it - levels.begin());
  }
};

/// Original variable -> contiguous block of expanded columns.
struct ColumnBlock {
  std::string name;
  int start = 0;
  int width = 1;
};

/// Reusable preprocessing fitted on a training table.
struct TransformSet {
  std::string outcome;
  std::vector<ColumnTransform> columns;
  /// Levels of a categorical binary outcome (first level maps to 0).
  std::vector<std::string> outcome_levels;

  std::size_t width() const {
    std::size_t w = 0;
    for (const auto& c : columns) w += c.width();
    return w;
  }

  std::vector<ColumnBlock> column_map() const {
    std::vector<ColumnBlock> out;
    int start = 0;
    for (const auto& c : columns) {
      out.push_back({c.name, start, static_cast<int>(c.width())});
      start += static_cast<int>(c.width());
    }
    return out;
  }

  /// Names of the expanded columns: the variable name, or name=level.
  std::vector<std::string> expanded_names() const {
    std::vector<std::string> out;
    for (const auto& c : columns) {
      if (c.kind == ColumnTransform::Kind::kNumeric) {
        out.push_back(c.name);
      } else {
        for (const auto& l : c.levels) out.push_back(c.name + "=" + l);
      }
    }
    return out;
  }

  const ColumnTransform& find(const std::string& name) const {
    for (const auto& c : columns) {
      if (c.name == name) return c;
    }
    throw InputError("unknown variable '" + name + "'");
  }

  int block_start(const std::string& name) const {
    for (const auto& b : column_map()) {
      if (b.name == name) return b.start;
    }
    throw InputError("unknown variable '" + name + "'");
  }
};

/// Scaled training data.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<ColumnBlock> column_map;
  OutcomeScaler scaler;
};

/// Maps raw covariates into [0, 1]^P' with the training transforms.
inline Eigen::MatrixXd apply_transforms(const TransformSet& ts,
                                        const Table& table) {
  const auto n = static_cast<Eigen::Index>(table.rows());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(ts.width()));
  Eigen::Index col = 0;
  for (const auto& ct : ts.columns) {
    if (!table.has(ct.name)) {
      throw InputError("schema mismatch: missing column '" + ct.name + "'");
    }
    const Column& c = table.column(ct.name);
    // A header-only CSV reads every column as numeric; only names matter then.
    if (n == 0) {
      col += static_cast<Eigen::Index>(ct.width());
      continue;
    }
    if (ct.kind == ColumnTransform::Kind::kNumeric) {
      if (!c.is_numeric()) {
        throw InputError("schema mismatch: column '" + ct.name +
                         "' was numeric in training");
      }
      const auto& v = c.numeric();
      for (Eigen::Index i = 0; i < n; ++i) X(i, col) = ct.ecdf(v[static_cast<std::size_t>(i)]);
      col += 1;
    } else {
      if (c.is_numeric()) {
        throw InputError("schema mismatch: column '" + ct.name +
                         "' was categorical in training");
      }
      const auto& v = c.categorical();
      for (Eigen::Index i = 0; i < n; ++i) {
        X(i, col + static_cast<Eigen::Index>(ct.level_index(v[static_cast<std::size_t>(i)]))) = 1.0;
      }
      col += static_cast<Eigen::Index>(ct.width());
    }
  }
  return X;
}

/// Outcome column as numbers; a two-level categorical maps its first (sorted)
/// level to 0 and the second to 1.
inline std::vector<double> outcome_values(const TransformSet& ts,
                                          const Table& table) {
  const Column& c = table.column(ts.outcome);
  if (c.is_numeric()) return c.numeric();
  if (ts.outcome_levels.size() != 2) {
    throw InputError("outcome '" + ts.outcome + "' must be numeric");
  }
  std::vector<double> out;
  for (const auto& s : c.categorical()) {
    if (s == ts.outcome_levels[0]) {
      out.push_back(0.0);
    } else if (s == ts.outcome_levels[1]) {
      out.push_back(1.0);
    } else {
      throw InputError("unseen outcome level '" + s + "'");
    }
  }
  return out;
}

/// Fits covariate transforms (every column except the outcome and
/// `exclude`) and the outcome scaler. A categorical outcome is accepted only
/// with ScaleMode::kNone and exactly two levels.
inline std::pair<Dataset, TransformSet> fit_transforms(
    const Table& table, const std::string& outcome, ScaleMode mode,
    const std::vector<std::string>& exclude = {}) {
  if (table.cols() == 0 || table.rows() == 0) {
    throw InputError("empty table");
  }
  if (!table.has(outcome)) {
    throw InputError("unknown outcome column '" + outcome + "'");
  }
  for (const auto& e : exclude) {
    if (!table.has(e)) throw InputError("unknown excluded column '" + e + "'");
  }
  TransformSet ts;
  ts.outcome = outcome;
  const Column& yc = table.column(outcome);
  if (!yc.is_numeric()) {
    std::set<std::string> uniq(yc.categorical().begin(), yc.categorical().end());
    if (mode != ScaleMode::kNone || uniq.size() != 2) {
      throw InputError("outcome '" + outcome +
                       "' must be numeric (or a two-level factor for probit)");
    }
    ts.outcome_levels.assign(uniq.begin(), uniq.end());
  }
  for (const auto& c : table.columns()) {
    if (c.name == outcome ||
        std::find(exclude.begin(), exclude.end(), c.name) != exclude.end()) {
      continue;
    }
    if (c.is_numeric()) {
      ts.columns.push_back(ColumnTransform::fit_numeric(c.name, c.numeric()));
    } else {
      ts.columns.push_back(
          ColumnTransform::fit_categorical(c.name, c.categorical()));
    }
  }
  if (ts.columns.empty()) throw InputError("no covariate columns");

  const auto y = outcome_values(ts, table);
  for (double v : y) {
    if (!std::isfinite(v)) throw InputError("outcome has non-finite values");
  }
  Dataset ds;
  ds.scaler = OutcomeScaler::fit(y, mode);
  ds.X = apply_transforms(ts, table);
  ds.y.resize(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    ds.y[static_cast<Eigen::Index>(i)] = ds.scaler.transform(y[i]);
  }
  ds.column_map = ts.column_map();
  return {std::move(ds), std::move(ts)};
}

}  // namespace softbart
