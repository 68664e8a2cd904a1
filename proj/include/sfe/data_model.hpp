#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sfe/csv.hpp"
#include "sfe/error.hpp"
#include "sfe/types.hpp"

namespace sfe {

enum class ColumnKind { binary, ordinal, continuous };

inline std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::binary: return "binary";
    case ColumnKind::ordinal: return "ordinal";
    case ColumnKind::continuous: return "continuous";
  }
  return "continuous";
}

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
};

/// Raw observation matrix (n individuals by m covariates) plus the outcome.
/// Entries equal to `missing_code` are treated as absent.
class Dataset {
 public:
  Dataset(std::vector<Column> columns, Matrix x, Vector y,
          std::optional<double> missing_code = std::nullopt,
          std::string outcome_name = "y")
      : columns_(std::move(columns)),
        x_(std::move(x)),
        y_(std::move(y)),
        missing_code_(missing_code),
        outcome_name_(std::move(outcome_name)) {
    validate();
  }

  /// Builds a dataset inferring each column kind from its values.
  static Dataset infer(std::vector<std::string> names, Matrix x, Vector y,
                       std::optional<double> missing_code = std::nullopt,
                       std::string outcome_name = "y") {
    std::vector<Column> columns;
    columns.reserve(names.size());
    for (Index a = 0; a < static_cast<Index>(names.size()); ++a) {
      columns.push_back({std::move(names[a]), infer_kind(x.col(a), missing_code)});
    }
    return Dataset(std::move(columns), std::move(x), std::move(y), missing_code,
                   std::move(outcome_name));
  }

  Index rows() const { return x_.rows(); }
  Index cols() const { return x_.cols(); }
  const Matrix& x() const { return x_; }
  const Vector& y() const { return y_; }
  const std::vector<Column>& columns() const { return columns_; }
  const std::optional<double>& missing_code() const { return missing_code_; }
  const std::string& outcome_name() const { return outcome_name_; }

  bool is_missing(double v) const { return missing_code_ && v == *missing_code_; }

  std::vector<std::string> column_names() const {
    std::vector<std::string> names;
    for (const auto& c : columns_) names.push_back(c.name);
    return names;
  }

  Index column_index(const std::string& name) const {
    for (std::size_t a = 0; a < columns_.size(); ++a) {
      if (columns_[a].name == name) return static_cast<Index>(a);
    }
    throw usage_error("unknown column '" + name + "'");
  }

  /// Copy with columns reordered: result column k is this column perm[k].
  Dataset permute_columns(const std::vector<Index>& perm) const {
    std::vector<Column> columns;
    Matrix x(rows(), cols());
    for (Index k = 0; k < cols(); ++k) {
      columns.push_back(columns_.at(perm.at(k)));
      x.col(k) = x_.col(perm[k]);
    }
    return Dataset(std::move(columns), std::move(x), y_, missing_code_, outcome_name_);
  }

  static ColumnKind infer_kind(const Eigen::Ref<const Vector>& values,
                               std::optional<double> missing_code) {
    std::set<double> distinct;
    bool integral = true;
    for (double v : values) {
      if (missing_code && v == *missing_code) continue;
      distinct.insert(v);
      if (v != std::floor(v)) integral = false;
    }
    if (distinct.size() == 2) return ColumnKind::binary;
    return integral ? ColumnKind::ordinal : ColumnKind::continuous;
  }

 private:
  void validate() const {
    if (x_.rows() < 2) throw data_error("dataset needs at least 2 rows");
    if (x_.cols() < 1) throw data_error("dataset needs at least 1 covariate column");
    if (y_.size() != x_.rows()) throw data_error("outcome length does not match row count");
    if (static_cast<Index>(columns_.size()) != x_.cols()) {
      throw data_error("column metadata does not match matrix width");
    }
    std::unordered_set<std::string> seen;
    for (std::size_t a = 0; a < columns_.size(); ++a) {
      if (!seen.insert(columns_[a].name).second) {
        throw data_error("duplicate column name '" + columns_[a].name + "'");
      }
      if (columns_[a].kind == ColumnKind::binary) {
        std::set<double> distinct;
        for (double v : x_.col(static_cast<Index>(a))) {
          if (!is_missing(v)) distinct.insert(v);
        }
        if (distinct.size() != 2) {
          throw data_error("binary column '" + columns_[a].name +
                           "' must hold exactly two distinct values");
        }
      }
    }
    for (double v : y_) {
      if (!std::isfinite(v)) throw data_error("outcome contains a non-finite value");
    }
  }

  std::vector<Column> columns_;
  Matrix x_;
  Vector y_;
  std::optional<double> missing_code_;
  std::string outcome_name_;
};

/// Covariates mapped into [-1,+1], outcome into [0,1], with the per-column
/// ranges needed to go back to raw units.
struct NormalizedData {
  Matrix xn;
  Vector yn;
  Vector x_min;
  Vector x_max;
  double y_min = 0.0;
  double y_max = 1.0;
  std::vector<std::string> column_names;

  Index rows() const { return xn.rows(); }
  Index cols() const { return xn.cols(); }

  Index column_index(const std::string& name) const {
    for (std::size_t a = 0; a < column_names.size(); ++a) {
      if (column_names[a] == name) return static_cast<Index>(a);
    }
    throw usage_error("unknown factor '" + name + "'");
  }
};

/// Unity-base (feature scaling) normalization. Constant columns and missing
/// entries map to 0, the uncertain-status midpoint.
inline NormalizedData unity_normalize(const Dataset& d) {
  const Index n = d.rows();
  const Index m = d.cols();
  if (n == 0 || m == 0) throw data_error("empty dataset");

  NormalizedData nd;
  nd.xn.resize(n, m);
  nd.x_min.resize(m);
  nd.x_max.resize(m);
  nd.column_names = d.column_names();

  for (Index a = 0; a < m; ++a) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Index i = 0; i < n; ++i) {
      const double v = d.x()(i, a);
      if (d.is_missing(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    nd.x_min[a] = lo;
    nd.x_max[a] = hi;
    const bool constant = !(hi > lo);
    for (Index i = 0; i < n; ++i) {
      const double v = d.x()(i, a);
      nd.xn(i, a) = (constant || d.is_missing(v)) ? 0.0 : 2.0 * (v - lo) / (hi - lo) - 1.0;
    }
  }

  nd.y_min = d.y().minCoeff();
  nd.y_max = d.y().maxCoeff();
  if (!(nd.y_max > nd.y_min)) throw data_error("degenerate outcome");
  const double span = nd.y_max - nd.y_min;
  nd.yn = ((d.y().array() - nd.y_min) / span).matrix();
  return nd;
}

/// Effect in normalized outcome units back to raw outcome units.
inline double denormalize_effect(double v, const NormalizedData& nd) {
  return v * (nd.y_max - nd.y_min);
}

/// Parses a dataset CSV. `outcome` names the outcome column; every other
/// column becomes a covariate in file order.
inline Dataset dataset_from_table(const csv::Table& table, const std::string& outcome,
                                  std::optional<double> missing_code = std::nullopt) {
  Index outcome_col = -1;
  std::vector<std::string> names;
  std::vector<Index> source;
  for (std::size_t k = 0; k < table.header.size(); ++k) {
    if (table.header[k] == outcome) {
      outcome_col = static_cast<Index>(k);
    } else {
      names.push_back(table.header[k]);
      source.push_back(static_cast<Index>(k));
    }
  }
  if (outcome_col < 0) throw usage_error("outcome column '" + outcome + "' not found");
  const auto n = static_cast<Index>(table.rows.size());
  Matrix x(n, static_cast<Index>(names.size()));
  Vector y(n);

  auto cell = [&](Index row, Index col, bool outcome_cell) {
    const std::string& text = table.rows[row][col];
    double v = 0.0;
    if (csv::parse_double(text, v) && std::isfinite(v)) return v;
    if (text.find_first_not_of(" \t") == std::string::npos && missing_code && !outcome_cell) {
      return *missing_code;
    }
    throw data_error("row " + std::to_string(row + 1) + ", column '" + table.header[col] +
                     "': cannot parse '" + text + "' as a number");
  };

  for (Index i = 0; i < n; ++i) {
    y[i] = cell(i, outcome_col, true);
    if (missing_code && y[i] == *missing_code) {
      throw data_error("row " + std::to_string(i + 1) + ": outcome is missing");
    }
    for (Index a = 0; a < static_cast<Index>(source.size()); ++a) {
      x(i, a) = cell(i, source[a], false);
    }
  }
  return Dataset::infer(std::move(names), std::move(x), std::move(y), missing_code, outcome);
}

inline Dataset read_dataset(const std::string& path, const std::string& outcome,
                            std::optional<double> missing_code = std::nullopt) {
  return dataset_from_table(csv::read_file(path), outcome, missing_code);
}

inline void write_dataset(std::ostream& out, const Dataset& d) {
  std::vector<std::string> header = d.column_names();
  header.push_back(d.outcome_name());
  csv::write_row(out, header);
  std::vector<std::string> row(header.size());
  for (Index i = 0; i < d.rows(); ++i) {
    for (Index a = 0; a < d.cols(); ++a) row[a] = csv::format_double(d.x()(i, a));
    row.back() = csv::format_double(d.y()[i]);
    csv::write_row(out, row);
  }
}

}  // namespace sfe
