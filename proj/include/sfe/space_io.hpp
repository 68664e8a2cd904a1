#pragma once

// Effect-space persistence: "<path>" holds positions as CSV with header
// "id,<col1>,...,<colm>", "<path>.meta.json" holds everything else.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sfe/csv.hpp"
#include "sfe/error.hpp"
#include "sfe/optimizer.hpp"
#include "sfe/rng.hpp"

namespace sfe {

inline constexpr int kSpaceFormatVersion = 1;

inline std::string meta_path(const std::string& path) { return path + ".meta.json"; }

inline nlohmann::json to_json(const FitConfig& cfg) {
  nlohmann::json j;
  j["eta"] = cfg.eta;
  j["iterations"] = cfg.iterations;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["deterministic"] = cfg.deterministic;
  j["tolerance"] = cfg.tolerance ? nlohmann::json(*cfg.tolerance) : nlohmann::json(nullptr);
  return j;
}

inline FitConfig fit_config_from_json(const nlohmann::json& j) {
  FitConfig cfg;
  cfg.eta = j.at("eta").get<double>();
  cfg.iterations = j.at("iterations").get<std::int64_t>();
  cfg.batch_size = j.at("batch_size").get<std::int64_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.deterministic = j.at("deterministic").get<bool>();
  if (!j.at("tolerance").is_null()) cfg.tolerance = j.at("tolerance").get<double>();
  return cfg;
}

inline std::string positions_csv(const EffectSpace& es) {
  std::ostringstream out;
  std::vector<std::string> row{"id"};
  row.insert(row.end(), es.column_names.begin(), es.column_names.end());
  csv::write_row(out, row);
  for (Index i = 0; i < es.rows(); ++i) {
    row[0] = std::to_string(i);
    for (Index a = 0; a < es.cols(); ++a) row[a + 1] = csv::format_double(es.positions(i, a));
    csv::write_row(out, row);
  }
  return out.str();
}

inline nlohmann::json space_metadata(const EffectSpace& es) {
  nlohmann::json meta;
  meta["format_version"] = kSpaceFormatVersion;
  meta["prng"] = std::string(kRngName);
  meta["config"] = to_json(es.config);
  meta["seed"] = es.config.seed;
  meta["rows"] = es.rows();
  meta["columns"] = es.column_names;
  meta["outcome"] = es.outcome_name;
  meta["iterations_run"] = es.iterations_run();
  meta["objective_trace"] = es.objective_trace;
  meta["scaling"] = {
      {"x_min", std::vector<double>(es.scaling.x_min.begin(), es.scaling.x_min.end())},
      {"x_max", std::vector<double>(es.scaling.x_max.begin(), es.scaling.x_max.end())},
      {"y_min", es.scaling.y_min},
      {"y_max", es.scaling.y_max}};
  return meta;
}

/// Writes the positions CSV and its sidecar. `extra` keys (such as a run
/// manifest) are merged into the sidecar.
inline void save_space(const EffectSpace& es, const std::string& path,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path);
    out << positions_csv(es);
    if (!out) throw io_error("failed writing " + path);
  }
  nlohmann::json meta = space_metadata(es);
  for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
  std::ofstream out(meta_path(path), std::ios::binary);
  if (!out) throw io_error("cannot write " + meta_path(path));
  out << meta.dump(2) << '\n';
}

inline EffectSpace load_space(const std::string& path) {
  nlohmann::json meta;
  {
    std::ifstream in(meta_path(path), std::ios::binary);
    if (!in) throw io_error("cannot open " + meta_path(path));
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw data_error("malformed space metadata: " + std::string(e.what()));
    }
  }
  EffectSpace es;
  try {
    if (meta.at("format_version").get<int>() != kSpaceFormatVersion) {
      throw data_error("space format version mismatch: expected " +
                       std::to_string(kSpaceFormatVersion) + ", found " +
                       meta.at("format_version").dump());
    }
    es.config = fit_config_from_json(meta.at("config"));
    es.column_names = meta.at("columns").get<std::vector<std::string>>();
    es.outcome_name = meta.at("outcome").get<std::string>();
    es.objective_trace = meta.at("objective_trace").get<std::vector<double>>();
    const auto& sc = meta.at("scaling");
    const auto x_min = sc.at("x_min").get<std::vector<double>>();
    const auto x_max = sc.at("x_max").get<std::vector<double>>();
    es.scaling.x_min = Eigen::Map<const Vector>(x_min.data(), static_cast<Index>(x_min.size()));
    es.scaling.x_max = Eigen::Map<const Vector>(x_max.data(), static_cast<Index>(x_max.size()));
    es.scaling.y_min = sc.at("y_min").get<double>();
    es.scaling.y_max = sc.at("y_max").get<double>();
    const auto rows = meta.at("rows").get<Index>();

    const csv::Table table = csv::read_file(path);
    const auto m = static_cast<Index>(es.column_names.size());
    if (static_cast<Index>(table.header.size()) != m + 1 || table.header[0] != "id") {
      throw data_error("space column-count mismatch between " + path + " and its metadata");
    }
    for (Index a = 0; a < m; ++a) {
      if (table.header[a + 1] != es.column_names[a]) {
        throw data_error("space column '" + table.header[a + 1] + "' does not match metadata");
      }
    }
    if (static_cast<Index>(table.rows.size()) != rows) {
      throw data_error("space file " + path + " has " + std::to_string(table.rows.size()) +
                       " rows, metadata says " + std::to_string(rows));
    }
    if (static_cast<Index>(x_min.size()) != m || static_cast<Index>(x_max.size()) != m) {
      throw data_error("space scaling records do not match column count");
    }
    es.positions.resize(rows, m);
    for (Index i = 0; i < rows; ++i) {
      for (Index a = 0; a < m; ++a) {
        double v = 0.0;
        if (!csv::parse_double(table.rows[i][a + 1], v) || !std::isfinite(v)) {
          throw data_error("space file row " + std::to_string(i + 1) + ": bad value");
        }
        es.positions(i, a) = v;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error("malformed space metadata: " + std::string(e.what()));
  }
  return es;
}

}  // namespace sfe
