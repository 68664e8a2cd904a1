#pragma once

// Command-line surface: fit, ate, ite, select, simulate, benchmark.
// run_cli() returns the process exit code: 0 success, 1 runtime or numeric
// failure, 2 usage or contract error.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sfe/benchmark.hpp"
#include "sfe/data_model.hpp"
#include "sfe/effects.hpp"
#include "sfe/optimizer.hpp"
#include "sfe/simulation.hpp"
#include "sfe/space_io.hpp"

namespace sfe::cli {

inline constexpr const char* kVersion = "1.0.0";

using nlohmann::json;

inline std::string fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize k = 0; k < in.gcount(); ++k) {
      h ^= static_cast<unsigned char>(buf[k]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

/// Manifest timestamps honour SOURCE_DATE_EPOCH so reruns can be made
/// byte-identical.
inline std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) now = std::strtoll(epoch, nullptr, 10);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::vector<std::string> command_line;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;

  json to_json() const {
    json j;
    j["tool"] = "sfe";
    j["version"] = kVersion;
    j["command_line"] = command_line;
    j["config"] = config;
    j["seed"] = seed;
    j["prng"] = std::string(kRngName);
    json digests = json::array();
    for (const auto& path : inputs) digests.push_back({{"path", path}, {"fnv1a64", fnv1a64_file(path)}});
    j["inputs"] = digests;
    j["space_format_version"] = kSpaceFormatVersion;
    j["benchmark_schema_version"] = kBenchmarkSchemaVersion;
    j["created_utc"] = utc_timestamp();
    return j;
  }
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out << text;
  if (!out) throw io_error("failed writing " + path);
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw usage_error("expected true or false, got '" + s + "'");
}

struct Context {
  std::vector<std::string> args;
  std::ostream& out;
  std::ostream& err;
};

// ---- fit -------------------------------------------------------------------

struct FitOptions {
  std::string input, outcome, output;
  double eta = 0.025;
  std::int64_t iterations = 10000;
  std::int64_t batch = 0;
  std::uint64_t seed = 0;
  std::string deterministic = "true";
  std::optional<double> tolerance;
  std::optional<double> missing_code;
};

inline int cmd_fit(const FitOptions& o, Context& ctx) {
  const Dataset d = read_dataset(o.input, o.outcome, o.missing_code);
  const NormalizedData nd = unity_normalize(d);
  FitConfig cfg;
  cfg.eta = o.eta;
  cfg.iterations = o.iterations;
  cfg.batch_size = o.batch;
  cfg.seed = o.seed;
  cfg.deterministic = parse_bool(o.deterministic);
  cfg.tolerance = o.tolerance;

  RunManifest manifest{ctx.args, to_json(cfg), cfg.seed, {o.input}};
  manifest.config["outcome"] = o.outcome;
  try {
    EffectSpace es = fit(nd, cfg);
    es.outcome_name = o.outcome;
    save_space(es, o.output, {{"manifest", manifest.to_json()}});
    ctx.out << json{{"output", o.output},
                    {"final_objective", es.objective_trace.back()},
                    {"iterations", es.iterations_run()},
                    {"eta", cfg.eta}}
                   .dump()
            << '\n';
  } catch (const DivergenceError& e) {
    const std::string trace_path = o.output + ".trace.json";
    write_text(trace_path, json{{"iteration", e.iteration()}, {"objective_trace", e.trace()}}.dump());
    throw numeric_error(std::string(e.what()) + " (objective trace written to " + trace_path + ")");
  }
  return 0;
}

// ---- ate / ite / select ----------------------------------------------------

struct QueryOptions {
  std::string space, input, factor, mask, mode = to_string(kDefaultAteMode);
  double threshold = 0.0;
  std::optional<double> missing_code;
  std::optional<std::int64_t> id;
  std::int64_t k = 7;
};

struct LoadedQuery {
  EffectSpace es;
  Dataset dataset;
  NormalizedData nd;
  EffectQuery query;
};

inline LoadedQuery load_query(const QueryOptions& o) {
  EffectSpace es = load_space(o.space);
  Dataset d = read_dataset(o.input, es.outcome_name, o.missing_code);
  NormalizedData nd = unity_normalize(d);
  if (nd.column_names != es.column_names || nd.rows() != es.rows()) {
    throw usage_error("incompatible space: dataset has " + std::to_string(nd.rows()) + " rows and " +
                      std::to_string(nd.cols()) + " columns, space has " + std::to_string(es.rows()) +
                      " rows and " + std::to_string(es.cols()) + " columns");
  }
  EffectQuery q;
  q.mode = parse_ate_mode(o.mode);
  q.threshold = o.threshold;
  if (!o.mask.empty()) {
    q.mask = parse_mask(o.mask, d);
    q.mask_description = o.mask;
  }
  return {std::move(es), std::move(d), std::move(nd), std::move(q)};
}

inline json ate_json(const AteResult& r) {
  return {{"factor", r.factor},
          {"ate", r.ate_raw},
          {"ate_normalized", r.ate_normalized},
          {"signed_difference", r.signed_difference},
          {"n_treated", r.n_treated},
          {"n_control", r.n_control},
          {"mask", r.mask_description},
          {"mode", to_string(r.mode)}};
}

inline int cmd_ate(const QueryOptions& o, Context& ctx) {
  const LoadedQuery lq = load_query(o);
  ctx.out << ate_json(ate(lq.es, lq.nd, o.factor, lq.query)).dump() << '\n';
  return 0;
}

inline int cmd_ite(const QueryOptions& o, Context& ctx) {
  const LoadedQuery lq = load_query(o);
  auto record = [&](Index i) {
    const IteResult r = ite(lq.es, lq.nd, i, o.factor, lq.query);
    return json{{"id", r.individual}, {"treated", r.treated}, {"ite", r.ite_raw},
                {"ite_normalized", r.ite_normalized}};
  };
  if (o.id) {
    json j = record(static_cast<Index>(*o.id));
    j["factor"] = o.factor;
    j["mode"] = o.mode;
    ctx.out << j.dump() << '\n';
    return 0;
  }
  json items = json::array();
  double total = 0.0;
  for (Index i = 0; i < lq.es.rows(); ++i) {
    if (!lq.query.mask.empty() && !lq.query.mask[static_cast<std::size_t>(i)]) continue;
    items.push_back(record(i));
    total += items.back()["ite"].get<double>();
  }
  ctx.out << json{{"factor", o.factor},
                  {"mode", o.mode},
                  {"mask", lq.query.mask_description},
                  {"count", items.size()},
                  {"mean_ite", items.empty() ? 0.0 : total / static_cast<double>(items.size())},
                  {"individuals", items}}
                 .dump()
          << '\n';
  return 0;
}

inline int cmd_select(const QueryOptions& o, Context& ctx) {
  const LoadedQuery lq = load_query(o);
  const auto selected = select_variables(lq.es, lq.nd, static_cast<Index>(o.k), lq.query);
  json ranking = json::array();
  for (const auto& c : rank_columns(lq.es, lq.nd, lq.query)) {
    ranking.push_back({{"factor", c.name}, {"ate", denormalize_effect(c.ate, lq.nd)}});
  }
  ctx.out << json{{"k", o.k}, {"selected", selected}, {"ranking", ranking}, {"mode", o.mode}}.dump()
          << '\n';
  return 0;
}

// ---- simulate --------------------------------------------------------------

struct SimulateOptions {
  std::string dgp = "basic", out_dir;
  Index n = 1000;
  int reps = 1;
  std::uint64_t seed = 0;
  int t = 10;
  std::int64_t gamma = 1024;
  double noise_sd = 0.25;
  bool randomized = false;
  std::string propensities;
};

inline std::optional<std::array<double, 3>> parse_propensities(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::array<double, 3> p{};
  std::size_t k = 0;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (k == 3 || !csv::parse_double(item, p[k])) {
      throw usage_error("--propensities expects three comma-separated values, got '" + s + "'");
    }
    ++k;
  }
  if (k != 3) throw usage_error("--propensities expects three comma-separated values, got '" + s + "'");
  return p;
}

inline DgpConfig dgp_config(const std::string& kind, Index n, int t, std::int64_t gamma,
                            double noise_sd, bool randomized) {
  DgpConfig cfg;
  cfg.kind = parse_dgp_kind(kind);
  cfg.n = n;
  cfg.consequences = t;
  cfg.gamma = gamma;
  cfg.noise_sd = noise_sd;
  cfg.randomized = randomized;
  return cfg;
}

inline json dgp_json(const DgpConfig& cfg) {
  json j{{"dgp", to_string(cfg.kind)}, {"n", cfg.n},           {"t", cfg.consequences},
         {"gamma", cfg.gamma},         {"noise_sd", cfg.noise_sd}, {"randomized", cfg.randomized}};
  if (cfg.propensities) j["propensities"] = *cfg.propensities;
  return j;
}

inline int cmd_simulate(const SimulateOptions& o, Context& ctx) {
  DgpConfig cfg = dgp_config(o.dgp, o.n, o.t, o.gamma, o.noise_sd, o.randomized);
  cfg.propensities = parse_propensities(o.propensities);
  if (o.reps < 1) throw usage_error("reps must be at least 1");
  std::filesystem::create_directories(o.out_dir);
  const std::string dir = o.out_dir;

  // Validate parameters before writing anything.
  cfg.seed = o.seed;
  (void)simulate(cfg);

  std::ostringstream oracle;
  std::vector<std::string> header{"replication", "oracle_ate"};
  std::vector<std::string> subpops;
  for (int rep = 0; rep < o.reps; ++rep) {
    cfg.seed = o.seed + static_cast<std::uint64_t>(rep);
    const SimulatedPopulation pop = simulate(cfg);
    if (rep == 0) {
      subpops = pop.subpop_names;
      for (const auto& s : subpops) header.push_back("oracle_" + s);
      csv::write_row(oracle, header);
    }
    std::ostringstream data;
    write_dataset(data, pop.dataset);
    write_text(dir + "/population_" + std::to_string(rep) + ".csv", data.str());

    std::ostringstream cf;
    csv::write_row(cf, {"id", "subpop", "propensity", "y_plus", "y_minus", "ite_true"});
    for (Index i = 0; i < pop.dataset.rows(); ++i) {
      const int s = pop.subpop[static_cast<std::size_t>(i)];
      const double p = pop.propensity.empty() ? 0.0 : pop.propensity[static_cast<std::size_t>(s)];
      csv::write_row(cf, {std::to_string(i), pop.subpop_names[static_cast<std::size_t>(s)],
                          csv::format_double(p), csv::format_double(pop.y_plus[i]),
                          csv::format_double(pop.y_minus[i]), csv::format_double(pop.ite_true[i])});
    }
    write_text(dir + "/counterfactuals_" + std::to_string(rep) + ".csv", cf.str());

    std::vector<std::string> row{std::to_string(rep), csv::format_double(oracle_ate(pop))};
    for (std::size_t s = 0; s < subpops.size(); ++s) {
      row.push_back(csv::format_double(oracle_ate(pop, pop.subpop_mask(static_cast<int>(s)))));
    }
    csv::write_row(oracle, row);
  }
  write_text(dir + "/oracle.csv", oracle.str());

  json config = dgp_json(cfg);
  config["reps"] = o.reps;
  write_text(dir + "/manifest.json", RunManifest{ctx.args, config, o.seed, {}}.to_json().dump(2) + "\n");
  ctx.out << json{{"out", dir}, {"replications", o.reps}, {"dgp", to_string(cfg.kind)}}.dump() << '\n';
  return 0;
}

// ---- benchmark -------------------------------------------------------------

struct BenchmarkOptions {
  std::string dgp = "basic", methods, out, mode = to_string(kDefaultAteMode);
  Index n = 1000;
  int reps = 100;
  bool full = false;
  std::uint64_t seed = 0;
  int t = 10;
  std::int64_t gamma = 1024;
  double noise_sd = 0.25;
  bool randomized = false;
  std::int64_t sfe_iters = 2000;
  std::int64_t sfe_batch = 0;
  double eta = 0.025;
  double propensity_lo = 0.2;
  double propensity_hi = 0.5;
  std::string propensities;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

inline int cmd_benchmark(const BenchmarkOptions& o, Context& ctx) {
  BenchmarkConfig cfg;
  cfg.dgp = dgp_config(o.dgp, o.n, o.t, o.gamma, o.noise_sd, o.randomized);
  cfg.dgp.propensity_lo = o.propensity_lo;
  cfg.dgp.propensity_hi = o.propensity_hi;
  cfg.dgp.propensities = parse_propensities(o.propensities);
  cfg.replications = o.full ? 1000 : o.reps;
  cfg.seed = o.seed;
  if (!o.methods.empty()) cfg.methods = split_list(o.methods);
  validate_methods(cfg.methods);
  cfg.sfe_fit.iterations = o.sfe_iters;
  cfg.sfe_fit.batch_size = o.sfe_batch;
  cfg.sfe_fit.eta = o.eta;
  cfg.sfe_mode = parse_ate_mode(o.mode);
  cfg.threads = thread_budget();

  const auto rows = run_benchmark(cfg);
  std::ostringstream text;
  write_benchmark_csv(text, rows);
  write_text(o.out, text.str());

  json config = dgp_json(cfg.dgp);
  config["reps"] = cfg.replications;
  config["methods"] = cfg.methods;
  config["sfe_fit"] = to_json(cfg.sfe_fit);
  config["sfe_mode"] = to_string(cfg.sfe_mode);
  config["propensity_range"] = {o.propensity_lo, o.propensity_hi};
  write_text(o.out + ".manifest.json", RunManifest{ctx.args, config, o.seed, {}}.to_json().dump(2) + "\n");

  json summary = json::array();
  for (const auto& m : cfg.methods) {
    const MethodSummary s = summarize(rows, m);
    summary.push_back({{"method", s.method},
                       {"replications", s.replications},
                       {"mean_estimate", s.mean_estimate},
                       {"mean_bias", s.mean_bias},
                       {"mse", s.mse}});
  }
  ctx.out << json{{"out", o.out}, {"rows", rows.size()}, {"summary", summary}}.dump() << '\n';
  return 0;
}

// ---- entry point -----------------------------------------------------------

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic factorial estimation of causal effects"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  FitOptions fit_o;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an effect space to a dataset CSV");
  fit_cmd->add_option("--input", fit_o.input, "Dataset CSV with header row")->required();
  fit_cmd->add_option("--outcome", fit_o.outcome, "Outcome column name")->required();
  fit_cmd->add_option("--output", fit_o.output, "Effect-space CSV to write")->required();
  fit_cmd->add_option("--eta", fit_o.eta, "Learning rate")->capture_default_str();
  fit_cmd->add_option("--iters", fit_o.iterations, "Iterations")->capture_default_str();
  fit_cmd->add_option("--batch", fit_o.batch, "Batch size (0 = full sample)")->capture_default_str();
  fit_cmd->add_option("--seed", fit_o.seed, "Shuffle seed")->capture_default_str();
  fit_cmd->add_option("--deterministic", fit_o.deterministic, "true|false")->capture_default_str();
  fit_cmd->add_option("--tolerance", fit_o.tolerance, "Early-stop relative tolerance");
  fit_cmd->add_option("--missing-code", fit_o.missing_code, "Value marking missing covariates");

  QueryOptions q_o;
  auto add_query = [&](CLI::App* sub) {
    sub->add_option("--space", q_o.space, "Effect-space CSV")->required();
    sub->add_option("--input", q_o.input, "Dataset CSV the space was fitted on")->required();
    sub->add_option("--mask", q_o.mask, "Subset, e.g. married=1 or age>=30&black=1");
    sub->add_option("--mode", q_o.mode, "sqrt|linear")->capture_default_str();
    sub->add_option("--threshold", q_o.threshold, "Normalized treated threshold")->capture_default_str();
    sub->add_option("--missing-code", q_o.missing_code, "Value marking missing covariates");
  };
  auto* ate_cmd = app.add_subcommand("ate", "Average effect of a factor");
  add_query(ate_cmd);
  ate_cmd->add_option("--factor", q_o.factor, "Factor column")->required();
  auto* ite_cmd = app.add_subcommand("ite", "Individual effects of a factor");
  add_query(ite_cmd);
  ite_cmd->add_option("--factor", q_o.factor, "Factor column")->required();
  ite_cmd->add_option("--id", q_o.id, "Single individual (row index)");
  auto* select_cmd = app.add_subcommand("select", "Greedy selection of non-redundant causes");
  add_query(select_cmd);
  select_cmd->add_option("--k", q_o.k, "Number of columns to select")->capture_default_str();

  SimulateOptions sim_o;
  auto* sim_cmd = app.add_subcommand("simulate", "Write simulated populations and their oracle");
  sim_cmd->add_option("--dgp", sim_o.dgp, "basic|hetero|endogenous|factorial")->capture_default_str();
  sim_cmd->add_option("--n", sim_o.n, "Population size")->capture_default_str();
  sim_cmd->add_option("--reps", sim_o.reps, "Replications")->capture_default_str();
  sim_cmd->add_option("--seed", sim_o.seed, "Base seed")->capture_default_str();
  sim_cmd->add_option("--t", sim_o.t, "Consequence columns (endogenous)")->capture_default_str();
  sim_cmd->add_option("--gamma", sim_o.gamma, "Sampled cube edges (factorial)")->capture_default_str();
  sim_cmd->add_option("--noise-sd", sim_o.noise_sd, "Outcome noise sd")->capture_default_str();
  sim_cmd->add_flag("--randomized", sim_o.randomized, "Equal assignment probability 0.5");
  sim_cmd->add_option("--propensities", sim_o.propensities, "Fixed propensities of a,b,c, e.g. 0.1,0.5,0.9");
  sim_cmd->add_option("--out", sim_o.out_dir, "Output directory")->required();

  BenchmarkOptions b_o;
  auto* bench_cmd = app.add_subcommand("benchmark", "Compare estimators against the oracle");
  bench_cmd->add_option("--dgp", b_o.dgp, "basic|hetero|endogenous|factorial")->capture_default_str();
  bench_cmd->add_option("--n", b_o.n, "Population size")->capture_default_str();
  bench_cmd->add_option("--reps", b_o.reps, "Replications")->capture_default_str();
  bench_cmd->add_flag("--full", b_o.full, "Run 1000 replications");
  bench_cmd->add_option("--seed", b_o.seed, "Base seed")->capture_default_str();
  bench_cmd->add_option("--methods", b_o.methods,
                        "Comma list of sfe,diff,ols,ps-match,ps-iptw,mahab1..mahab4 (default all)");
  bench_cmd->add_option("--t", b_o.t, "Consequence columns (endogenous)")->capture_default_str();
  bench_cmd->add_option("--gamma", b_o.gamma, "Sampled cube edges (factorial)")->capture_default_str();
  bench_cmd->add_option("--noise-sd", b_o.noise_sd, "Outcome noise sd")->capture_default_str();
  bench_cmd->add_flag("--randomized", b_o.randomized, "Equal assignment probability 0.5");
  bench_cmd->add_option("--propensity-lo", b_o.propensity_lo, "Lowest subpopulation propensity")
      ->capture_default_str();
  bench_cmd->add_option("--propensity-hi", b_o.propensity_hi, "Highest subpopulation propensity")
      ->capture_default_str();
  bench_cmd->add_option("--propensities", b_o.propensities, "Fixed propensities of a,b,c, e.g. 0.1,0.5,0.9");
  bench_cmd->add_option("--sfe-iters", b_o.sfe_iters, "SFE iteration budget")->capture_default_str();
  bench_cmd->add_option("--sfe-batch", b_o.sfe_batch, "SFE batch size (0 = full sample)")
      ->capture_default_str();
  bench_cmd->add_option("--eta", b_o.eta, "SFE learning rate")->capture_default_str();
  bench_cmd->add_option("--mode", b_o.mode, "SFE effect mode sqrt|linear")->capture_default_str();
  bench_cmd->add_option("--out", b_o.out, "Tidy CSV to write")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  Context ctx{args, out, err};
  try {
    if (fit_cmd->parsed()) return cmd_fit(fit_o, ctx);
    if (ate_cmd->parsed()) return cmd_ate(q_o, ctx);
    if (ite_cmd->parsed()) return cmd_ite(q_o, ctx);
    if (select_cmd->parsed()) return cmd_select(q_o, ctx);
    if (sim_cmd->parsed()) return cmd_simulate(sim_o, ctx);
    if (bench_cmd->parsed()) return cmd_benchmark(b_o, ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.kind() == ErrorKind::usage || e.kind() == ErrorKind::data ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace sfe::cli
