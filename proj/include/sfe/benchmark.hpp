#pragma once

// Replicated method comparison against the simulation oracle, written as a
// tidy CSV with one row per (method, replication).

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "sfe/baselines.hpp"
#include "sfe/csv.hpp"
#include "sfe/effects.hpp"
#include "sfe/optimizer.hpp"
#include "sfe/simulation.hpp"

namespace sfe {

inline constexpr int kBenchmarkSchemaVersion = 1;
inline const std::vector<std::string> kBenchmarkHeader = {
    "method", "replication", "estimate", "oracle", "bias", "squared_error", "runtime_ms", "iterations"};
inline const std::vector<std::string> kKnownMethods = {
    "sfe", "diff", "ols", "ps-match", "ps-iptw", "mahab1", "mahab2", "mahab3", "mahab4"};

struct EstimateReport {
  std::string method;
  int replication = 0;
  double ate_estimate = 0.0;
  double oracle = 0.0;
  double bias = 0.0;
  double squared_error = 0.0;
  std::int64_t runtime_ms = 0;
  /// SFE iteration budget actually run; 0 for other methods.
  std::int64_t iterations = 0;

  static EstimateReport make(std::string method, int replication, double estimate, double oracle) {
    EstimateReport r;
    r.method = std::move(method);
    r.replication = replication;
    r.ate_estimate = estimate;
    r.oracle = oracle;
    r.bias = estimate - oracle;
    r.squared_error = r.bias * r.bias;
    return r;
  }
};

struct MethodSummary {
  std::string method;
  std::size_t replications = 0;
  double mean_estimate = 0.0;
  double mean_bias = 0.0;
  double mse = 0.0;
  /// Population variance of the per-replication bias.
  double bias_variance = 0.0;
};

inline MethodSummary summarize(const std::vector<EstimateReport>& rows, const std::string& method) {
  MethodSummary s;
  s.method = method;
  for (const auto& r : rows) {
    if (r.method != method) continue;
    ++s.replications;
    s.mean_estimate += r.ate_estimate;
    s.mean_bias += r.bias;
    s.mse += r.squared_error;
  }
  if (s.replications == 0) throw usage_error("no rows for method '" + method + "'");
  const auto count = static_cast<double>(s.replications);
  s.mean_estimate /= count;
  s.mean_bias /= count;
  s.mse /= count;
  for (const auto& r : rows) {
    if (r.method == method) s.bias_variance += (r.bias - s.mean_bias) * (r.bias - s.mean_bias);
  }
  s.bias_variance /= count;
  return s;
}

struct BenchmarkConfig {
  DgpConfig dgp;
  int replications = 100;
  std::uint64_t seed = 0;
  std::vector<std::string> methods = kKnownMethods;
  FitConfig sfe_fit = [] {
    FitConfig c;
    c.iterations = 2000;
    return c;
  }();
  AteMode sfe_mode = kDefaultAteMode;
  unsigned threads = 1;
};

inline void validate_methods(const std::vector<std::string>& methods) {
  if (methods.empty()) throw usage_error("no methods given");
  for (const auto& m : methods) {
    if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) == kKnownMethods.end()) {
      throw usage_error("unknown method '" + m + "'");
    }
  }
}

/// SFE estimate of the treatment column's effect in raw outcome units.
inline double sfe_estimate(const SimulatedPopulation& pop, const FitConfig& cfg, AteMode mode) {
  const NormalizedData nd = unity_normalize(pop.dataset);
  const EffectSpace es = fit(nd, cfg);
  EffectQuery q;
  q.mode = mode;
  return ate(es, nd, pop.treatment_column, q).ate_raw;
}

inline double baseline_estimate(const std::string& method, const Dataset& d, const std::string& treat) {
  const auto covariates = default_covariates(d, treat);
  if (method == "diff") return ate_diff_means(d, treat);
  if (method == "ols") return ate_ols(d, treat, covariates);
  if (method == "ps-match" || method == "ps-iptw") {
    const Vector scores = fit_propensity(d, treat, covariates);
    return ate_ps(d, treat, scores, method == "ps-match" ? PsMode::match : PsMode::iptw);
  }
  if (method.rfind("mahab", 0) == 0 && method.size() == 6) {
    return ate_mahalanobis(d, treat, covariates, method[5] - '0');
  }
  throw usage_error("unknown method '" + method + "'");
}

inline std::vector<EstimateReport> run_replication(const BenchmarkConfig& cfg, int rep) {
  DgpConfig dgp = cfg.dgp;
  dgp.seed = cfg.seed + static_cast<std::uint64_t>(rep);
  const SimulatedPopulation pop = simulate(dgp);
  const double oracle = oracle_ate(pop);
  std::vector<EstimateReport> rows;
  for (const auto& method : cfg.methods) {
    const auto start = std::chrono::steady_clock::now();
    double estimate = 0.0;
    std::int64_t iterations = 0;
    if (method == "sfe") {
      FitConfig fc = cfg.sfe_fit;
      fc.seed = dgp.seed;
      estimate = sfe_estimate(pop, fc, cfg.sfe_mode);
      iterations = fc.iterations;
    } else {
      estimate = baseline_estimate(method, pop.dataset, pop.treatment_column);
    }
    const auto elapsed = std::chrono::steady_clock::now() - start;
    EstimateReport r = EstimateReport::make(method, rep, estimate, oracle);
    r.runtime_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    r.iterations = iterations;
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Threads requested through SFE_THREADS, defaulting to the hardware count.
inline unsigned thread_budget() {
  unsigned n = std::max(1U, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SFE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = static_cast<unsigned>(v);
  }
  return n;
}

/// Runs `task(rep)` for every replication on up to `threads` workers.
/// Results land in replication order whatever the completion order.
template <typename T>
std::vector<T> parallel_replications(int replications, unsigned threads,
                                     const std::function<T(int)>& task) {
  std::vector<T> results(static_cast<std::size_t>(replications));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int rep = next++; rep < replications; rep = next++) {
      try {
        results[static_cast<std::size_t>(rep)] = task(rep);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(replications)));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < count; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

inline std::vector<EstimateReport> run_benchmark(const BenchmarkConfig& cfg) {
  validate_methods(cfg.methods);
  if (cfg.replications < 1) throw usage_error("replications must be at least 1");
  const auto per_rep = parallel_replications<std::vector<EstimateReport>>(
      cfg.replications, cfg.threads, [&](int rep) { return run_replication(cfg, rep); });
  std::vector<EstimateReport> rows;
  for (const auto& batch : per_rep) rows.insert(rows.end(), batch.begin(), batch.end());
  return rows;
}

inline void write_benchmark_csv(std::ostream& out, const std::vector<EstimateReport>& rows) {
  csv::write_row(out, kBenchmarkHeader);
  for (const auto& r : rows) {
    csv::write_row(out, {r.method, std::to_string(r.replication), csv::format_double(r.ate_estimate),
                         csv::format_double(r.oracle), csv::format_double(r.bias),
                         csv::format_double(r.squared_error), std::to_string(r.runtime_ms),
                         std::to_string(r.iterations)});
  }
}

inline std::vector<EstimateReport> parse_benchmark_csv(const std::string& text) {
  const csv::Table table = csv::parse(text);
  if (table.header != kBenchmarkHeader) throw data_error("unexpected benchmark CSV header");
  std::vector<EstimateReport> rows;
  for (const auto& f : table.rows) {
    EstimateReport r;
    r.method = f[0];
    double v = 0.0;
    auto num = [&](const std::string& s) {
      if (!csv::parse_double(s, v)) throw data_error("bad benchmark value '" + s + "'");
      return v;
    };
    r.replication = static_cast<int>(num(f[1]));
    r.ate_estimate = num(f[2]);
    r.oracle = num(f[3]);
    r.bias = num(f[4]);
    r.squared_error = num(f[5]);
    r.runtime_ms = static_cast<std::int64_t>(num(f[6]));
    r.iterations = static_cast<std::int64_t>(num(f[7]));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace sfe
