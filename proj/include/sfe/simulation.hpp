#pragma once

// Monte Carlo designs with full counterfactual oracles.
//
// Three subpopulations a/b/c (60/30/10 percent of n) receive the treatment
// with subpopulation-specific propensities; each individual carries both
// potential outcomes, so the true individual and average effects are known.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sfe/data_model.hpp"
#include "sfe/error.hpp"
#include "sfe/rng.hpp"
#include "sfe/types.hpp"

namespace sfe {

enum class DgpKind { basic, heterogeneous, endogenous, factorial };

inline std::string to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::basic: return "basic";
    case DgpKind::heterogeneous: return "hetero";
    case DgpKind::endogenous: return "endogenous";
    case DgpKind::factorial: return "factorial";
  }
  return "basic";
}

inline DgpKind parse_dgp_kind(const std::string& s) {
  if (s == "basic") return DgpKind::basic;
  if (s == "hetero" || s == "heterogeneous") return DgpKind::heterogeneous;
  if (s == "endogenous") return DgpKind::endogenous;
  if (s == "factorial") return DgpKind::factorial;
  throw usage_error("unknown dgp '" + s + "' (expected basic, hetero, endogenous or factorial)");
}

struct DgpConfig {
  DgpKind kind = DgpKind::basic;
  Index n = 1000;
  std::uint64_t seed = 0;
  /// Consequence columns u_1..u_T (endogenous).
  int consequences = 10;
  /// Sampled cube edges (factorial).
  std::int64_t gamma = 1024;
  double noise_sd = 0.25;
  /// Baseline outcome level of subpopulations a, b, c.
  std::array<double, 3> intercepts{0.0, 0.25, 0.5};
  double propensity_lo = 0.2;
  double propensity_hi = 0.5;
  /// Same assignment probability (0.5) for every subpopulation.
  bool randomized = false;
  /// Fixed assignment probabilities for a, b, c instead of uniform draws.
  std::optional<std::array<double, 3>> propensities;
};

inline constexpr int kCubeDim = 10;
inline constexpr std::int64_t kCubeVertices = std::int64_t{1} << kCubeDim;
inline constexpr std::int64_t kCubeEdges = kCubeDim * (kCubeVertices / 2);

struct SimulatedPopulation {
  Dataset dataset;
  std::string treatment_column = "treat";
  /// Subpopulation index per individual; names in `subpop_names`.
  std::vector<int> subpop;
  std::vector<std::string> subpop_names;
  /// Treatment probability per subpopulation (empty for the cube design).
  std::vector<double> propensity;
  Vector ite_true;
  Vector y_plus;
  Vector y_minus;
  /// True per-factor effects of each individual (rows align with dataset).
  Matrix effect_vectors;

  Mask subpop_mask(int s) const {
    Mask mask(subpop.size());
    for (std::size_t i = 0; i < subpop.size(); ++i) mask[i] = subpop[i] == s;
    return mask;
  }
};

namespace detail {

enum Stream : std::uint64_t {
  kPropensity = 1,
  kBaseline = 2,
  kEffect = 3,
  kAssignment = 4,
  kConsequence = 5,
  kEdges = 6,
  kCubeNoise = 7,
};

inline std::array<Index, 3> subpop_sizes(Index n) {
  const auto a = static_cast<Index>(std::llround(0.6 * static_cast<double>(n)));
  const auto b = static_cast<Index>(std::llround(0.3 * static_cast<double>(n)));
  return {a, b, n - a - b};
}

inline SimulatedPopulation simulate_subpopulations(const DgpConfig& cfg,
                                                   const std::array<double, 3>& effect_means) {
  if (cfg.n < 10) throw usage_error("simulation needs n >= 10");
  if (!(cfg.noise_sd >= 0.0)) throw usage_error("noise_sd must be nonnegative");
  if (!(cfg.propensity_lo > 0.0 && cfg.propensity_lo <= cfg.propensity_hi && cfg.propensity_hi < 1.0)) {
    throw usage_error("propensity range must lie inside (0,1)");
  }
  const Index n = cfg.n;
  const auto sizes = subpop_sizes(n);
  constexpr double kEffectSd = 0.5;

  Rng prop_rng = substream(cfg.seed, kPropensity);
  Rng base_rng = substream(cfg.seed, kBaseline);
  Rng effect_rng = substream(cfg.seed, kEffect);
  Rng assign_rng = substream(cfg.seed, kAssignment);

  std::vector<double> propensity(3);
  for (auto& p : propensity) {
    const double u = uniform01(prop_rng);
    p = cfg.randomized ? 0.5 : cfg.propensity_lo + (cfg.propensity_hi - cfg.propensity_lo) * u;
  }
  if (cfg.propensities && !cfg.randomized) {
    for (std::size_t s = 0; s < 3; ++s) {
      const double p = (*cfg.propensities)[s];
      if (!(p > 0.0 && p < 1.0)) throw usage_error("propensities must lie in (0,1)");
      propensity[s] = p;
    }
  }

  Matrix x = Matrix::Zero(n, 4);
  Vector y(n), y_plus(n), y_minus(n), ite(n);
  Matrix effects = Matrix::Zero(n, 4);
  std::vector<int> subpop(static_cast<std::size_t>(n));
  std::normal_distribution<double> std_normal(0.0, 1.0);

  Index i = 0;
  for (int s = 0; s < 3; ++s) {
    for (Index k = 0; k < sizes[s]; ++k, ++i) {
      subpop[static_cast<std::size_t>(i)] = s;
      const double baseline = cfg.intercepts[s] + cfg.noise_sd * std_normal(base_rng);
      const double effect = effect_means[s] + kEffectSd * std_normal(effect_rng);
      const bool treated = uniform01(assign_rng) < propensity[s];
      x(i, s) = 1.0;
      x(i, 3) = treated ? 1.0 : 0.0;
      y_minus[i] = baseline;
      y_plus[i] = baseline + effect;
      ite[i] = y_plus[i] - y_minus[i];
      y[i] = treated ? y_plus[i] : y_minus[i];
      effects(i, 3) = effect;
    }
  }

  SimulatedPopulation pop{
      Dataset::infer({"type_a", "type_b", "type_c", "treat"}, std::move(x), std::move(y)),
      "treat",
      std::move(subpop),
      {"a", "b", "c"},
      std::move(propensity),
      std::move(ite),
      std::move(y_plus),
      std::move(y_minus),
      std::move(effects)};
  return pop;
}

}  // namespace detail

/// Homogeneous design: every subpopulation's effects ~ N(0.5, 0.5^2).
inline SimulatedPopulation simulate_basic(const DgpConfig& cfg) {
  return detail::simulate_subpopulations(cfg, {0.5, 0.5, 0.5});
}

/// Heterogeneous design: effect means 0.5 (a), 1.0 (b), 0.0 (c), sd 0.5.
inline SimulatedPopulation simulate_heterogeneous(const DgpConfig& cfg) {
  return detail::simulate_subpopulations(cfg, {0.5, 1.0, 0.0});
}

/// Heterogeneous design plus consequence columns u_t correlated with the
/// observed outcome at rho_t = 1 - 1/t. They are drawn from their own
/// stream, so the remaining columns match simulate_heterogeneous exactly.
inline SimulatedPopulation simulate_endogenous(const DgpConfig& cfg) {
  if (cfg.consequences < 1) throw usage_error("endogenous design needs T >= 1");
  SimulatedPopulation pop = simulate_heterogeneous(cfg);
  const Dataset& base = pop.dataset;
  const Index n = base.rows();
  const Index m0 = base.cols();
  const int t_max = cfg.consequences;

  const Vector& y = base.y();
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().mean());
  Rng rng = substream(cfg.seed, detail::kConsequence);
  std::normal_distribution<double> std_normal(0.0, 1.0);

  Matrix x(n, m0 + t_max);
  x.leftCols(m0) = base.x();
  std::vector<std::string> names = base.column_names();
  for (int t = 1; t <= t_max; ++t) {
    const double rho = 1.0 - 1.0 / t;
    const double noise = std::sqrt(1.0 - rho * rho);
    for (Index i = 0; i < n; ++i) {
      const double z = sd > 0.0 ? (y[i] - mean) / sd : 0.0;
      x(i, m0 + t - 1) = rho * z + noise * std_normal(rng);
    }
    names.push_back("u_" + std::to_string(t));
  }
  Matrix effects = Matrix::Zero(n, m0 + t_max);
  effects.leftCols(m0) = pop.effect_vectors;
  pop.effect_vectors = std::move(effects);
  pop.dataset = Dataset::infer(std::move(names), std::move(x), y);
  return pop;
}

/// Cube design: gamma edges of the 10-cube drawn without replacement; the
/// sample is the set of their endpoints and every factor adds exactly 1 to
/// the outcome. Counterfactuals refer to factor f1.
inline SimulatedPopulation simulate_factorial(const DgpConfig& cfg) {
  if (cfg.gamma < 1 || cfg.gamma > kCubeEdges) {
    throw usage_error("gamma must lie in [1, " + std::to_string(kCubeEdges) + "]");
  }
  if (!(cfg.noise_sd >= 0.0)) throw usage_error("noise_sd must be nonnegative");

  std::vector<std::int64_t> edges(static_cast<std::size_t>(kCubeEdges));
  std::iota(edges.begin(), edges.end(), std::int64_t{0});
  Rng edge_rng = substream(cfg.seed, detail::kEdges);
  for (std::int64_t k = 0; k < cfg.gamma; ++k) {
    const auto pick = k + static_cast<std::int64_t>(
                              uniform_below(edge_rng, static_cast<std::uint64_t>(kCubeEdges - k)));
    std::swap(edges[static_cast<std::size_t>(k)], edges[static_cast<std::size_t>(pick)]);
  }

  std::vector<bool> present(static_cast<std::size_t>(kCubeVertices), false);
  constexpr std::int64_t half = kCubeVertices / 2;
  for (std::int64_t k = 0; k < cfg.gamma; ++k) {
    const std::int64_t e = edges[static_cast<std::size_t>(k)];
    const std::int64_t dim = e / half;
    const std::int64_t rest = e % half;
    const std::int64_t low_mask = (std::int64_t{1} << dim) - 1;
    const std::int64_t low = (rest & low_mask) | ((rest & ~low_mask) << 1);
    present[static_cast<std::size_t>(low)] = true;
    present[static_cast<std::size_t>(low | (std::int64_t{1} << dim))] = true;
  }
  std::vector<std::int64_t> vertices;
  for (std::int64_t v = 0; v < kCubeVertices; ++v) {
    if (present[static_cast<std::size_t>(v)]) vertices.push_back(v);
  }

  const auto n = static_cast<Index>(vertices.size());
  Matrix x(n, kCubeDim);
  Vector y(n), y_plus(n), y_minus(n);
  Rng noise_rng = substream(cfg.seed, detail::kCubeNoise);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    const auto v = static_cast<std::uint64_t>(vertices[static_cast<std::size_t>(i)]);
    for (int a = 0; a < kCubeDim; ++a) x(i, a) = (v >> a) & 1U ? 1.0 : 0.0;
    const double noise = cfg.noise_sd > 0.0 ? cfg.noise_sd * std_normal(noise_rng) : 0.0;
    const auto others = static_cast<double>(std::popcount(v & ~std::uint64_t{1}));
    y_minus[i] = others + noise;
    y_plus[i] = others + 1.0 + noise;
    y[i] = (v & 1U) ? y_plus[i] : y_minus[i];
  }

  std::vector<std::string> names;
  for (int a = 1; a <= kCubeDim; ++a) names.push_back("f" + std::to_string(a));

  SimulatedPopulation pop{Dataset::infer(std::move(names), std::move(x), std::move(y)),
                          "f1",
                          std::vector<int>(static_cast<std::size_t>(n), 0),
                          {"cube"},
                          {},
                          Vector::Ones(n),
                          std::move(y_plus),
                          std::move(y_minus),
                          Matrix::Ones(n, kCubeDim)};
  return pop;
}

inline SimulatedPopulation simulate(const DgpConfig& cfg) {
  switch (cfg.kind) {
    case DgpKind::basic: return simulate_basic(cfg);
    case DgpKind::heterogeneous: return simulate_heterogeneous(cfg);
    case DgpKind::endogenous: return simulate_endogenous(cfg);
    case DgpKind::factorial: return simulate_factorial(cfg);
  }
  throw usage_error("unknown dgp");
}

/// Mean true individual effect over the mask (everyone when empty).
inline double oracle_ate(const SimulatedPopulation& pop, const Mask& mask = {}) {
  double total = 0.0;
  Index count = 0;
  for (Index i = 0; i < pop.ite_true.size(); ++i) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
    total += pop.ite_true[i];
    ++count;
  }
  if (count == 0) throw data_error("oracle_ate: empty mask");
  return total / static_cast<double>(count);
}

struct BiasVariance {
  double heter = 0.0;
  double var = 0.0;
};

/// Per-pair heterogeneity bias and variance terms. theta is the angle
/// between the effect difference f_i - f_j and the position difference
/// x_i - x_j.
inline BiasVariance bias_variance(const Vector& f_i, const Vector& f_j, const Vector& x_i,
                                  const Vector& x_j, double y_ij, double eps) {
  if (f_i.size() != f_j.size() || x_i.size() != x_j.size() || f_i.size() != x_i.size()) {
    throw usage_error("bias_variance: vector lengths differ");
  }
  const Vector df = f_i - f_j;
  const Vector dx = x_i - x_j;
  const double dx2 = dx.squaredNorm();
  if (dx2 == 0.0) throw numeric_error("coincident positions");
  const double df2 = df.squaredNorm();
  double cos2 = 0.0;
  if (df2 > 0.0) {
    const double c = df.dot(dx);
    cos2 = c * c / (df2 * dx2);
  }
  return {0.25 * df2 * cos2 - y_ij, eps * eps / dx2};
}

}  // namespace sfe
