#include <cmath>

#include <gtest/gtest.h>

#include "sfe/effects.hpp"
#include "sfe/optimizer.hpp"
#include "sfe/simulation.hpp"
#include "test_helpers.hpp"

namespace sfe {
namespace {

NormalizedData fitted_pair() {
  Matrix x(2, 1);
  x << 1, 0;
  Vector y(2);
  y << 1, 0;
  return unity_normalize(Dataset::infer({"t"}, x, y));
}

TEST(Optimizer, PerfectPairTreatedMemberIsStationary) {
  const auto nd = fitted_pair();
  ASSERT_EQ(nd.xn(0, 0), 1.0);
  ASSERT_EQ(nd.xn(1, 0), -1.0);
  EXPECT_EQ(objective_gamma(0, nd.xn, nd.yn), 0.0);
  EXPECT_EQ(grad_gamma(0, nd.xn, nd.yn).norm(), 0.0);
  for (double eta : {0.025, 0.5}) {
    FitConfig cfg;
    cfg.eta = eta;
    cfg.iterations = 1;
    const auto es = fit(nd, cfg);
    EXPECT_EQ(es.positions(0, 0), 1.0);
    EXPECT_EQ(es.objective_trace.front(), total_objective(nd.xn, nd.yn));
  }
}

TEST(Optimizer, IterationContract) {
  const auto nd = testing::random_normalized(1, 12, 3);
  FitConfig cfg;
  cfg.iterations = 0;
  EXPECT_THROW(fit(nd, cfg), Error);
  cfg.iterations = 1;
  EXPECT_EQ(fit(nd, cfg).objective_trace.size(), 1u);
  cfg.iterations = 7;
  EXPECT_EQ(fit(nd, cfg).iterations_run(), 7);
}

TEST(Optimizer, ConfigValidation) {
  const auto nd = testing::random_normalized(1, 12, 3);
  FitConfig cfg;
  cfg.iterations = 5;
  cfg.eta = 0.0;
  EXPECT_THROW(fit(nd, cfg), Error);
  cfg.eta = 0.025;
  cfg.batch_size = 13;
  EXPECT_THROW(fit(nd, cfg), Error);
}

TEST(Optimizer, DeterministicBitExact) {
  const auto nd = testing::random_normalized(2, 40, 4);
  FitConfig cfg;
  cfg.iterations = 300;
  cfg.batch_size = 8;
  cfg.seed = 99;
  const auto a = fit(nd, cfg);
  const auto b = fit(nd, cfg);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.objective_trace, b.objective_trace);
  cfg.seed = 100;
  EXPECT_NE(fit(nd, cfg).positions, a.positions);
}

TEST(Optimizer, ColumnEquivarianceBitExact) {
  const auto nd = testing::random_normalized(3, 30, 5);
  const std::vector<Index> perm{3, 1, 4, 0, 2};
  NormalizedData np = nd;
  for (Index k = 0; k < 5; ++k) {
    np.xn.col(k) = nd.xn.col(perm[k]);
    np.x_min[k] = nd.x_min[perm[k]];
    np.x_max[k] = nd.x_max[perm[k]];
    np.column_names[static_cast<std::size_t>(k)] = nd.column_names[static_cast<std::size_t>(perm[k])];
  }
  for (std::int64_t batch : {0, 7}) {
    FitConfig cfg;
    cfg.iterations = 200;
    cfg.batch_size = batch;
    cfg.seed = 5;
    const auto a = fit(nd, cfg);
    const auto b = fit(np, cfg);
    for (Index k = 0; k < 5; ++k) EXPECT_EQ(b.positions.col(k), a.positions.col(perm[k]));
    EXPECT_EQ(a.objective_trace, b.objective_trace);
  }
}

TEST(Optimizer, FastModeCloseToDeterministic) {
  const auto nd = testing::random_normalized(4, 30, 4);
  FitConfig cfg;
  cfg.iterations = 200;
  const auto a = fit(nd, cfg);
  cfg.deterministic = false;
  const auto b = fit(nd, cfg);
  EXPECT_NEAR(a.objective_trace.back(), b.objective_trace.back(),
              1e-10 * std::max(1.0, a.objective_trace.back()));
}

TEST(Optimizer, HomogeneousDefaultsDecreaseObjective) {
  DgpConfig dgp;
  dgp.seed = 1;
  const auto pop = simulate_basic(dgp);
  const auto nd = unity_normalize(pop.dataset);
  const auto es = fit(nd, FitConfig{});
  EXPECT_EQ(es.config.eta, 0.025);
  EXPECT_EQ(es.iterations_run(), 10000);
  EXPECT_LT(total_objective(es.positions, nd.yn), total_objective(nd.xn, nd.yn));
  EXPECT_TRUE(es.positions.allFinite());
}

TEST(Optimizer, SeedSensitivityWithinTolerance) {
  DgpConfig dgp;
  dgp.seed = 2;
  const auto pop = simulate_basic(dgp);
  const auto nd = unity_normalize(pop.dataset);
  std::vector<double> estimates;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    FitConfig cfg;
    cfg.iterations = 200;
    cfg.batch_size = 100;
    cfg.seed = seed;
    estimates.push_back(ate(fit(nd, cfg), nd, "treat").ate_raw);
  }
  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= 10.0;
  double var = 0.0;
  for (double e : estimates) var += (e - mean) * (e - mean);
  EXPECT_LT(std::sqrt(var / 9.0), 0.15);
}

TEST(Optimizer, DivergenceRaises) {
  const auto nd = testing::random_normalized(6, 20, 3);
  FitConfig cfg;
  cfg.eta = 1e7;
  cfg.iterations = 50;
  try {
    fit(nd, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged at iteration"), std::string::npos);
    EXPECT_EQ(static_cast<std::int64_t>(e.trace().size()), e.iteration());
  }
}

TEST(Optimizer, EarlyStop) {
  const auto nd = testing::random_normalized(7, 20, 3);
  FitConfig cfg;
  cfg.iterations = 5000;
  cfg.tolerance = 0.5;
  const auto es = fit(nd, cfg);
  EXPECT_LT(es.iterations_run(), 5000);
  EXPECT_EQ(es.iterations_run() % FitConfig::kStopWindow, 0);
}

TEST(Optimizer, WindowRule) {
  std::vector<double> trace(200, 1.0);
  EXPECT_TRUE(detail::window_converged(trace, 1e-12));
  trace[150] = 2.0;
  EXPECT_FALSE(detail::window_converged(trace, 1e-6));
  EXPECT_FALSE(detail::window_converged(std::vector<double>(150, 1.0), 1.0));
}

}  // namespace
}  // namespace sfe
