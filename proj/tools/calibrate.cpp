#include <cmath>
#include <cstdlib>
#include <iostream>
#include <string>

#include <nlohmann/json.hpp>

#include "sfe/benchmark.hpp"

// Homogeneous design, benchmark iteration budget: which ATE readout lands
// closer to the oracle on average.
int main(int argc, char** argv) {
  using namespace sfe;
  int reps = 10;
  bool check = false;
  for (int k = 1; k < argc; ++k) {
    const std::string a = argv[k];
    if (a == "--check") check = true;
    else if (a == "--reps" && k + 1 < argc) reps = std::atoi(argv[++k]);
  }
  BenchmarkConfig base;

  struct Rep {
    double oracle = 0, lin = 0, sq = 0;
  };
  const auto rows = parallel_replications<Rep>(reps, thread_budget(), [&](int rep) {
    DgpConfig dgp;
    dgp.seed = 900000 + static_cast<std::uint64_t>(rep);
    const auto pop = simulate_basic(dgp);
    const auto nd = unity_normalize(pop.dataset);
    FitConfig fc = base.sfe_fit;
    fc.seed = dgp.seed;
    const auto es = fit(nd, fc);
    EffectQuery lin, sq;
    lin.mode = AteMode::linear;
    sq.mode = AteMode::sqrt;
    return Rep{oracle_ate(pop), ate(es, nd, "treat", lin).ate_raw, ate(es, nd, "treat", sq).ate_raw};
  });

  double oracle = 0, lin = 0, sq = 0;
  for (const auto& r : rows) {
    oracle += r.oracle / reps;
    lin += r.lin / reps;
    sq += r.sq / reps;
  }
  const AteMode chosen = std::abs(lin - oracle) <= std::abs(sq - oracle) ? AteMode::linear : AteMode::sqrt;
  nlohmann::json out{{"replications", reps},
                     {"iterations", base.sfe_fit.iterations},
                     {"oracle_mean", oracle},
                     {"linear_mean", lin},
                     {"sqrt_mean", sq},
                     {"calibrated_mode", to_string(chosen)},
                     {"default_mode", to_string(kDefaultAteMode)}};
  std::cout << out.dump(2) << '\n';
  if (check && chosen != kDefaultAteMode) {
    std::cerr << "default ATE mode does not match calibration\n";
    return 1;
  }
  return 0;
}
