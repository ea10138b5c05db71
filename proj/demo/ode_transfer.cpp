// Pretrains the ODE1 body once, then solves a few nonlinear instances
// u'' + u' + u + ε cos(u) = f by the one-shot series and compares each
// against an RK45 reference.

#include <cstdio>

#include "chebpinn/chebpinn.hpp"

using namespace chebpinn;

int main() {
  RunConfig cfg = RunConfig::preset(Family::Ode1);
  std::printf("pretraining %zu heads for %zu iterations\n", cfg.heads, cfg.iterations);
  const TrainResult tr = train_bundle(cfg.bundle(), cfg.body_config(), cfg.train_config());
  const FeatureMap& fm = tr.feature_map;
  std::printf("final loss %.4g after %.1f s\n\n", tr.log.final_loss, tr.log.seconds);

  const OneShotSystem sys = assemble_system(fm, fm.op, fm.weights);
  const auto suite = ode_test_suite(OdeKind::Ode1, cfg.ode, 5, cfg.online.epsilon, cfg.test_seed);
  std::printf("%4s %8s %8s %8s %8s %12s %12s %10s\n", "id", "beta", "omega", "u0", "v0", "residual", "sup_gap",
              "online_ms");
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const OdeBenchmark& b = suite[i];
    const TimedSolve ts = timed_online(sys, fm, ode_problem(b, cfg.online));
    const double res = ode_residual_mse(fm, ts.solution, b).mse;
    const double gap = ode_sup_gap(fm, ts.solution, rk45_reference(b), b.t_end);
    std::printf("%4zu %8.3f %8.3f %8.3f %8.3f %12.3e %12.3e %10.3f\n", i, b.beta, b.omega, b.u0, b.v0, res, gap,
                1e3 * ts.seconds);
  }
}
