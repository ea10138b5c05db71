// Pretrains the reaction-diffusion body, then solves the manufactured
// instance A = 2, k = 2π, b = 0.4 for several ε and prints a coarse slice
// of the reconstruction next to the truth.

#include <cstdio>
#include <numbers>

#include "chebpinn/chebpinn.hpp"

using namespace chebpinn;

int main() {
  RunConfig cfg = RunConfig::preset(Family::Pde1);
  std::printf("pretraining %zu heads for %zu iterations\n", cfg.heads, cfg.iterations);
  const TrainResult tr = train_bundle(cfg.bundle(), cfg.body_config(), cfg.train_config());
  const FeatureMap& fm = tr.feature_map;
  std::printf("final loss %.4g after %.1f s\n\n", tr.log.final_loss, tr.log.seconds);

  const OneShotSystem sys = assemble_system(fm, fm.op, fm.weights);
  PdeBenchmark b{cfg.diffusion, cfg.reaction_delta, 2.0, 2.0 * std::numbers::pi, 0.4, cfg.online.epsilon};
  for (double eps : {0.1, 0.5, 0.8}) {
    b.epsilon = eps;
    OnlineSettings s = cfg.online;
    s.epsilon = eps;
    const TimedSolve ts = timed_online(sys, fm, pde_problem(b, s));
    std::printf("eps %.1f: grid MSE %.3e, online %.2f ms\n", eps, pde_solution_mse(fm, ts.solution, b),
                1e3 * ts.seconds);
  }

  b.epsilon = cfg.online.epsilon;
  const SeriesSolution sol = online_solve(sys, fm, pde_problem(b, cfg.online));
  const ManufacturedField m = manufactured_pde(b, 5);
  const Grid u = reconstruct(sol, fm, m.points);
  std::printf("\n%6s %6s %10s %10s\n", "x", "t", "u", "truth");
  for (std::size_t i = 0; i < u.size(); ++i)
    std::printf("%6.2f %6.2f %10.5f %10.5f\n", m.points(i, 0), m.points(i, 1), u[i], m.u[i]);
}
