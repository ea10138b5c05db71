#pragma once

// Benchmark problems (two forced nonlinear oscillators and a reaction–diffusion
// equation), reference solutions, error metrics, the head-retraining baseline
// and the ablation sweeps.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "chebpinn/chebyshev.hpp"
#include "chebpinn/dense.hpp"
#include "chebpinn/error.hpp"
#include "chebpinn/featurenet.hpp"
#include "chebpinn/oneshot.hpp"
#include "chebpinn/pretrain.hpp"
#include "chebpinn/rk45.hpp"

namespace chebpinn {

// ---------------------------------------------------------------------------
// Online settings and nonlinearities

struct OnlineSettings {
  double epsilon = 0.5;
  std::size_t order = 12;
  std::size_t degree = 20;
  std::size_t quad_size = 1000;
  RangeMap range{-4.0, 4.0};

  static OnlineSettings ode1() { return {0.5, 12, 20, 1000, RangeMap(-4.0, 4.0)}; }
  static OnlineSettings ode2() { return {0.1, 12, 20, 1000, RangeMap(0.5, 6.0)}; }
  // Upper bound covers max A/4 + b = 1.3 of the PDE test truths.
  static OnlineSettings pde1() { return {0.5, 20, 30, 1000, RangeMap(-0.9, 1.3)}; }

  friend bool operator==(const OnlineSettings&, const OnlineSettings&) = default;
};

inline Nonlinearity cosine_nonlinearity() {
  return {"cos", [](double u) { return std::cos(u); }, [](double u) { return -std::sin(u); }};
}

inline Nonlinearity inverse_square_nonlinearity() {
  return {"inverse_square", [](double u) { return 1.0 / (u * u); }, [](double u) { return -2.0 / (u * u * u); }};
}

/// The reaction u/(u+1) − δu enters the equation with a positive sign on the
/// right-hand side, so in the form D u + ε N(u) = f it appears negated.
inline Nonlinearity reaction_nonlinearity(double delta) {
  return {"neg_saturating_reaction", [delta](double u) { return delta * u - u / (u + 1.0); },
          [delta](double u) { return delta - 1.0 / ((u + 1.0) * (u + 1.0)); }};
}

// ---------------------------------------------------------------------------
// ODE benchmarks

enum class OdeKind { Ode1, Ode2 };

inline std::string to_string(OdeKind k) { return k == OdeKind::Ode1 ? "ode1" : "ode2"; }

/// u'' + δu' + αu + ε N(u) = f(t) on [0, t_end] with N = cos (ode1, f = β cos ωt)
/// or N = u⁻² (ode2, f = γ − e^{−t}).
struct OdeBenchmark {
  OdeKind family = OdeKind::Ode1;
  double delta = 1.0;
  double alpha = 1.0;
  double beta = 0.0;
  double omega = 1.0;
  double gamma = 0.0;
  double u0 = 0.0;
  double v0 = 0.0;
  double epsilon = 0.0;
  double t_end = 5.0;

  double forcing(double t) const {
    return family == OdeKind::Ode1 ? beta * std::cos(omega * t) : gamma - std::exp(-t);
  }

  Nonlinearity nonlinearity() const {
    return family == OdeKind::Ode1 ? cosine_nonlinearity() : inverse_square_nonlinearity();
  }

  /// First-order right-hand side for y = (u, v).
  std::array<double, 2> rhs(double t, const std::array<double, 2>& y) const {
    const double n = family == OdeKind::Ode1 ? std::cos(y[0]) : 1.0 / (y[0] * y[0]);
    return {y[1], forcing(t) - delta * y[1] - alpha * y[0] - epsilon * n};
  }
};

inline DenseTrajectory<2> rk45_reference(const OdeBenchmark& b, double rtol = 1e-9, double atol = 1e-11) {
  const std::array<double, 5> p{b.delta, b.alpha, b.u0, b.v0, b.epsilon};
  for (double x : p) {
    if (!std::isfinite(x)) fail(ErrorCode::InvalidArgument, "benchmark parameters must be finite");
  }
  if (b.family == OdeKind::Ode2 && !(b.u0 > 0.0)) fail(ErrorCode::InvalidArgument, "ode2 needs u0 > 0");
  Rk45Options opt;
  opt.rtol = rtol;
  opt.atol = atol;
  return rk45_integrate<2>([&b](double t, const std::array<double, 2>& y) { return b.rhs(t, y); }, 0.0, b.t_end,
                           {b.u0, b.v0}, opt);
}

inline ProblemInstance ode_problem(const OdeBenchmark& b, const OnlineSettings& s) {
  ProblemInstance inst;
  inst.forcing = [b](std::span<const double> x) { return b.forcing(x[0]); };
  inst.constraint = [u0 = b.u0, v0 = b.v0](std::span<const double>, std::size_t comp) { return comp == 0 ? u0 : v0; };
  inst.epsilon = s.epsilon;
  inst.order = s.order;
  inst.surrogate = {b.nonlinearity(), s.range, s.degree, s.quad_size};
  return inst;
}

/// Test instances from the pretraining family ranges. ode2 draws are
/// resampled until the reference trajectory stays inside [u_lo, u_hi].
inline std::vector<OdeBenchmark> ode_test_suite(OdeKind kind, const OdeFamily& fam, std::size_t n, double epsilon,
                                                std::uint64_t seed, double u_lo = 0.5, double u_hi = 6.0) {
  std::mt19937_64 rng(seed);
  auto draw = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::vector<OdeBenchmark> out;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > 1000 * (n + 1)) fail(ErrorCode::InvalidArgument, "rejection sampling could not fill the suite");
    OdeBenchmark b;
    b.family = kind;
    b.delta = fam.delta;
    b.alpha = fam.alpha;
    b.epsilon = epsilon;
    b.t_end = fam.t_end;
    if (kind == OdeKind::Ode1) {
      b.beta = draw(fam.beta_lo, fam.beta_hi);
      b.omega = draw(fam.omega_lo, fam.omega_hi);
    } else {
      b.gamma = draw(fam.c_lo, fam.c_hi);
    }
    b.u0 = draw(fam.u0_lo, fam.u0_hi);
    b.v0 = draw(fam.v0_lo, fam.v0_hi);
    if (kind == OdeKind::Ode2) {
      try {
        const auto traj = rk45_reference(b);
        bool inside = true;
        for (double t : linspace(0.0, b.t_end, 501)) {
          const double u = traj(t)[0];
          inside = inside && u >= u_lo && u <= u_hi;
        }
        if (!inside) continue;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::StepFailure) throw;
        continue;
      }
    }
    out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// State evaluation through the frozen body

/// Values and first input derivatives of every state component for one head.
struct StateBatch {
  std::size_t n = 0, q = 0, d = 0;
  std::vector<double> values;  // n × q
  std::vector<double> derivs;  // n × d × q

  double value(std::size_t i, std::size_t comp) const { return values[i * q + comp]; }
  double deriv(std::size_t i, std::size_t coord, std::size_t comp) const { return derivs[(i * d + coord) * q + comp]; }
};

inline StateBatch state_from_batch(const FeatureBatch& fb, std::span<const double> w) {
  StateBatch s{fb.n, fb.q, fb.d, std::vector<double>(fb.n * fb.q), std::vector<double>(fb.n * fb.d * fb.q)};
  for (std::size_t i = 0; i < fb.n; ++i) {
    for (std::size_t comp = 0; comp < fb.q; ++comp) {
      double acc = 0.0;
      for (std::size_t c = 0; c < fb.h; ++c) acc += fb.value(i, comp, c) * w[c];
      s.values[i * fb.q + comp] = acc;
      for (std::size_t k = 0; k < fb.d; ++k) {
        double dk = 0.0;
        for (std::size_t c = 0; c < fb.h; ++c) dk += fb.deriv(i, k, comp, c) * w[c];
        s.derivs[(i * fb.d + k) * fb.q + comp] = dk;
      }
    }
  }
  return s;
}

/// Σ_j ε^j W_j.
inline HeadWeights effective_head(const SeriesSolution& sol) {
  HeadWeights w(sol.heads.front().size(), 0.0);
  double pow = 1.0;
  for (const auto& wj : sol.heads) {
    for (std::size_t c = 0; c < w.size(); ++c) w[c] += pow * wj[c];
    pow *= sol.epsilon;
  }
  return w;
}

// ---------------------------------------------------------------------------
// ODE metrics

/// Primary residual v' + δv + αu + εN(u) − f with the exact nonlinearity.
inline double ode_primary_residual(const OdeBenchmark& b, double t, double u, double v, double dv) {
  const double n = b.family == OdeKind::Ode1 ? std::cos(u) : 1.0 / (u * u);
  return dv + b.delta * v + b.alpha * u + b.epsilon * n - b.forcing(t);
}

struct OdeResidual {
  double mse = 0.0;
  double max_aux = 0.0;  // max |u' − v|
};

inline OdeResidual ode_residual_for_head(const FeatureMap& fm, std::span<const double> w, const OdeBenchmark& b,
                                         std::size_t n_points = 100) {
  const auto ts = linspace(0.0, b.t_end, n_points);
  const FeatureBatch fb = eval_feature_batch(fm.body, Matrix(n_points, 1, ts));
  const StateBatch s = state_from_batch(fb, w);
  OdeResidual r;
  for (std::size_t i = 0; i < n_points; ++i) {
    const double res = ode_primary_residual(b, ts[i], s.value(i, 0), s.value(i, 1), s.deriv(i, 0, 1));
    r.mse += res * res;
    r.max_aux = std::max(r.max_aux, std::abs(s.deriv(i, 0, 0) - s.value(i, 1)));
  }
  r.mse /= static_cast<double>(n_points);
  return r;
}

inline OdeResidual ode_residual_mse(const FeatureMap& fm, const SeriesSolution& sol, const OdeBenchmark& b) {
  return ode_residual_for_head(fm, effective_head(sol), b);
}

/// sup over the evaluation grid of |u_TL − u_RK45|.
inline double ode_sup_gap(const FeatureMap& fm, const SeriesSolution& sol, const DenseTrajectory<2>& ref,
                          double t_end, std::size_t n_points = 100) {
  const auto ts = linspace(0.0, t_end, n_points);
  const Grid u = reconstruct(sol, fm, Matrix(n_points, 1, ts));
  double gap = 0.0;
  for (std::size_t i = 0; i < n_points; ++i) gap = std::max(gap, std::abs(u[i] - ref(ts[i])[0]));
  return gap;
}

// ---------------------------------------------------------------------------
// PDE benchmark

/// u_t = D u_xx + ε(u/(u+1) − δu) + f on [0,1]² with manufactured truth
/// u = A x(x−1) sin(kt) + b.
struct PdeBenchmark {
  double diffusion = 0.1;
  double delta = 0.5;
  double amplitude = 1.0;
  double wavenumber = std::numbers::pi;
  double offset = 0.4;
  double epsilon = 0.5;

  double u_true(double x, double t) const { return amplitude * x * (x - 1.0) * std::sin(wavenumber * t) + offset; }

  double forcing(double x, double t) const {
    const double u = u_true(x, t);
    const double ut = amplitude * x * (x - 1.0) * wavenumber * std::cos(wavenumber * t);
    const double uxx = 2.0 * amplitude * std::sin(wavenumber * t);
    return ut - diffusion * uxx - epsilon * (u / (u + 1.0) - delta * u);
  }
};

struct ManufacturedField {
  std::vector<double> x, t;  // grid axes
  Matrix points;             // x-major (x, t) pairs
  Grid u;
  Grid f;
};

inline ManufacturedField manufactured_pde(const PdeBenchmark& b, std::size_t grid = 61) {
  ManufacturedField m;
  m.x = linspace(0.0, 1.0, grid);
  m.t = linspace(0.0, 1.0, grid);
  std::vector<double> pts;
  pts.reserve(grid * grid * 2);
  for (double x : m.x) {
    for (double t : m.t) {
      const double u = b.u_true(x, t);
      if (std::abs(u + 1.0) < 1e-12) {
        fail(ErrorCode::PoleInReaction, "manufactured field reaches u = -1 at (" + std::to_string(x) + ", " +
                                            std::to_string(t) + ")");
      }
      pts.push_back(x);
      pts.push_back(t);
      m.u.push_back(u);
      m.f.push_back(b.forcing(x, t));
    }
  }
  m.points = Matrix(grid * grid, 2, std::move(pts));
  return m;
}

inline ProblemInstance pde_problem(const PdeBenchmark& b, const OnlineSettings& s) {
  ProblemInstance inst;
  inst.forcing = [b](std::span<const double> p) { return b.forcing(p[0], p[1]); };
  inst.constraint = [b](std::span<const double> p, std::size_t) { return b.u_true(p[0], p[1]); };
  inst.epsilon = s.epsilon;
  inst.order = s.order;
  inst.surrogate = {reaction_nonlinearity(b.delta), s.range, s.degree, s.quad_size};
  return inst;
}

/// The 2 × 4 × 4 grid A ∈ {1,2}, k ∈ {π,…,4π}, b ∈ {0.2,…,0.8}.
inline std::vector<PdeBenchmark> pde_test_suite(double diffusion, double delta, double epsilon) {
  std::vector<PdeBenchmark> out;
  for (double a : {1.0, 2.0})
    for (int k = 1; k <= 4; ++k)
      for (double off : {0.2, 0.4, 0.6, 0.8})
        out.push_back({diffusion, delta, a, k * std::numbers::pi, off, epsilon});
  return out;
}

inline double pde_solution_mse(const FeatureMap& fm, const SeriesSolution& sol, const PdeBenchmark& b,
                               std::size_t grid = 61) {
  const ManufacturedField m = manufactured_pde(b, grid);
  const Grid u = reconstruct(sol, fm, m.points);
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += (u[i] - m.u[i]) * (u[i] - m.u[i]);
  return acc / static_cast<double>(u.size());
}

// ---------------------------------------------------------------------------
// Timing

struct TimedSolve {
  SeriesSolution solution;
  double seconds = 0.0;
};

/// Wall time of surrogate construction plus all order solves. The system's
/// assembly and factorization are outside the timed region.
inline TimedSolve timed_online(const OneShotSystem& sys, const FeatureMap& fm, const ProblemInstance& inst) {
  const auto t0 = std::chrono::steady_clock::now();
  SeriesSolution sol = online_solve(sys, fm, inst);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(sol), secs};
}

// ---------------------------------------------------------------------------
// Gradient-descent head baseline

enum class HeadInit { Zero, Random };

struct BaselineConfig {
  double lr = 1e-2;
  std::size_t step_size = 100;
  double gamma = 0.92;
  double tau = 5e-4;
  std::size_t cap = 20000;
  std::optional<double> clip;
  HeadInit init = HeadInit::Zero;
  std::size_t interior_points = 100;
  std::size_t boundary_points = 0;  // 0: use the feature map's constraint rows as is
  LossWeights weights{0.5, 1.5, 0.0};
  std::uint64_t seed = 0;

  static BaselineConfig ode1() { return {}; }
  static BaselineConfig ode2() {
    BaselineConfig c;
    c.tau = 5e-3;
    c.clip = 1.0;
    c.init = HeadInit::Random;
    return c;
  }
  static BaselineConfig pde1() {
    BaselineConfig c;
    c.lr = 3e-3;
    c.step_size = 200;
    c.gamma = 0.96;
    c.tau = 1e-2;
    c.cap = 4000;
    c.clip = 1.0;
    c.interior_points = 60;
    c.boundary_points = 200;
    c.weights = {1.0, 1.0, 0.0};
    return c;
  }
};

struct BaselineResult {
  HeadWeights head;
  std::size_t iterations = 0;
  double seconds = 0.0;
  bool reached = false;
  double final_residual = 0.0;
};

/// Fits a single head to the nonlinear instance by Adam on freshly sampled
/// points each iteration. Stops when the mean-squared primary residual on the
/// current sample drops below τ (checked before the update) or at the cap.
inline BaselineResult run_baseline(const FeatureMap& fm, const ProblemInstance& inst, const BaselineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t h = fm.body.config.feature_dim;
  const std::size_t q = fm.op.state_dim();
  const std::size_t d = fm.op.input_dim();
  const auto rows = fm.op.rows();
  const auto& nl = inst.surrogate.nonlinearity;
  const auto& lo = fm.body.config.domain_lower;
  const auto& hi = fm.body.config.domain_upper;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  HeadWeights w(h, 0.0);
  if (cfg.init == HeadInit::Random) w = init_heads(1, h, cfg.seed ^ 0x5DEECE66DULL).front();
  AdamState state;
  const AdamConfig adam{cfg.lr, cfg.step_size, cfg.gamma};

  // Constraint rows: fixed from the feature map, or resampled on the
  // boundary segments of the unit square for the diffusion operator.
  const bool resample_boundary = cfg.boundary_points > 0 && fm.op.kind == OperatorKind::Diffusion;
  std::vector<ConstraintRow> cons = fm.constraints;

  BaselineResult res;
  Matrix pts(cfg.interior_points, d);
  Vector grad(h);
  std::vector<double> row(h);
  for (std::size_t it = 0;; ++it) {
    for (std::size_t i = 0; i < cfg.interior_points; ++i)
      for (std::size_t k = 0; k < d; ++k) pts(i, k) = lo[k] + (hi[k] - lo[k]) * unit(rng);
    if (resample_boundary) {
      cons.assign(cfg.boundary_points, ConstraintRow{{0.0, 0.0}, 0});
      for (auto& c : cons) {
        const double r = unit(rng);
        switch (std::min<int>(2, static_cast<int>(3.0 * unit(rng)))) {
          case 0: c.point = {r, 0.0}; break;
          case 1: c.point = {0.0, r}; break;
          default: c.point = {1.0, r}; break;
        }
      }
    }
    const FeatureBatch fb = eval_feature_batch(fm.body, stack_points(pts, cons));
    const std::size_t nr = cfg.interior_points;
    const std::size_t nb = cons.size();
    std::fill(grad.begin(), grad.end(), 0.0);
    double primary = 0.0;
    const double cr = cfg.weights.pde / static_cast<double>(nr);
    const double cb = cfg.weights.bc / static_cast<double>(nb);
    for (std::size_t p = 0; p < nr; ++p) {
      double u = 0.0;
      for (std::size_t c = 0; c < h; ++c) u += fb.value(p, 0, c) * w[c];
      for (std::size_t r = 0; r < q; ++r) {
        operator_row(fb, p, rows[r], row);
        double val = 0.0;
        for (std::size_t c = 0; c < h; ++c) val += row[c] * w[c];
        if (r == 0) {
          val += inst.epsilon * nl.value(u) - inst.forcing(pts.row(p));
          const double dn = inst.epsilon * nl.derivative(u);
          for (std::size_t c = 0; c < h; ++c) row[c] += dn * fb.value(p, 0, c);
          primary += val * val;
        }
        for (std::size_t c = 0; c < h; ++c) grad[c] += 2.0 * cr * val * row[c];
      }
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t comp = cons[b].component;
      double val = -inst.constraint(cons[b].point, comp);
      for (std::size_t c = 0; c < h; ++c) val += fb.value(nr + b, comp, c) * w[c];
      for (std::size_t c = 0; c < h; ++c) grad[c] += 2.0 * cb * val * fb.value(nr + b, comp, c);
    }
    primary /= static_cast<double>(nr);
    res.iterations = it + 1;
    res.final_residual = primary;
    if (primary < cfg.tau) {
      res.reached = true;
      break;
    }
    if (it + 1 >= cfg.cap) break;
    if (cfg.clip) {
      std::vector<std::span<double>> blocks{grad};
      clip_grad_norm(blocks, *cfg.clip);
    }
    adam_steplr_step(w, state, grad, it, adam);
  }
  res.head = std::move(w);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// ---------------------------------------------------------------------------
// Ablations

enum class AblationAxis { Epsilon, Order, Degree };

inline std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::Epsilon: return "eps";
    case AblationAxis::Order: return "p";
    default: return "m";
  }
}

struct AblationRow {
  double value = 0.0;
  double mse = 0.0;
};

inline std::vector<double> default_ablation_values(AblationAxis axis, bool pde) {
  std::vector<double> v;
  switch (axis) {
    case AblationAxis::Epsilon: return {0.05, 0.1, 0.2, 0.5, 0.8};
    case AblationAxis::Order:
      for (int p = 1; p <= 20; ++p) v.push_back(p);
      return v;
    default:
      if (pde) {
        for (int m = 2; m <= 40; m += 2) v.push_back(m);
      } else {
        for (int m = 1; m <= 20; ++m) v.push_back(m);
      }
      return v;
  }
}

/// Sweeps one online setting with the others held at `defaults`. `metric`
/// returns the benchmark's error for a given setting.
inline std::vector<AblationRow> run_ablation(AblationAxis axis, std::span<const double> values,
                                             const OnlineSettings& defaults,
                                             const std::function<double(const OnlineSettings&)>& metric) {
  if (values.empty()) fail(ErrorCode::InvalidArgument, "ablation needs at least one value");
  std::vector<AblationRow> rows;
  for (double v : values) {
    OnlineSettings s = defaults;
    switch (axis) {
      case AblationAxis::Epsilon: s.epsilon = v; break;
      case AblationAxis::Order: s.order = static_cast<std::size_t>(std::llround(v)); break;
      case AblationAxis::Degree: s.degree = static_cast<std::size_t>(std::llround(v)); break;
    }
    rows.push_back({v, metric(s)});
  }
  return rows;
}

inline std::function<double(const OnlineSettings&)> ode_ablation_metric(const OneShotSystem& sys, const FeatureMap& fm,
                                                                        const OdeBenchmark& bench) {
  return [&sys, &fm, bench](const OnlineSettings& s) {
    OdeBenchmark b = bench;
    b.epsilon = s.epsilon;
    return ode_residual_mse(fm, online_solve(sys, fm, ode_problem(b, s)), b).mse;
  };
}

inline std::function<double(const OnlineSettings&)> pde_ablation_metric(const OneShotSystem& sys, const FeatureMap& fm,
                                                                        const PdeBenchmark& bench) {
  return [&sys, &fm, bench](const OnlineSettings& s) {
    PdeBenchmark b = bench;
    b.epsilon = s.epsilon;
    return pde_solution_mse(fm, online_solve(sys, fm, pde_problem(b, s)), b);
  };
}

inline void write_ablation_csv(std::ostream& out, AblationAxis axis, std::span<const AblationRow> rows) {
  out << to_string(axis) << ",mse\n" << std::setprecision(10);
  for (const auto& r : rows) out << r.value << ',' << r.mse << '\n';
}

// ---------------------------------------------------------------------------
// Suites and result files

struct ResultRow {
  std::string benchmark;
  std::size_t instance_id = 0;
  OnlineSettings settings;
  double mse = 0.0;
  double online_seconds = 0.0;
  std::optional<double> baseline_seconds;
  std::optional<bool> baseline_converged;
  std::size_t range_warnings = 0;
  double sup_gap = 0.0;  // ODE only, not part of the CSV
};

struct SuiteOptions {
  OnlineSettings settings;
  std::optional<BaselineConfig> baseline;
  std::size_t jobs = 1;
};

/// Runs f(i) for i in [0, n) on up to `jobs` threads.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex mu;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// One-shot solves are timed sequentially; metrics (and the baseline, whose
/// timing is its own loop) follow. The baseline always runs sequentially.
inline std::vector<ResultRow> run_ode_suite(const OneShotSystem& sys, const FeatureMap& fm,
                                            std::span<const OdeBenchmark> suite, const SuiteOptions& opt,
                                            std::vector<SeriesSolution>* solutions = nullptr) {
  std::vector<ResultRow> rows(suite.size());
  std::vector<SeriesSolution> sols(suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    OdeBenchmark b = suite[i];
    b.epsilon = opt.settings.epsilon;
    TimedSolve ts = timed_online(sys, fm, ode_problem(b, opt.settings));
    rows[i].benchmark = to_string(b.family);
    rows[i].instance_id = i;
    rows[i].settings = opt.settings;
    rows[i].online_seconds = ts.seconds;
    rows[i].range_warnings = ts.solution.diagnostics.range_warnings;
    sols[i] = std::move(ts.solution);
  }
  parallel_for(suite.size(), opt.jobs, [&](std::size_t i) {
    OdeBenchmark b = suite[i];
    b.epsilon = opt.settings.epsilon;
    rows[i].mse = ode_residual_mse(fm, sols[i], b).mse;
    rows[i].sup_gap = ode_sup_gap(fm, sols[i], rk45_reference(b), b.t_end);
  });
  if (opt.baseline) {
    for (std::size_t i = 0; i < suite.size(); ++i) {
      OdeBenchmark b = suite[i];
      b.epsilon = opt.settings.epsilon;
      BaselineConfig cfg = *opt.baseline;
      cfg.seed = opt.baseline->seed + i;
      const BaselineResult br = run_baseline(fm, ode_problem(b, opt.settings), cfg);
      rows[i].baseline_seconds = br.seconds;
      rows[i].baseline_converged = br.reached;
    }
  }
  if (solutions != nullptr) *solutions = std::move(sols);
  return rows;
}

inline std::vector<ResultRow> run_pde_suite(const OneShotSystem& sys, const FeatureMap& fm,
                                            std::span<const PdeBenchmark> suite, const SuiteOptions& opt,
                                            std::vector<SeriesSolution>* solutions = nullptr) {
  std::vector<ResultRow> rows(suite.size());
  std::vector<SeriesSolution> sols(suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    PdeBenchmark b = suite[i];
    b.epsilon = opt.settings.epsilon;
    TimedSolve ts = timed_online(sys, fm, pde_problem(b, opt.settings));
    rows[i].benchmark = "pde1";
    rows[i].instance_id = i;
    rows[i].settings = opt.settings;
    rows[i].online_seconds = ts.seconds;
    rows[i].range_warnings = ts.solution.diagnostics.range_warnings;
    sols[i] = std::move(ts.solution);
  }
  parallel_for(suite.size(), opt.jobs, [&](std::size_t i) {
    PdeBenchmark b = suite[i];
    b.epsilon = opt.settings.epsilon;
    rows[i].mse = pde_solution_mse(fm, sols[i], b);
  });
  if (opt.baseline) {
    for (std::size_t i = 0; i < suite.size(); ++i) {
      PdeBenchmark b = suite[i];
      b.epsilon = opt.settings.epsilon;
      BaselineConfig cfg = *opt.baseline;
      cfg.seed = opt.baseline->seed + i;
      const BaselineResult br = run_baseline(fm, pde_problem(b, opt.settings), cfg);
      rows[i].baseline_seconds = br.seconds;
      rows[i].baseline_converged = br.reached;
    }
  }
  if (solutions != nullptr) *solutions = std::move(sols);
  return rows;
}

struct SuiteSummary {
  double mean_mse = 0.0;
  double mean_online_seconds = 0.0;
  std::optional<double> mean_baseline_seconds;  // over converged runs
  std::size_t baseline_converged = 0;
  std::size_t baseline_runs = 0;
};

inline SuiteSummary summarize(std::span<const ResultRow> rows) {
  SuiteSummary s;
  double bsum = 0.0;
  for (const auto& r : rows) {
    s.mean_mse += r.mse;
    s.mean_online_seconds += r.online_seconds;
    if (r.baseline_converged) {
      ++s.baseline_runs;
      if (*r.baseline_converged) {
        ++s.baseline_converged;
        bsum += *r.baseline_seconds;
      }
    }
  }
  if (!rows.empty()) {
    s.mean_mse /= static_cast<double>(rows.size());
    s.mean_online_seconds /= static_cast<double>(rows.size());
  }
  if (s.baseline_converged > 0) s.mean_baseline_seconds = bsum / static_cast<double>(s.baseline_converged);
  return s;
}

inline void write_results_csv(std::ostream& out, std::span<const ResultRow> rows, std::uint64_t seed) {
  out << "# rng=mt19937_64 seed=" << seed << '\n';
  out << "benchmark,instance_id,epsilon,p,m,M_quad,mse,online_seconds,baseline_seconds,baseline_converged,"
         "range_warnings\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.benchmark << ',' << r.instance_id << ',' << r.settings.epsilon << ',' << r.settings.order << ','
        << r.settings.degree << ',' << r.settings.quad_size << ',' << r.mse << ',' << r.online_seconds << ',';
    if (r.baseline_seconds) out << *r.baseline_seconds;
    out << ',';
    if (r.baseline_converged) out << (*r.baseline_converged ? 1 : 0);
    out << ',' << r.range_warnings << '\n';
  }
}

/// Overlay data: one row per (instance, t) with prediction and reference.
inline void write_ode_trajectories_csv(std::ostream& out, const FeatureMap& fm, std::span<const OdeBenchmark> suite,
                                       std::span<const SeriesSolution> sols, std::size_t n_points = 100) {
  out << "instance_id,t,u_tl,u_ref\n" << std::setprecision(12);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto ts = linspace(0.0, suite[i].t_end, n_points);
    const Grid u = reconstruct(sols[i], fm, Matrix(n_points, 1, ts));
    OdeBenchmark b = suite[i];
    b.epsilon = sols[i].epsilon;
    const auto ref = rk45_reference(b);
    for (std::size_t k = 0; k < n_points; ++k) out << i << ',' << ts[k] << ',' << u[k] << ',' << ref(ts[k])[0] << '\n';
  }
}

/// Mean signed discrepancy Δ(t) = mean_i (u_TL − u_ref).
inline void write_ode_discrepancy_csv(std::ostream& out, const FeatureMap& fm, std::span<const OdeBenchmark> suite,
                                      std::span<const SeriesSolution> sols, std::size_t n_points = 100) {
  if (suite.empty()) return;
  const auto ts = linspace(0.0, suite.front().t_end, n_points);
  std::vector<double> delta(n_points, 0.0);
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const Grid u = reconstruct(sols[i], fm, Matrix(n_points, 1, ts));
    OdeBenchmark b = suite[i];
    b.epsilon = sols[i].epsilon;
    const auto ref = rk45_reference(b);
    for (std::size_t k = 0; k < n_points; ++k) delta[k] += (u[k] - ref(ts[k])[0]) / static_cast<double>(suite.size());
  }
  out << "t,delta\n" << std::setprecision(12);
  for (std::size_t k = 0; k < n_points; ++k) out << ts[k] << ',' << delta[k] << '\n';
}

inline void write_pde_field_csv(std::ostream& out, const FeatureMap& fm, const SeriesSolution& sol,
                                const PdeBenchmark& b, std::size_t grid = 61) {
  const ManufacturedField m = manufactured_pde(b, grid);
  const Grid u = reconstruct(sol, fm, m.points);
  out << "x,t,u_tl,u_true,sq_err\n" << std::setprecision(12);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double e = u[i] - m.u[i];
    out << m.points(i, 0) << ',' << m.points(i, 1) << ',' << u[i] << ',' << m.u[i] << ',' << e * e << '\n';
  }
}

}  // namespace chebpinn
