#pragma once

// Offline stage: bundles of linear tasks that share one operator, and the
// full-batch Adam/StepLR loop that fits a shared body plus one head per task.
// Only the body and its point sets survive training.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chebpinn/dense.hpp"
#include "chebpinn/error.hpp"
#include "chebpinn/featurenet.hpp"
#include "chebpinn/operator.hpp"

namespace chebpinn {

using PointFn = std::function<double(std::span<const double>)>;

struct LinearTask {
  // Primary-equation forcing; auxiliary rows of the first-order system get 0.
  PointFn forcing;
  // Constraint value for a state component at a constraint point.
  std::function<double(std::span<const double>, std::size_t)> constraint;
  std::optional<PointFn> reference;
  std::vector<double> params;  // generating parameters, for logs
};

struct Bundle {
  LinearOperatorSpec op;
  std::vector<LinearTask> tasks;
  Matrix interior;
  std::vector<ConstraintRow> constraints;
  LossWeights weights;
  std::uint64_t seed = 0;
  std::vector<double> domain_lower;
  std::vector<double> domain_upper;
};

/// Operator coefficients and sampling ranges for the damped-oscillator
/// families. Ranges are implementation defaults, not published values.
struct OdeFamily {
  double delta = 1.0;
  double alpha = 1.0;
  double beta_lo = -2.0, beta_hi = 2.0;
  double omega_lo = 0.5, omega_hi = 3.0;
  double c_lo = -1.0, c_hi = 1.0;
  double u0_lo = -2.0, u0_hi = 2.0;
  double v0_lo = -2.0, v0_hi = 2.0;
  double t_end = 5.0;
  std::size_t n_interior = 50;

  static OdeFamily ode1() { return {}; }

  /// Positive-shifted forcing and initial values so trajectories stay in
  /// the inverse-square surrogate range.
  static OdeFamily ode2() {
    OdeFamily f;
    f.beta_lo = -1.0;
    f.beta_hi = 1.0;
    f.c_lo = 1.0;
    f.c_hi = 4.0;
    f.u0_lo = 1.0;
    f.u0_hi = 4.0;
    f.v0_lo = -1.0;
    f.v0_hi = 1.0;
    return f;
  }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  v.back() = hi;
  return v;
}

/// K forced damped-oscillator tasks: u'' + δu' + αu = β cos(ωt) + c with
/// u(0), u'(0) given. Parameters are drawn in a fixed order from mt19937_64.
inline Bundle make_ode_bundle(const OdeFamily& fam, std::size_t K, std::uint64_t seed) {
  if (K < 1) fail(ErrorCode::InvalidArgument, "bundle needs at least one head");
  Bundle b;
  b.op = LinearOperatorSpec::ode2nd(fam.delta, fam.alpha);
  b.seed = seed;
  b.weights = LossWeights{0.5, 1.5, 0.0};
  b.domain_lower = {0.0};
  b.domain_upper = {fam.t_end};
  b.interior = Matrix(fam.n_interior, 1, linspace(0.0, fam.t_end, fam.n_interior));
  b.constraints = {ConstraintRow{{0.0}, 0}, ConstraintRow{{0.0}, 1}};

  std::mt19937_64 rng(seed);
  auto draw = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  for (std::size_t k = 0; k < K; ++k) {
    const double beta = draw(fam.beta_lo, fam.beta_hi);
    const double omega = draw(fam.omega_lo, fam.omega_hi);
    const double c = draw(fam.c_lo, fam.c_hi);
    const double u0 = draw(fam.u0_lo, fam.u0_hi);
    const double v0 = draw(fam.v0_lo, fam.v0_hi);
    LinearTask t;
    t.forcing = [beta, omega, c](std::span<const double> s) { return beta * std::cos(omega * s[0]) + c; };
    t.constraint = [u0, v0](std::span<const double>, std::size_t comp) { return comp == 0 ? u0 : v0; };
    t.params = {beta, omega, c, u0, v0};
    b.tasks.push_back(std::move(t));
  }
  return b;
}

struct PdeBundleSettings {
  std::size_t grid = 50;             // interior grid is grid × grid
  std::size_t boundary_points = 100;  // per boundary segment
  double b_lo = 0.2;
  double b_hi = 0.8;
};

/// Manufactured diffusion tasks u = A sin(2πx) sin(kπt) + b with
/// A ∈ {0.5, −0.5} and K/2 values of k evenly spaced in [1, 2]; b runs over
/// [b_lo, b_hi] with the k index. Forcing is u_t − D u_xx.
inline Bundle make_pde_bundle(double diffusion, std::size_t K, const PdeBundleSettings& set = {}) {
  if (K < 2 || K % 2 != 0) fail(ErrorCode::InvalidArgument, "PDE bundle needs an even head count");
  Bundle b;
  b.op = LinearOperatorSpec::diffusion_op(diffusion);
  b.weights = LossWeights{1.0, 1.0, 1.0};
  b.domain_lower = {0.0, 0.0};
  b.domain_upper = {1.0, 1.0};

  const auto g = linspace(0.0, 1.0, set.grid);
  std::vector<double> pts;
  pts.reserve(set.grid * set.grid * 2);
  for (double x : g) {
    for (double t : g) {
      pts.push_back(x);
      pts.push_back(t);
    }
  }
  b.interior = Matrix(set.grid * set.grid, 2, std::move(pts));
  const auto e = linspace(0.0, 1.0, set.boundary_points);
  for (double x : e) b.constraints.push_back(ConstraintRow{{x, 0.0}, 0});
  for (double t : e) b.constraints.push_back(ConstraintRow{{0.0, t}, 0});
  for (double t : e) b.constraints.push_back(ConstraintRow{{1.0, t}, 0});

  const std::size_t nk = K / 2;
  const auto ks = linspace(1.0, 2.0, nk);
  const auto bs = linspace(set.b_lo, set.b_hi, nk);
  constexpr double pi = std::numbers::pi;
  for (double amp : {0.5, -0.5}) {
    for (std::size_t i = 0; i < nk; ++i) {
      const double k = ks[i];
      const double off = bs[i];
      auto u = [amp, k, off](std::span<const double> s) {
        return amp * std::sin(2.0 * pi * s[0]) * std::sin(k * pi * s[1]) + off;
      };
      LinearTask t;
      t.forcing = [amp, k, diffusion](std::span<const double> s) {
        const double sx = std::sin(2.0 * pi * s[0]);
        return amp * sx * (k * pi * std::cos(k * pi * s[1]) + 4.0 * pi * pi * diffusion * std::sin(k * pi * s[1]));
      };
      t.constraint = [u](std::span<const double> s, std::size_t) { return u(s); };
      t.reference = u;
      t.params = {amp, k, off};
      b.tasks.push_back(std::move(t));
    }
  }
  return b;
}

inline TrainingBatch to_training_batch(const Bundle& b) {
  TrainingBatch tb;
  tb.op = b.op;
  tb.interior = b.interior;
  tb.constraints = b.constraints;
  const std::size_t nr = b.interior.rows();
  const std::size_t q = b.op.state_dim();
  bool any_ref = false;
  for (const auto& t : b.tasks) any_ref = any_ref || t.reference.has_value();
  for (const auto& t : b.tasks) {
    Vector f(nr * q, 0.0);
    Vector ref;
    for (std::size_t p = 0; p < nr; ++p) {
      f[p * q] = t.forcing(b.interior.row(p));
      if (any_ref && t.reference) ref.push_back((*t.reference)(b.interior.row(p)));
    }
    Vector bc(b.constraints.size());
    for (std::size_t i = 0; i < b.constraints.size(); ++i)
      bc[i] = t.constraint(b.constraints[i].point, b.constraints[i].component);
    tb.interior_targets.push_back(std::move(f));
    tb.constraint_targets.push_back(std::move(bc));
    if (any_ref) tb.reference.push_back(std::move(ref));
  }
  return tb;
}

/// Frozen body plus everything the one-shot stage needs to rebuild its
/// matrices: operator, point sets and loss weights.
struct FeatureMap {
  BodyParams body;
  LinearOperatorSpec op;
  Matrix interior;
  std::vector<ConstraintRow> constraints;
  LossWeights weights;
  std::uint64_t bundle_seed = 0;
  std::string family;
};

struct TrainConfig {
  std::size_t iterations = 5000;
  AdamConfig adam{4e-4, 100, 0.92};
  std::optional<double> clip_norm;
  std::size_t log_every = 100;
  std::size_t monitor_window = 500;
  std::uint64_t head_seed = 1;
};

struct TrainingLogRow {
  std::size_t iteration = 0;  // iterations completed
  double loss = 0.0;
  double pde = 0.0;
  double bc = 0.0;
  double data = 0.0;
  double lr = 0.0;
};

struct TrainingLog {
  std::vector<TrainingLogRow> rows;
  // Iterations at which the loss rose more than 10× above the minimum of the
  // preceding monitor window.
  std::vector<std::size_t> flagged;
  double final_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  FeatureMap feature_map;
  std::vector<HeadWeights> heads;  // training heads; not part of the artifact
  TrainingLog log;
};

inline BodyConfig body_config_for(const Bundle& b, std::vector<std::size_t> hidden, std::size_t h, std::uint64_t seed) {
  BodyConfig c;
  c.input_dim = b.op.input_dim();
  c.hidden = std::move(hidden);
  c.feature_dim = h;
  c.state_dim = b.op.state_dim();
  c.seed = seed;
  c.domain_lower = b.domain_lower;
  c.domain_upper = b.domain_upper;
  return c;
}

inline std::vector<HeadWeights> init_heads(std::size_t K, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(h));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<HeadWeights> heads(K, HeadWeights(h));
  for (auto& w : heads)
    for (double& x : w) x = dist(rng);
  return heads;
}

/// Full-batch Adam + StepLR on the multi-head objective. The per-iteration
/// callback (optional) receives (iteration, loss).
inline TrainResult train_bundle(const Bundle& bundle, const BodyConfig& config, const TrainConfig& tc,
                                const std::function<void(std::size_t, double)>& on_iter = {}) {
  const auto start = std::chrono::steady_clock::now();
  const TrainingBatch batch = to_training_batch(bundle);
  BodyParams body = body_init(config);
  auto heads = init_heads(bundle.tasks.size(), config.feature_dim, config.seed ^ (tc.head_seed * 0x9E3779B97F4A7C15ULL));

  AdamState body_state;
  std::vector<AdamState> head_states(heads.size());
  TrainingLog log;
  std::deque<double> window;

  for (std::size_t it = 0; it < tc.iterations; ++it) {
    LossAndGrad lg = loss_and_grad(body, heads, batch, bundle.weights);
    if (!std::isfinite(lg.loss)) {
      fail(ErrorCode::DivergedLoss, "loss became non-finite at iteration " + std::to_string(it));
    }
    if (!window.empty()) {
      double lo = window.front();
      for (double v : window) lo = std::min(lo, v);
      if (lg.loss > 10.0 * lo) log.flagged.push_back(it);
    }
    window.push_back(lg.loss);
    if (window.size() > tc.monitor_window) window.pop_front();

    if (tc.clip_norm) {
      std::vector<std::span<double>> blocks{lg.grad_params};
      for (auto& g : lg.grad_heads) blocks.emplace_back(g);
      clip_grad_norm(blocks, *tc.clip_norm);
    }
    adam_steplr_step(body.values, body_state, lg.grad_params, it, tc.adam);
    for (std::size_t k = 0; k < heads.size(); ++k) adam_steplr_step(heads[k], head_states[k], lg.grad_heads[k], it, tc.adam);

    if (tc.log_every > 0 && (it + 1) % tc.log_every == 0) {
      log.rows.push_back({it + 1, lg.loss, lg.pde, lg.bc, lg.data, steplr_rate(tc.adam, it)});
    }
    if (on_iter) on_iter(it, lg.loss);
  }
  log.final_loss = loss_and_grad(body, heads, batch, bundle.weights, false).loss;
  if (!std::isfinite(log.final_loss)) fail(ErrorCode::DivergedLoss, "final loss is non-finite");
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  TrainResult r;
  r.feature_map = FeatureMap{std::move(body), bundle.op, bundle.interior, bundle.constraints,
                             bundle.weights, bundle.seed, ""};
  r.heads = std::move(heads);
  r.log = std::move(log);
  return r;
}

}  // namespace chebpinn
