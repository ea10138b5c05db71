#pragma once

// Online stage. The frozen feature map is turned into fixed operator and
// constraint matrices whose weighted normal matrix is factored once; every
// perturbation order of every query then costs one right-hand side and two
// triangular solves.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "chebpinn/chebyshev.hpp"
#include "chebpinn/dense.hpp"
#include "chebpinn/eps_series.hpp"
#include "chebpinn/error.hpp"
#include "chebpinn/featurenet.hpp"
#include "chebpinn/operator.hpp"
#include "chebpinn/pretrain.hpp"

namespace chebpinn {

struct OneShotSystem {
  LinearOperatorSpec op;
  Matrix a_r;  // (q·N_r) × h, point-major
  Matrix a_b;  // N_b × h
  Matrix normal;
  SpdFactorization factor;
  LossWeights weights;
  Matrix interior;
  std::vector<ConstraintRow> constraints;
  Matrix interior_hu;  // N_r × h, primary-component features at interior points
  std::size_t n_r = 0;  // point counts that normalize the loss weights
  std::size_t n_b = 0;
  std::size_t factorizations = 0;

  std::size_t feature_dim() const noexcept { return normal.rows(); }
  std::size_t n_interior() const noexcept { return interior.rows(); }
  std::size_t n_constraint() const noexcept { return constraints.size(); }
  std::size_t state_dim() const noexcept { return op.state_dim(); }
};

/// Row of (D𝐇)(s) for one operator row, from a feature batch.
inline void operator_row(const FeatureBatch& fb, std::size_t point, const OperatorRow& row, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& t : row.terms) {
    for (std::size_t c = 0; c < fb.h; ++c) {
      out[c] += t.coef * (t.deriv < 0 ? fb.value(point, t.component, c)
                                      : fb.deriv(point, static_cast<std::size_t>(t.deriv), t.component, c));
    }
  }
}

/// Builds the system from explicit operator/constraint matrices. Used by
/// assemble_system and directly by tests with synthetic features.
inline OneShotSystem make_system(Matrix a_r, Matrix a_b, const LossWeights& w, std::size_t n_interior,
                                 std::size_t n_constraint) {
  if (a_r.cols() != a_b.cols()) fail(ErrorCode::DimensionMismatch, "A_r and A_b column counts differ");
  if (n_interior == 0 || n_constraint == 0) fail(ErrorCode::InvalidArgument, "point sets must be nonempty");
  OneShotSystem sys;
  sys.weights = w;
  sys.n_r = n_interior;
  sys.n_b = n_constraint;
  Matrix m = gram(a_r, w.pde / static_cast<double>(n_interior));
  const Matrix mb = gram(a_b, w.bc / static_cast<double>(n_constraint));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += mb(i, j);
  sys.a_r = std::move(a_r);
  sys.a_b = std::move(a_b);
  sys.normal = std::move(m);
  try {
    sys.factor = spd_factorize(sys.normal);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonFactorizable) throw;
    const Eigen::MatrixXd dense = sys.normal.view();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, Eigen::EigenvaluesOnly);
    const auto ev = es.eigenvalues();
    fail(ErrorCode::NonFactorizable, "h = " + std::to_string(sys.normal.rows()) + ", condition estimate " +
                                         std::to_string(std::abs(ev.maxCoeff()) / std::max(std::abs(ev.minCoeff()), 1e-300)));
  }
  sys.factorizations = 1;
  return sys;
}

inline OneShotSystem assemble_system(const FeatureMap& fm, const LinearOperatorSpec& op, const LossWeights& weights) {
  if (op.state_dim() != fm.body.config.state_dim || op.input_dim() != fm.body.config.input_dim) {
    fail(ErrorCode::DimensionMismatch, "operator is incompatible with the feature map");
  }
  if (fm.interior.rows() == 0 || fm.constraints.empty()) fail(ErrorCode::InvalidArgument, "empty point sets");
  const std::size_t h = fm.body.config.feature_dim;
  const std::size_t q = op.state_dim();
  const std::size_t nr = fm.interior.rows();
  const std::size_t nb = fm.constraints.size();

  const FeatureBatch fb = eval_feature_batch(fm.body, stack_points(fm.interior, fm.constraints));
  const auto rows = op.rows();
  Matrix a_r(nr * q, h);
  Matrix hu(nr, h);
  for (std::size_t p = 0; p < nr; ++p) {
    for (std::size_t r = 0; r < q; ++r) operator_row(fb, p, rows[r], a_r.row(p * q + r));
    for (std::size_t c = 0; c < h; ++c) hu(p, c) = fb.value(p, 0, c);
  }
  Matrix a_b(nb, h);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t c = 0; c < h; ++c) a_b(b, c) = fb.value(nr + b, fm.constraints[b].component, c);

  OneShotSystem sys = make_system(std::move(a_r), std::move(a_b), weights, nr, nb);
  sys.op = op;
  sys.interior = fm.interior;
  sys.constraints = fm.constraints;
  sys.interior_hu = std::move(hu);
  return sys;
}

/// Closed-form minimizer of the weighted quadratic objective, reusing the
/// stored factorization.
inline HeadWeights solve_head(const OneShotSystem& sys, std::span<const double> f_target,
                              std::span<const double> b_target, double* rhs_norm = nullptr) {
  if (f_target.size() != sys.a_r.rows() || b_target.size() != sys.a_b.rows()) {
    fail(ErrorCode::DimensionMismatch, "target lengths do not match A_r/A_b rows");
  }
  const double cr = sys.weights.pde / static_cast<double>(sys.n_r);
  const double cb = sys.weights.bc / static_cast<double>(sys.n_b);
  Vector rhs = matvec_transposed(sys.a_r, f_target);
  const Vector rb = matvec_transposed(sys.a_b, b_target);
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = cr * rhs[i] + cb * rb[i];
  if (rhs_norm != nullptr) *rhs_norm = norm2(rhs);
  return spd_solve(sys.factor, rhs);
}

/// Even split of constraint data across orders 0..p: every order receives
/// b / Σ_j ε^j so that Σ_j ε^j b_each = b.
inline std::vector<Vector> split_constraints(std::span<const double> b, double epsilon, std::size_t p) {
  double denom = 0.0;
  double pow = 1.0;
  for (std::size_t j = 0; j <= p; ++j) {
    denom += pow;
    pow *= epsilon;
  }
  if (std::abs(denom) <= 1e-14) {
    fail(ErrorCode::DegenerateGeometricSum, "sum of eps^j vanishes for eps = " + std::to_string(epsilon));
  }
  Vector each(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) each[i] = b[i] / denom;
  return std::vector<Vector>(p + 1, each);
}

/// Pointwise nonlinearity with its derivative (the derivative is only used
/// by gradient-based baselines).
struct Nonlinearity {
  std::string name;
  ScalarFn value;
  ScalarFn derivative;
};

struct SurrogateSettings {
  Nonlinearity nonlinearity;
  RangeMap range{-1.0, 1.0};
  std::size_t degree = 20;
  std::size_t quad_size = 1000;
};

/// One online query: D u + ε N(u) = f with constraint data B u = b.
struct ProblemInstance {
  PointFn forcing;
  std::function<double(std::span<const double>, std::size_t)> constraint;
  double epsilon = 0.0;
  std::size_t order = 0;
  SurrogateSettings surrogate;
};

struct SolveDiagnostics {
  // Interior points whose order-0 value (the expansion point of the
  // surrogate) left [u_min, u_max]; ξ is clamped there.
  std::size_t range_warnings = 0;
  // Interior points whose final reconstruction lies outside [u_min, u_max].
  std::size_t final_out_of_range = 0;
  std::vector<double> rhs_norms;  // ‖q^(j)‖₂ per order
  double seconds = 0.0;
  std::size_t factorizations = 0;  // performed during this solve
};

struct SeriesSolution {
  std::vector<HeadWeights> heads;  // W_0 .. W_p
  double epsilon = 0.0;
  std::vector<Grid> interior_grids;  // u_j at the interior points
  SolveDiagnostics diagnostics;

  std::size_t order() const noexcept { return heads.empty() ? 0 : heads.size() - 1; }
};

inline Vector lifted_forcing(const OneShotSystem& sys, std::span<const double> primary) {
  const std::size_t q = sys.state_dim();
  Vector f(sys.n_interior() * q, 0.0);
  for (std::size_t p = 0; p < sys.n_interior(); ++p) f[p * q] = primary[p];
  return f;
}

inline Vector constraint_targets(const OneShotSystem& sys, const ProblemInstance& inst) {
  Vector b(sys.n_constraint());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = inst.constraint(sys.constraints[i].point, sys.constraints[i].component);
  return b;
}

inline Vector forcing_targets(const OneShotSystem& sys, const ProblemInstance& inst) {
  Vector g(sys.n_interior());
  for (std::size_t p = 0; p < g.size(); ++p) g[p] = inst.forcing(sys.interior.row(p));
  return lifted_forcing(sys, g);
}

/// Surrogate construction followed by the order recursion
///   D u_0 = f,  D u_j = −G_{j−1}(u_0..u_{j−1}),  j = 1..p,
/// each order solved in closed form against the stored factorization.
inline SeriesSolution online_solve(const OneShotSystem& sys, const FeatureMap& fm, const ProblemInstance& inst) {
  const auto start = std::chrono::steady_clock::now();
  if (fm.body.config.feature_dim != sys.feature_dim()) {
    fail(ErrorCode::DimensionMismatch, "feature map and system disagree on h");
  }
  if (!std::isfinite(inst.epsilon)) fail(ErrorCode::InvalidArgument, "epsilon must be finite");
  const std::size_t before = spd_factorization_count().load();
  const auto& ss = inst.surrogate;
  const ChebSurrogate surrogate = build_surrogate(ss.nonlinearity.value, ss.range, ss.degree, ss.quad_size);

  const std::size_t p = inst.order;
  const auto splits = split_constraints(constraint_targets(sys, inst), inst.epsilon, p);

  SeriesSolution sol;
  sol.epsilon = inst.epsilon;
  sol.diagnostics.rhs_norms.resize(p + 1);

  Vector f = forcing_targets(sys, inst);
  sol.heads.push_back(solve_head(sys, f, splits[0], &sol.diagnostics.rhs_norms[0]));
  sol.interior_grids.push_back(matvec(sys.interior_hu, sol.heads[0]));

  const std::size_t q = sys.state_dim();
  const std::size_t n_int = sys.n_interior();
  LiftedTableBuilder tables(surrogate.degree(), n_int);
  for (std::size_t j = 1; j <= p; ++j) {
    const Grid& u = sol.interior_grids[j - 1];
    Grid xi(n_int);
    if (j == 1) {
      for (std::size_t n = 0; n < n_int; ++n) {
        double x = ss.range.to_unit(u[n]);
        if (x < -1.0 || x > 1.0) {
          if (!ss.range.contains(ss.range.from_unit(x))) ++sol.diagnostics.range_warnings;
          x = std::clamp(x, -1.0, 1.0);
        }
        xi[n] = x;
      }
    } else {
      for (std::size_t n = 0; n < n_int; ++n) xi[n] = ss.range.alpha() * u[n];
    }
    tables.append(std::move(xi));
    const Grid gprev = tables.forcing(surrogate, j - 1);
    for (std::size_t n = 0; n < n_int; ++n) f[n * q] = -gprev[n];
    sol.heads.push_back(solve_head(sys, f, splits[j], &sol.diagnostics.rhs_norms[j]));
    sol.interior_grids.push_back(matvec(sys.interior_hu, sol.heads[j]));
  }

  for (std::size_t n = 0; n < sys.n_interior(); ++n) {
    double u = 0.0;
    double pow = 1.0;
    for (const auto& grid : sol.interior_grids) {
      u += pow * grid[n];
      pow *= inst.epsilon;
    }
    if (!ss.range.contains(u)) ++sol.diagnostics.final_out_of_range;
  }
  sol.diagnostics.factorizations = spd_factorization_count().load() - before;
  sol.diagnostics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

/// Linear one-shot solve of D u = f under the instance's constraints, with
/// the nonlinearity and ε ignored. Returned as a single-order series.
inline SeriesSolution linear_solve(const OneShotSystem& sys, const ProblemInstance& inst) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t before = spd_factorization_count().load();
  SeriesSolution sol;
  sol.epsilon = 0.0;
  sol.diagnostics.rhs_norms.resize(1);
  sol.heads.push_back(
      solve_head(sys, forcing_targets(sys, inst), constraint_targets(sys, inst), &sol.diagnostics.rhs_norms[0]));
  sol.interior_grids.push_back(matvec(sys.interior_hu, sol.heads[0]));
  for (double u : sol.interior_grids[0]) {
    if (!inst.surrogate.range.contains(u)) ++sol.diagnostics.final_out_of_range;
  }
  sol.diagnostics.factorizations = spd_factorization_count().load() - before;
  sol.diagnostics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

/// u(s; ε) = Σ_j ε^j H_u(s)·W_j at arbitrary points (rows of `points`).
/// Points outside the training domain are counted in *extrapolated.
inline Grid reconstruct(const SeriesSolution& sol, const FeatureMap& fm, const Matrix& points,
                        std::size_t* extrapolated = nullptr) {
  const FeatureBatch fb = eval_feature_batch(fm.body, points);
  const std::size_t h = fb.h;
  Grid u(points.rows(), 0.0);
  std::size_t outside = 0;
  std::vector<double> hu(h);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    if (!fm.body.config.in_domain(points.row(i))) ++outside;
    for (std::size_t c = 0; c < h; ++c) hu[c] = fb.value(i, 0, c);
    double acc = 0.0;
    double pow = 1.0;
    for (const auto& w : sol.heads) {
      acc += pow * dot(hu.data(), w.data(), h);
      pow *= sol.epsilon;
    }
    u[i] = acc;
  }
  if (extrapolated != nullptr) *extrapolated = outside;
  return u;
}

}  // namespace chebpinn
