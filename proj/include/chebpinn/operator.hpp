#pragma once

// First-order reformulations of the dominant linear operators. Each operator
// row is a linear combination of feature components and their first input
// derivatives, so the same description drives both training residuals and
// the one-shot matrix assembly.

#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "chebpinn/error.hpp"

namespace chebpinn {

enum class OperatorKind { Ode2nd, Diffusion };

/// coef · (component value) when deriv < 0, else coef · ∂(component)/∂s_deriv.
struct OperatorTerm {
  std::size_t component = 0;
  int deriv = -1;
  double coef = 1.0;
};

struct OperatorRow {
  std::vector<OperatorTerm> terms;
};

/// A constraint row picks one state component at one point.
struct ConstraintRow {
  std::vector<double> point;
  std::size_t component = 0;
};

struct LinearOperatorSpec {
  OperatorKind kind = OperatorKind::Ode2nd;
  double delta = 0.0;      // ode2nd damping
  double alpha = 0.0;      // ode2nd stiffness
  double diffusion = 0.0;  // diffusion coefficient

  /// u'' + δu' + αu as the system [v' + δv + αu ; u' − v] with s = t.
  static LinearOperatorSpec ode2nd(double delta, double alpha) {
    return {OperatorKind::Ode2nd, delta, alpha, 0.0};
  }

  /// u_t − D u_xx as [u_t − D y_x ; u_x − y] with s = (x, t).
  static LinearOperatorSpec diffusion_op(double d) { return {OperatorKind::Diffusion, 0.0, 0.0, d}; }

  std::size_t input_dim() const { return kind == OperatorKind::Ode2nd ? 1 : 2; }
  std::size_t state_dim() const { return 2; }

  /// Index of the time coordinate in s.
  std::size_t time_index() const { return kind == OperatorKind::Ode2nd ? 0 : 1; }

  std::vector<OperatorRow> rows() const {
    if (kind == OperatorKind::Ode2nd) {
      return {OperatorRow{{{1, 0, 1.0}, {1, -1, delta}, {0, -1, alpha}}},
              OperatorRow{{{0, 0, 1.0}, {1, -1, -1.0}}}};
    }
    return {OperatorRow{{{0, 1, 1.0}, {1, 0, -diffusion}}}, OperatorRow{{{0, 0, 1.0}, {1, -1, -1.0}}}};
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    if (kind == OperatorKind::Ode2nd) {
      os << "ode2nd(delta=" << delta << ", alpha=" << alpha << ")";
    } else {
      os << "diffusion(D=" << diffusion << ")";
    }
    return os.str();
  }

  friend bool operator==(const LinearOperatorSpec&, const LinearOperatorSpec&) = default;
};

}  // namespace chebpinn
