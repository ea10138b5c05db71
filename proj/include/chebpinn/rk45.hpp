#pragma once

// Adaptive Dormand–Prince 5(4) integrator with cubic-Hermite dense output.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "chebpinn/error.hpp"

namespace chebpinn {

struct Rk45Options {
  double rtol = 1e-9;
  double atol = 1e-11;
  double initial_step = 1e-3;
  std::size_t max_steps = 2'000'000;
};

template <std::size_t N>
class DenseTrajectory {
 public:
  using State = std::array<double, N>;

  void push(double t, const State& y, const State& dy) {
    t_.push_back(t);
    y_.push_back(y);
    dy_.push_back(dy);
  }

  double t_begin() const { return t_.front(); }
  double t_end() const { return t_.back(); }
  std::size_t steps() const { return t_.size() - 1; }
  const std::vector<double>& knots() const { return t_; }

  /// Cubic-Hermite interpolation from stored values and derivatives.
  State operator()(double t) const {
    if (t <= t_.front()) return y_.front();
    if (t >= t_.back()) return y_.back();
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - t_.begin()) - 1;
    const double h = t_[k + 1] - t_[k];
    const double s = (t - t_[k]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    State out{};
    for (std::size_t i = 0; i < N; ++i) {
      out[i] = h00 * y_[k][i] + h10 * h * dy_[k][i] + h01 * y_[k + 1][i] + h11 * h * dy_[k + 1][i];
    }
    return out;
  }

 private:
  std::vector<double> t_;
  std::vector<State> y_;
  std::vector<State> dy_;
};

template <std::size_t N>
DenseTrajectory<N> rk45_integrate(const std::function<std::array<double, N>(double, const std::array<double, N>&)>& f,
                                  double t0, double t1, const std::array<double, N>& y0, const Rk45Options& opt = {}) {
  using State = std::array<double, N>;
  if (!(t1 > t0)) fail(ErrorCode::InvalidArgument, "rk45 needs t1 > t0");
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  auto axpy = [](const State& y, double h, std::initializer_list<std::pair<double, const State*>> terms) {
    State out = y;
    for (const auto& [c, k] : terms)
      for (std::size_t i = 0; i < N; ++i) out[i] += h * c * (*k)[i];
    return out;
  };

  DenseTrajectory<N> traj;
  double t = t0;
  State y = y0;
  State k1 = f(t, y);
  traj.push(t, y, k1);
  double h = std::min(opt.initial_step, t1 - t0);
  std::size_t steps = 0;
  while (t < t1) {
    if (++steps > opt.max_steps) fail(ErrorCode::StepFailure, "rk45 exceeded the step budget at t = " + std::to_string(t));
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      fail(ErrorCode::StepFailure, "rk45 step size underflow at t = " + std::to_string(t));
    }
    if (t + h > t1) h = t1 - t;
    const State k2 = f(t + c2 * h, axpy(y, h, {{a21, &k1}}));
    const State k3 = f(t + c3 * h, axpy(y, h, {{a31, &k1}, {a32, &k2}}));
    const State k4 = f(t + c4 * h, axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    const State k5 = f(t + c5 * h, axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    const State k6 = f(t + h, axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    const State ynew = axpy(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const State k7 = f(t + h, ynew);

    double err = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < N; ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err += (e / sc) * (e / sc);
      finite = finite && std::isfinite(ynew[i]) && std::isfinite(k7[i]);
    }
    err = std::sqrt(err / static_cast<double>(N));
    if (!finite || !std::isfinite(err)) {
      h *= 0.2;
      continue;
    }
    if (err <= 1.0) {
      t = (t1 - (t + h) < 1e-15 * std::max(1.0, std::abs(t1))) ? t1 : t + h;
      y = ynew;
      k1 = k7;
      traj.push(t, y, k1);
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= err <= 1.0 ? factor : std::min(factor, 1.0);
  }
  return traj;
}

}  // namespace chebpinn
