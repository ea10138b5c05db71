#pragma once

// Truncated Chebyshev surrogates of pointwise nonlinearities on a bounded
// range. Coefficients come from first-kind Gauss–Chebyshev quadrature and
// everything stays in the Chebyshev basis.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "chebpinn/error.hpp"

namespace chebpinn {

using ScalarFn = std::function<double(double)>;

/// Affine map Φ: [u_min, u_max] → [−1, 1].
class RangeMap {
 public:
  RangeMap(double u_min, double u_max) : u_min_(u_min), u_max_(u_max) {
    if (!(u_max > u_min) || !std::isfinite(u_min) || !std::isfinite(u_max)) {
      fail(ErrorCode::InvalidArgument, "range needs finite u_max > u_min");
    }
  }

  double u_min() const noexcept { return u_min_; }
  double u_max() const noexcept { return u_max_; }
  double alpha() const noexcept { return 2.0 / (u_max_ - u_min_); }
  double midpoint() const noexcept { return 0.5 * (u_max_ + u_min_); }
  double width() const noexcept { return u_max_ - u_min_; }

  double to_unit(double u) const { return (2.0 * u - (u_max_ + u_min_)) / (u_max_ - u_min_); }
  double from_unit(double xi) const { return 0.5 * (u_max_ - u_min_) * xi + 0.5 * (u_max_ + u_min_); }

  /// Inside the range up to a tolerance of 1e-9 of its width.
  bool contains(double u) const {
    const double tol = 1e-9 * width();
    return u >= u_min_ - tol && u <= u_max_ + tol;
  }

  friend bool operator==(const RangeMap&, const RangeMap&) = default;

 private:
  double u_min_;
  double u_max_;
};

/// Out-of-range evaluation tally, owned by whoever runs the solve.
using RangeWarnings = std::atomic<std::size_t>;

struct ChebSurrogate {
  std::vector<double> coeffs;  // c_0 .. c_m
  RangeMap range{-1.0, 1.0};
  std::size_t quad_size = 0;

  std::size_t degree() const noexcept { return coeffs.empty() ? 0 : coeffs.size() - 1; }
};

/// T_0(ξ) … T_m(ξ) by the three-term recurrence; ξ is clamped to [−1, 1].
inline std::vector<double> cheb_values(double xi, std::size_t m) {
  xi = std::clamp(xi, -1.0, 1.0);
  std::vector<double> t(m + 1);
  t[0] = 1.0;
  if (m >= 1) t[1] = xi;
  for (std::size_t l = 1; l < m; ++l) t[l + 1] = 2.0 * xi * t[l] - t[l - 1];
  return t;
}

inline ChebSurrogate build_surrogate(const ScalarFn& nonlinearity, const RangeMap& range, std::size_t m,
                                     std::size_t quad_size) {
  if (quad_size < m + 1) {
    fail(ErrorCode::InvalidArgument,
         "quadrature size " + std::to_string(quad_size) + " must be at least m+1 = " + std::to_string(m + 1));
  }
  ChebSurrogate s{std::vector<double>(m + 1, 0.0), range, quad_size};
  const double big_m = static_cast<double>(quad_size);
  std::vector<double> t(m + 1);
  double scale = 0.0;
  for (std::size_t j = 1; j <= quad_size; ++j) {
    const double theta = (2.0 * static_cast<double>(j) - 1.0) * std::numbers::pi / (2.0 * big_m);
    const double xi = std::cos(theta);
    const double sample = nonlinearity(range.from_unit(xi));
    if (!std::isfinite(sample)) {
      std::ostringstream msg;
      msg << "nonlinearity is not finite at u = " << range.from_unit(xi) << " (range [" << range.u_min() << ", "
          << range.u_max() << "])";
      fail(ErrorCode::NonFiniteSample, msg.str());
    }
    scale = std::max(scale, std::abs(sample));
    t[0] = 1.0;
    if (m >= 1) t[1] = xi;
    for (std::size_t l = 1; l < m; ++l) t[l + 1] = 2.0 * xi * t[l] - t[l - 1];
    for (std::size_t l = 0; l <= m; ++l) s.coeffs[l] += sample * t[l];
  }
  s.coeffs[0] /= big_m;
  for (std::size_t l = 1; l <= m; ++l) s.coeffs[l] *= 2.0 / big_m;
  // Coefficients under the rounding floor of the quadrature sum are noise;
  // the lifted tables grow quickly with ℓ and would amplify them.
  const double floor = 8.0 * std::numeric_limits<double>::epsilon() * scale;
  for (double& c : s.coeffs)
    if (std::abs(c) <= floor) c = 0.0;
  return s;
}

inline double eval_surrogate(const ChebSurrogate& s, double u, RangeWarnings* warnings = nullptr) {
  if (warnings != nullptr && !s.range.contains(u)) warnings->fetch_add(1, std::memory_order_relaxed);
  const double xi = std::clamp(s.range.to_unit(u), -1.0, 1.0);
  const std::size_t m = s.degree();
  double t_prev = 1.0;
  double t_cur = xi;
  double sum = s.coeffs[0];
  if (m >= 1) sum += s.coeffs[1] * xi;
  for (std::size_t l = 1; l < m; ++l) {
    const double t_next = 2.0 * xi * t_cur - t_prev;
    sum += s.coeffs[l + 1] * t_next;
    t_prev = t_cur;
    t_cur = t_next;
  }
  return sum;
}

inline double surrogate_sup_error(const ChebSurrogate& s, const ScalarFn& nonlinearity, std::size_t n_probe) {
  if (n_probe < 2) fail(ErrorCode::InvalidArgument, "need at least two probe points");
  const double lo = s.range.u_min();
  const double hi = s.range.u_max();
  double worst = 0.0;
  for (std::size_t i = 0; i < n_probe; ++i) {
    const double u = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_probe - 1);
    worst = std::max(worst, std::abs(eval_surrogate(s, u) - nonlinearity(u)));
  }
  return worst;
}

/// CSV with header `l,c` and one row per coefficient.
inline void write_surrogate_csv(std::ostream& out, const ChebSurrogate& s) {
  out << "l,c\n" << std::setprecision(17);
  for (std::size_t l = 0; l < s.coeffs.size(); ++l) out << l << ',' << s.coeffs[l] << '\n';
}

}  // namespace chebpinn
