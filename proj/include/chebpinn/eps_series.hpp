#pragma once

// Truncated power series in the perturbation parameter ε whose coefficients
// are grids over the interior collocation points. The Chebyshev recurrence
// is lifted to these series so the surrogate nonlinearity can be expanded
// order by order without ever leaving the Chebyshev basis.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "chebpinn/chebyshev.hpp"
#include "chebpinn/error.hpp"

namespace chebpinn {

using Grid = std::vector<double>;

class EpsSeries {
 public:
  EpsSeries(std::size_t order, std::size_t grid_size)
      : terms_(order + 1, Grid(grid_size, 0.0)), grid_size_(grid_size) {}

  explicit EpsSeries(std::vector<Grid> terms) : terms_(std::move(terms)) {
    if (terms_.empty()) fail(ErrorCode::InvalidArgument, "series needs at least one term");
    grid_size_ = terms_.front().size();
    for (const auto& t : terms_) {
      if (t.size() != grid_size_) fail(ErrorCode::GridLengthMismatch, "series terms differ in grid length");
    }
  }

  /// Multiplicative identity: term 0 ≡ 1, higher terms zero.
  static EpsSeries one(std::size_t order, std::size_t grid_size) {
    EpsSeries s(order, grid_size);
    std::fill(s.terms_[0].begin(), s.terms_[0].end(), 1.0);
    return s;
  }

  std::size_t order() const noexcept { return terms_.size() - 1; }
  std::size_t grid_size() const noexcept { return grid_size_; }

  Grid& term(std::size_t j) { return terms_.at(j); }
  const Grid& term(std::size_t j) const { return terms_.at(j); }
  const std::vector<Grid>& terms() const noexcept { return terms_; }

  /// Σ_j ε^j term_j at grid point i.
  double evaluate(std::size_t i, double epsilon) const {
    double acc = 0.0;
    double pow = 1.0;
    for (const auto& t : terms_) {
      acc += pow * t[i];
      pow *= epsilon;
    }
    return acc;
  }

 private:
  std::vector<Grid> terms_;
  std::size_t grid_size_ = 0;
};

/// ξ-series of Φ(Σ ε^j u_j): term 0 is Φ(u_0), term j ≥ 1 is α·u_j.
inline EpsSeries series_from_orders(std::span<const Grid> u_terms, const RangeMap& range) {
  if (u_terms.empty()) fail(ErrorCode::InvalidArgument, "need at least order 0");
  const std::size_t n = u_terms.front().size();
  std::vector<Grid> xi(u_terms.size(), Grid(n));
  for (std::size_t j = 0; j < u_terms.size(); ++j) {
    if (u_terms[j].size() != n) {
      fail(ErrorCode::GridLengthMismatch,
           "order " + std::to_string(j) + " has " + std::to_string(u_terms[j].size()) + " points, expected " +
               std::to_string(n));
    }
  }
  for (std::size_t i = 0; i < n; ++i) xi[0][i] = range.to_unit(u_terms[0][i]);
  const double alpha = range.alpha();
  for (std::size_t j = 1; j < u_terms.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) xi[j][i] = alpha * u_terms[j][i];
  return EpsSeries(std::move(xi));
}

/// Pointwise Cauchy product truncated at the common order.
inline EpsSeries cauchy_mul(const EpsSeries& a, const EpsSeries& b) {
  if (a.order() != b.order() || a.grid_size() != b.grid_size()) {
    fail(ErrorCode::ShapeMismatch, "cauchy_mul operands differ in order or grid length");
  }
  const std::size_t p = a.order();
  const std::size_t n = a.grid_size();
  EpsSeries out(p, n);
  for (std::size_t j = 0; j <= p; ++j) {
    Grid& dst = out.term(j);
    for (std::size_t k = 0; k <= j; ++k) {
      const Grid& ak = a.term(k);
      const Grid& bk = b.term(j - k);
      for (std::size_t i = 0; i < n; ++i) dst[i] += ak[i] * bk[i];
    }
  }
  return out;
}

/// τ_ℓ series for ℓ = 0..m, i.e. the ε-expansion of T_ℓ(ξ(s; ε)).
inline std::vector<EpsSeries> lifted_cheb_tables(const EpsSeries& xi, std::size_t m) {
  const std::size_t p = xi.order();
  const std::size_t n = xi.grid_size();
  std::vector<EpsSeries> tau;
  tau.reserve(m + 1);
  tau.push_back(EpsSeries::one(p, n));
  if (m == 0) return tau;
  tau.push_back(xi);
  for (std::size_t l = 1; l < m; ++l) {
    EpsSeries next = cauchy_mul(xi, tau[l]);
    const EpsSeries& prev = tau[l - 1];
    for (std::size_t j = 0; j <= p; ++j) {
      Grid& dst = next.term(j);
      const Grid& sub = prev.term(j);
      for (std::size_t i = 0; i < n; ++i) dst[i] = 2.0 * dst[i] - sub[i];
    }
    tau.push_back(std::move(next));
  }
  return tau;
}

/// Lifted tables grown one ε-order at a time. Column k of every τ_ℓ only
/// needs ξ_0..ξ_k, so appending ξ_k completes it; each column is computed in
/// the same operation order as lifted_cheb_tables.
class LiftedTableBuilder {
 public:
  LiftedTableBuilder(std::size_t m, std::size_t grid_size) : tau_(m + 1), n_(grid_size) {}

  std::size_t degree() const noexcept { return tau_.size() - 1; }
  std::size_t columns() const noexcept { return xi_.size(); }

  void append(Grid xi_k) {
    if (xi_k.size() != n_) fail(ErrorCode::GridLengthMismatch, "ξ term has the wrong grid length");
    const std::size_t k = xi_.size();
    xi_.push_back(std::move(xi_k));
    tau_[0].emplace_back(n_, k == 0 ? 1.0 : 0.0);
    if (tau_.size() == 1) return;
    tau_[1].push_back(xi_[k]);
    for (std::size_t l = 1; l + 1 < tau_.size(); ++l) {
      Grid dst(n_, 0.0);
      for (std::size_t i = 0; i <= k; ++i) {
        const Grid& a = xi_[i];
        const Grid& b = tau_[l][k - i];
        for (std::size_t r = 0; r < n_; ++r) dst[r] += a[r] * b[r];
      }
      const Grid& sub = tau_[l - 1][k];
      for (std::size_t r = 0; r < n_; ++r) dst[r] = 2.0 * dst[r] - sub[r];
      tau_[l + 1].push_back(std::move(dst));
    }
  }

  const Grid& tau(std::size_t l, std::size_t k) const { return tau_.at(l).at(k); }

  /// G_k = Σ_ℓ c_ℓ τ_{ℓ,k}.
  Grid forcing(const ChebSurrogate& surrogate, std::size_t k) const {
    if (surrogate.coeffs.size() != tau_.size()) fail(ErrorCode::ShapeMismatch, "surrogate degree differs from tables");
    if (k >= columns()) fail(ErrorCode::InvalidArgument, "order " + std::to_string(k) + " not yet appended");
    Grid out(n_, 0.0);
    for (std::size_t l = 0; l < tau_.size(); ++l) {
      const double c = surrogate.coeffs[l];
      const Grid& src = tau_[l][k];
      for (std::size_t r = 0; r < n_; ++r) out[r] += c * src[r];
    }
    return out;
  }

 private:
  std::vector<std::vector<Grid>> tau_;  // [ℓ][k]
  std::vector<Grid> xi_;
  std::size_t n_ = 0;
};

struct OrderForcings {
  std::vector<Grid> g;  // G_0 .. G_p
};

/// G_j = Σ_ℓ c_ℓ τ_{ℓ,j}: the ε^j coefficient of the surrogate nonlinearity.
inline OrderForcings order_forcings(const ChebSurrogate& surrogate, std::span<const EpsSeries> tables) {
  if (tables.size() != surrogate.coeffs.size()) {
    fail(ErrorCode::ShapeMismatch, "tables built for degree " + std::to_string(tables.size()) +
                                       "-1, surrogate has degree " + std::to_string(surrogate.degree()));
  }
  const std::size_t p = tables.front().order();
  const std::size_t n = tables.front().grid_size();
  OrderForcings out{std::vector<Grid>(p + 1, Grid(n, 0.0))};
  for (std::size_t l = 0; l < tables.size(); ++l) {
    const double c = surrogate.coeffs[l];
    for (std::size_t j = 0; j <= p; ++j) {
      const Grid& src = tables[l].term(j);
      Grid& dst = out.g[j];
      for (std::size_t i = 0; i < n; ++i) dst[i] += c * src[i];
    }
  }
  return out;
}

}  // namespace chebpinn
