#pragma once

// Multi-head network body. A SiLU MLP maps an input point s to a q×h
// feature matrix H(s); a head vector W ∈ ℝ^h reads every state component
// out of the same features, û(s) = H(s)·W. Input derivatives are carried
// forward as tangents alongside the values, and parameter gradients of the
// physics losses are obtained by reverse accumulation through that
// value-plus-tangent graph.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chebpinn/dense.hpp"
#include "chebpinn/error.hpp"
#include "chebpinn/operator.hpp"

namespace chebpinn {

enum class Activation { Silu };

struct BodyConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t feature_dim = 64;  // h
  std::size_t state_dim = 2;     // q
  Activation activation = Activation::Silu;
  std::uint64_t seed = 0;
  // Training domain; inputs are mapped affinely onto [−1, 1] per coordinate.
  std::vector<double> domain_lower{0.0};
  std::vector<double> domain_upper{1.0};

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(state_dim * feature_dim);
    return sizes;
  }

  std::size_t parameter_count() const {
    const auto sizes = layer_sizes();
    std::size_t n = 0;
    for (std::size_t l = 1; l < sizes.size(); ++l) n += sizes[l] * sizes[l - 1] + sizes[l];
    return n;
  }

  void validate() const {
    if (feature_dim < 1) fail(ErrorCode::InvalidArgument, "feature dimension must be at least 1");
    if (state_dim < 1 || state_dim > 2) fail(ErrorCode::InvalidArgument, "state dimension must be 1 or 2");
    if (input_dim < 1) fail(ErrorCode::InvalidArgument, "input dimension must be at least 1");
    if (domain_lower.size() != input_dim || domain_upper.size() != input_dim) {
      fail(ErrorCode::InvalidArgument, "domain bounds must match the input dimension");
    }
    for (std::size_t i = 0; i < input_dim; ++i) {
      if (!(domain_upper[i] > domain_lower[i])) fail(ErrorCode::InvalidArgument, "empty domain");
    }
    for (auto w : hidden)
      if (w == 0) fail(ErrorCode::InvalidArgument, "hidden widths must be positive");
  }

  bool in_domain(std::span<const double> s, double tol = 1e-12) const {
    for (std::size_t i = 0; i < input_dim; ++i) {
      if (s[i] < domain_lower[i] - tol || s[i] > domain_upper[i] + tol) return false;
    }
    return true;
  }

  friend bool operator==(const BodyConfig&, const BodyConfig&) = default;
};

struct LayerShape {
  std::size_t out = 0;
  std::size_t in = 0;
  std::size_t weight_offset = 0;  // row-major out×in
  std::size_t bias_offset = 0;
};

inline std::vector<LayerShape> layer_shapes(const BodyConfig& cfg) {
  const auto sizes = cfg.layer_sizes();
  std::vector<LayerShape> shapes;
  std::size_t offset = 0;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    LayerShape s{sizes[l], sizes[l - 1], offset, offset + sizes[l] * sizes[l - 1]};
    offset = s.bias_offset + sizes[l];
    shapes.push_back(s);
  }
  return shapes;
}

struct BodyParams {
  BodyConfig config;
  std::vector<double> values;  // all layers, flat

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const BodyParams&, const BodyParams&) = default;
};

using HeadWeights = std::vector<double>;

/// Glorot-uniform weights from a seeded mt19937_64, zero biases.
inline BodyParams body_init(const BodyConfig& config) {
  config.validate();
  BodyParams p{config, std::vector<double>(config.parameter_count(), 0.0)};
  std::mt19937_64 rng(config.seed);
  for (const auto& layer : layer_shapes(config)) {
    const double a = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (std::size_t i = 0; i < layer.out * layer.in; ++i) p.values[layer.weight_offset + i] = dist(rng);
  }
  return p;
}

/// H(s) plus ∂H/∂s_i for each input coordinate, all q×h.
struct FeatureEval {
  Matrix features;
  std::vector<Matrix> jacobian;
};

namespace detail {

using EMat = Eigen::MatrixXd;
using EArr = Eigen::ArrayXXd;
using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Parameters are copied into Eigen-owned storage: vectorized kernels on
// maps peel by address, which would make rounding depend on the heap.
inline EMat weight_of(const BodyParams& p, const LayerShape& s) {
  return RowMajorMap(p.values.data() + s.weight_offset, static_cast<Eigen::Index>(s.out),
                     static_cast<Eigen::Index>(s.in));
}

inline Eigen::VectorXd bias_of(const BodyParams& p, const LayerShape& s) {
  return Eigen::Map<const Eigen::VectorXd>(p.values.data() + s.bias_offset, static_cast<Eigen::Index>(s.out));
}

inline EArr sigmoid(const EArr& a) { return (1.0 + (-a).exp()).inverse(); }

}  // namespace detail

/// Values and input tangents for a batch of points, stacked column-wise as
/// [values | ∂/∂s_0 | ∂/∂s_1 ...], each block n columns wide. Row r·h + c of
/// the output holds feature c of state component r.
struct FeatureBatch {
  std::size_t n = 0;
  std::size_t q = 0;
  std::size_t h = 0;
  std::size_t d = 0;
  detail::EMat out;
  // Intermediates kept for reverse accumulation: stacked layer inputs and
  // stacked pre-activations per hidden layer.
  std::vector<detail::EMat> inputs;
  std::vector<detail::EMat> preacts;

  double value(std::size_t point, std::size_t comp, std::size_t c) const {
    return out(static_cast<Eigen::Index>(comp * h + c), static_cast<Eigen::Index>(point));
  }
  double deriv(std::size_t point, std::size_t coord, std::size_t comp, std::size_t c) const {
    return out(static_cast<Eigen::Index>(comp * h + c), static_cast<Eigen::Index>((coord + 1) * n + point));
  }

  FeatureEval at(std::size_t point) const {
    FeatureEval e{Matrix(q, h), std::vector<Matrix>(d, Matrix(q, h))};
    for (std::size_t r = 0; r < q; ++r) {
      for (std::size_t c = 0; c < h; ++c) {
        e.features(r, c) = value(point, r, c);
        for (std::size_t i = 0; i < d; ++i) e.jacobian[i](r, c) = deriv(point, i, r, c);
      }
    }
    return e;
  }
};

/// Forward pass for points given as rows of `points` (n × input_dim).
inline FeatureBatch eval_feature_batch(const BodyParams& params, const Matrix& points, bool keep_intermediates = false) {
  const BodyConfig& cfg = params.config;
  if (points.cols() != cfg.input_dim) fail(ErrorCode::DimensionMismatch, "point dimension does not match body");
  const auto shapes = layer_shapes(cfg);
  const auto n = static_cast<Eigen::Index>(points.rows());
  const auto d = static_cast<Eigen::Index>(cfg.input_dim);

  FeatureBatch fb;
  fb.n = points.rows();
  fb.q = cfg.state_dim;
  fb.h = cfg.feature_dim;
  fb.d = cfg.input_dim;

  detail::EMat stacked = detail::EMat::Zero(d, n * (1 + d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lo = cfg.domain_lower[static_cast<std::size_t>(i)];
    const double hi = cfg.domain_upper[static_cast<std::size_t>(i)];
    const double scale = 2.0 / (hi - lo);
    for (Eigen::Index k = 0; k < n; ++k) {
      stacked(i, k) = (points(static_cast<std::size_t>(k), static_cast<std::size_t>(i)) - lo) * scale - 1.0;
      stacked(i, (1 + i) * n + k) = scale;
    }
  }

  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    detail::EMat pre = detail::weight_of(params, s) * stacked;
    pre.leftCols(n).colwise() += detail::bias_of(params, s);
    if (keep_intermediates) fb.inputs.push_back(stacked);
    if (l + 1 == shapes.size()) {
      fb.out = std::move(pre);
      break;
    }
    const detail::EArr a = pre.leftCols(n).array();
    const detail::EArr sig = detail::sigmoid(a);
    const detail::EArr dsig = sig * (1.0 + a * (1.0 - sig));
    detail::EMat next(pre.rows(), pre.cols());
    next.leftCols(n) = (a * sig).matrix();
    for (Eigen::Index i = 0; i < d; ++i) {
      next.middleCols((1 + i) * n, n) = (dsig * pre.middleCols((1 + i) * n, n).array()).matrix();
    }
    if (keep_intermediates) fb.preacts.push_back(std::move(pre));
    stacked = std::move(next);
  }
  return fb;
}

inline FeatureEval eval_features(const BodyParams& params, std::span<const double> s) {
  if (s.size() != params.config.input_dim) fail(ErrorCode::DimensionMismatch, "input point dimension");
  Matrix pt(1, s.size(), std::vector<double>(s.begin(), s.end()));
  return eval_feature_batch(params, pt).at(0);
}

/// Reverse pass: given ∂L/∂out (same shape as FeatureBatch::out), returns
/// ∂L/∂params. Requires a batch evaluated with keep_intermediates.
inline std::vector<double> backprop_features(const BodyParams& params, const FeatureBatch& fb,
                                             const detail::EMat& grad_out) {
  const auto shapes = layer_shapes(params.config);
  const auto n = static_cast<Eigen::Index>(fb.n);
  const auto d = static_cast<Eigen::Index>(fb.d);
  std::vector<double> grad(params.values.size(), 0.0);

  detail::EMat g_pre = grad_out;
  for (std::size_t li = shapes.size(); li-- > 0;) {
    const auto& s = shapes[li];
    const detail::EMat gw = g_pre * fb.inputs[li].transpose();
    const Eigen::VectorXd gb = g_pre.leftCols(n).rowwise().sum();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        grad.data() + s.weight_offset, static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in)) = gw;
    Eigen::Map<Eigen::VectorXd>(grad.data() + s.bias_offset, static_cast<Eigen::Index>(s.out)) = gb;
    if (li == 0) break;

    const detail::EMat g_in = detail::weight_of(params, s).transpose() * g_pre;
    // g_in is ∂L/∂(activations of layer li−1, stacked); push through SiLU.
    const detail::EMat& pre = fb.preacts[li - 1];
    const detail::EArr a = pre.leftCols(n).array();
    const detail::EArr sig = detail::sigmoid(a);
    const detail::EArr dsig = sig * (1.0 + a * (1.0 - sig));
    const detail::EArr ddsig = sig * (1.0 - sig) * (2.0 + a * (1.0 - 2.0 * sig));
    detail::EMat next(g_in.rows(), g_in.cols());
    detail::EArr g_a = g_in.leftCols(n).array() * dsig;
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto g_tan = g_in.middleCols((1 + i) * n, n).array();
      g_a += g_tan * ddsig * pre.middleCols((1 + i) * n, n).array();
      next.middleCols((1 + i) * n, n) = (g_tan * dsig).matrix();
    }
    next.leftCols(n) = g_a.matrix();
    g_pre = std::move(next);
  }
  return grad;
}

struct LossWeights {
  double pde = 1.0;
  double bc = 1.0;
  double data = 0.0;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Fixed point sets plus per-head targets for a bundle of linear tasks.
struct TrainingBatch {
  LinearOperatorSpec op;
  Matrix interior;                         // N_r × input_dim
  std::vector<ConstraintRow> constraints;  // N_b rows
  std::vector<Vector> interior_targets;    // per head, N_r·q (point-major)
  std::vector<Vector> constraint_targets;  // per head, N_b
  std::vector<Vector> reference;           // per head, N_r; empty when unavailable

  std::size_t heads() const noexcept { return interior_targets.size(); }
};

struct LossAndGrad {
  double loss = 0.0;
  double pde = 0.0;
  double bc = 0.0;
  double data = 0.0;
  std::vector<double> grad_params;
  std::vector<Vector> grad_heads;
};

/// Interior and constraint points stacked into one evaluation batch.
inline Matrix stack_points(const Matrix& interior, const std::vector<ConstraintRow>& constraints) {
  const std::size_t d = interior.cols();
  std::vector<double> all(interior.entries());
  for (const auto& c : constraints) {
    if (c.point.size() != d) fail(ErrorCode::DimensionMismatch, "constraint point dimension");
    all.insert(all.end(), c.point.begin(), c.point.end());
  }
  return Matrix(interior.rows() + constraints.size(), d, std::move(all));
}

/// Weighted multi-head physics loss and its gradient w.r.t. body and heads.
///
///   Σ_k  w_pde/N_r Σ_n ‖(D𝐇W_k)(s_n) − f_k(s_n)‖²
///      + w_bc/N_b  Σ_b (H_c(s̄_b)·W_k − b_k,b)²
///      + w_data/N_r Σ_n (H_u(s_n)·W_k − u_k^ref(s_n))²
inline LossAndGrad loss_and_grad(const BodyParams& params, std::span<const HeadWeights> heads,
                                 const TrainingBatch& batch, const LossWeights& weights, bool want_grad = true) {
  const std::size_t K = heads.size();
  if (K != batch.heads() || batch.constraint_targets.size() != K) {
    fail(ErrorCode::DimensionMismatch, "one task per head required");
  }
  const std::size_t h = params.config.feature_dim;
  const std::size_t q = params.config.state_dim;
  const std::size_t nr = batch.interior.rows();
  const std::size_t nb = batch.constraints.size();
  const bool use_data = weights.data != 0.0 && !batch.reference.empty();

  const Matrix pts = stack_points(batch.interior, batch.constraints);
  FeatureBatch fb = eval_feature_batch(params, pts, want_grad);
  const auto n = static_cast<Eigen::Index>(fb.n);
  const auto d = static_cast<Eigen::Index>(fb.d);
  const auto cols = n * (1 + d);

  detail::EMat wh(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(h));
  for (std::size_t k = 0; k < K; ++k) {
    if (heads[k].size() != h) fail(ErrorCode::DimensionMismatch, "head length must equal feature dimension");
    for (std::size_t c = 0; c < h; ++c) wh(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = heads[k][c];
  }

  // Head readouts per component: K × cols.
  std::vector<detail::EMat> vals(q), gvals(q, detail::EMat::Zero(static_cast<Eigen::Index>(K), cols));
  for (std::size_t r = 0; r < q; ++r) {
    vals[r] = wh * fb.out.middleRows(static_cast<Eigen::Index>(r * h), static_cast<Eigen::Index>(h));
  }
  auto term_col = [&](const OperatorTerm& t, Eigen::Index point) {
    return t.deriv < 0 ? point : (1 + t.deriv) * n + point;
  };

  LossAndGrad out;
  const auto rows = batch.op.rows();
  const double cr = weights.pde / static_cast<double>(nr);
  for (std::size_t k = 0; k < K; ++k) {
    const auto ki = static_cast<Eigen::Index>(k);
    const Vector& tgt = batch.interior_targets[k];
    if (tgt.size() != nr * q) fail(ErrorCode::DimensionMismatch, "interior targets length");
    for (std::size_t p = 0; p < nr; ++p) {
      const auto pi = static_cast<Eigen::Index>(p);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        double e = -tgt[p * q + r];
        for (const auto& t : rows[r].terms) e += t.coef * vals[t.component](ki, term_col(t, pi));
        out.pde += cr * e * e;
        const double g = 2.0 * cr * e;
        for (const auto& t : rows[r].terms) gvals[t.component](ki, term_col(t, pi)) += g * t.coef;
      }
    }
    if (nb > 0) {
      const double cb = weights.bc / static_cast<double>(nb);
      const Vector& bt = batch.constraint_targets[k];
      if (bt.size() != nb) fail(ErrorCode::DimensionMismatch, "constraint targets length");
      for (std::size_t b = 0; b < nb; ++b) {
        const auto col = static_cast<Eigen::Index>(nr + b);
        const std::size_t comp = batch.constraints[b].component;
        const double e = vals[comp](ki, col) - bt[b];
        out.bc += cb * e * e;
        gvals[comp](ki, col) += 2.0 * cb * e;
      }
    }
    if (use_data) {
      const double cd = weights.data / static_cast<double>(nr);
      const Vector& ref = batch.reference[k];
      if (ref.size() != nr) fail(ErrorCode::DimensionMismatch, "reference length");
      for (std::size_t p = 0; p < nr; ++p) {
        const auto pi = static_cast<Eigen::Index>(p);
        const double e = vals[0](ki, pi) - ref[p];
        out.data += cd * e * e;
        gvals[0](ki, pi) += 2.0 * cd * e;
      }
    }
  }
  out.loss = out.pde + out.bc + out.data;
  if (!want_grad) return out;

  detail::EMat grad_out(fb.out.rows(), cols);
  detail::EMat gwh = detail::EMat::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(h));
  for (std::size_t r = 0; r < q; ++r) {
    const auto block = fb.out.middleRows(static_cast<Eigen::Index>(r * h), static_cast<Eigen::Index>(h));
    grad_out.middleRows(static_cast<Eigen::Index>(r * h), static_cast<Eigen::Index>(h)).noalias() =
        wh.transpose() * gvals[r];
    gwh.noalias() += gvals[r] * block.transpose();
  }
  out.grad_params = backprop_features(params, fb, grad_out);
  out.grad_heads.assign(K, Vector(h));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < h; ++c)
      out.grad_heads[k][c] = gwh(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c));
  return out;
}

struct AdamConfig {
  double lr = 1e-3;
  std::size_t step_size = 100;
  double gamma = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t steps = 0;
};

/// StepLR: lr · γ^⌊iter/step⌋.
inline double steplr_rate(const AdamConfig& cfg, std::size_t iter) {
  const auto decays = cfg.step_size == 0 ? 0 : iter / cfg.step_size;
  return cfg.lr * std::pow(cfg.gamma, static_cast<double>(decays));
}

/// One bias-corrected Adam update in place, at learning rate steplr_rate(iter).
inline void adam_steplr_step(std::span<double> params, AdamState& state, std::span<const double> grad,
                             std::size_t iter, const AdamConfig& cfg) {
  if (grad.size() != params.size()) fail(ErrorCode::DimensionMismatch, "gradient length");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  } else if (state.m.size() != params.size()) {
    fail(ErrorCode::DimensionMismatch, "optimizer state length");
  }
  state.steps += 1;
  const double t = static_cast<double>(state.steps);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double lr = steplr_rate(cfg, iter);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

/// Scales the gradient blocks jointly so their global 2-norm is at most
/// max_norm. Returns the norm before clipping.
inline double clip_grad_norm(std::span<const std::span<double>> blocks, double max_norm) {
  double sq = 0.0;
  for (auto b : blocks)
    for (double g : b) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto b : blocks)
      for (double& g : b) g *= scale;
  }
  return norm;
}

}  // namespace chebpinn
