#pragma once

// Run configuration: a line-oriented `key = value` text format with a
// versioned header, named presets for the three benchmarks, and small
// instance files for single solves.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chebpinn/bench.hpp"
#include "chebpinn/error.hpp"
#include "chebpinn/pretrain.hpp"

namespace chebpinn {

enum class Family { Ode1, Ode2, Pde1 };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Ode1: return "ode1";
    case Family::Ode2: return "ode2";
    default: return "pde1";
  }
}

inline Family family_from_string(std::string_view s) {
  if (s == "ode1") return Family::Ode1;
  if (s == "ode2") return Family::Ode2;
  if (s == "pde1") return Family::Pde1;
  fail(ErrorCode::ConfigError, "unknown family '" + std::string(s) + "' (expected ode1, ode2 or pde1)");
}

namespace cfgfmt {

inline constexpr std::string_view kConfigHeader = "chebpinn-config 1";
inline constexpr std::string_view kInstanceHeader = "chebpinn-instance 1";

inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
inline std::string fmt(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}
inline std::string fmt_pair(double a, double b) { return fmt(a) + "," + fmt(b); }
inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "none"; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Ordered key/value pairs; rejects duplicates and malformed lines.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, std::string_view header) {
    KeyValues kv;
    std::size_t line_no = 0;
    bool seen_header = false;
    while (!text.empty()) {
      const auto nl = text.find('\n');
      std::string_view line = trim(text.substr(0, nl));
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++line_no;
      if (line.empty() || line.front() == '#') continue;
      if (!seen_header) {
        if (line != header) {
          fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected header '" + std::string(header) +
                                           "', found '" + std::string(line) + "'");
        }
        seen_header = true;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
      }
      std::string key(trim(line.substr(0, eq)));
      std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": empty key");
      if (kv.values_.count(key)) fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": duplicate key " + key);
      kv.values_.emplace(key, std::make_pair(value, line_no));
    }
    if (!seen_header) fail(ErrorCode::ConfigError, "missing header '" + std::string(header) + "'");
    return kv;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorCode::ConfigError, "missing key " + key);
    used_.push_back(key);
    return it->second.first;
  }

  double real(const std::string& key) { return to_real(key, str(key)); }

  std::uint64_t count(const std::string& key) {
    const std::string s = str(key);
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad(key, s, "a non-negative integer");
    return v;
  }

  std::pair<double, double> pair(const std::string& key) {
    const std::string s = str(key);
    const auto comma = s.find(',');
    if (comma == std::string::npos) bad(key, s, "two comma-separated reals");
    const double a = to_real(key, std::string(trim(std::string_view(s).substr(0, comma))));
    const double b = to_real(key, std::string(trim(std::string_view(s).substr(comma + 1))));
    if (!(b > a)) bad(key, s, "an increasing pair lo,hi");
    return {a, b};
  }

  std::vector<std::size_t> counts(const std::string& key) {
    const std::string s = str(key);
    std::vector<std::size_t> out;
    std::string_view rest = s;
    while (true) {
      const auto comma = rest.find(',');
      const std::string part(trim(rest.substr(0, comma)));
      std::size_t v = 0;
      const auto r = std::from_chars(part.data(), part.data() + part.size(), v);
      if (part.empty() || r.ec != std::errc() || r.ptr != part.data() + part.size()) bad(key, s, "comma-separated integers");
      out.push_back(v);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  std::optional<double> optional_real(const std::string& key) {
    const std::string s = str(key);
    if (s == "none") return std::nullopt;
    return to_real(key, s);
  }

  /// Fails on any key that was never read.
  void check_all_used() const {
    for (const auto& [k, v] : values_) {
      bool used = false;
      for (const auto& u : used_) used = used || u == k;
      if (!used) fail(ErrorCode::ConfigError, "line " + std::to_string(v.second) + ": unknown key " + k);
    }
  }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& s, const std::string& want) const {
    const auto line = values_.at(key).second;
    fail(ErrorCode::ConfigError, "line " + std::to_string(line) + ": " + key + " = '" + s + "' is not " + want);
  }

  double to_real(const std::string& key, const std::string& s) const {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) bad(key, s, "a finite real");
    return v;
  }

  std::map<std::string, std::pair<std::string, std::size_t>> values_;
  std::vector<std::string> used_;
};

}  // namespace cfgfmt

struct RunConfig {
  Family family = Family::Ode1;

  // offline stage
  std::size_t heads = 10;
  std::uint64_t bundle_seed = 7;
  std::uint64_t body_seed = 3;
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t feature_dim = 64;
  std::size_t iterations = 5000;
  double lr = 4e-4;
  std::size_t step_size = 100;
  double gamma = 0.92;
  std::optional<double> clip;
  LossWeights weights{0.5, 1.5, 0.0};

  // operator and training families
  OdeFamily ode;
  double diffusion = 0.05;
  double reaction_delta = 0.0;
  PdeBundleSettings pde;

  // online stage
  OnlineSettings online;

  // benchmark harness
  std::size_t instances = 100;
  std::uint64_t test_seed = 11;
  BaselineConfig baseline;

  bool is_pde() const { return family == Family::Pde1; }

  static RunConfig preset(Family f) {
    RunConfig c;
    c.family = f;
    switch (f) {
      case Family::Ode1:
        c.ode = OdeFamily::ode1();
        c.online = OnlineSettings::ode1();
        c.baseline = BaselineConfig::ode1();
        break;
      case Family::Ode2:
        c.iterations = 8000;
        c.ode = OdeFamily::ode2();
        c.online = OnlineSettings::ode2();
        c.baseline = BaselineConfig::ode2();
        break;
      case Family::Pde1:
        c.heads = 16;
        c.feature_dim = 128;
        c.iterations = 1000;
        c.lr = 1e-3;
        c.gamma = 0.98;
        c.weights = {1.0, 1.0, 1.0};
        c.online = OnlineSettings::pde1();
        c.instances = 32;
        c.baseline = BaselineConfig::pde1();
        break;
    }
    return c;
  }

  static RunConfig preset(std::string_view name) { return preset(family_from_string(name)); }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.iterations = iterations;
    tc.adam = AdamConfig{lr, step_size, gamma};
    tc.clip_norm = clip;
    return tc;
  }

  Bundle bundle() const {
    if (is_pde()) {
      Bundle b = make_pde_bundle(diffusion, heads, pde);
      b.weights = weights;
      b.seed = bundle_seed;
      return b;
    }
    Bundle b = make_ode_bundle(ode, heads, bundle_seed);
    b.weights = weights;
    return b;
  }

  BodyConfig body_config() const { return body_config_for(bundle(), hidden, feature_dim, body_seed); }

  std::string serialize() const {
    using namespace cfgfmt;
    std::ostringstream os;
    os << kConfigHeader << '\n';
    auto kv = [&os](std::string_view k, const std::string& v) { os << k << " = " << v << '\n'; };
    kv("family", to_string(family));
    os << "# offline\n";
    kv("heads", fmt(std::uint64_t{heads}));
    kv("bundle_seed", fmt(bundle_seed));
    kv("body_seed", fmt(body_seed));
    kv("hidden", fmt(hidden));
    kv("feature_dim", fmt(std::uint64_t{feature_dim}));
    kv("iterations", fmt(std::uint64_t{iterations}));
    kv("lr", fmt(lr));
    kv("step_size", fmt(std::uint64_t{step_size}));
    kv("gamma", fmt(gamma));
    kv("clip", fmt_opt(clip));
    kv("w_pde", fmt(weights.pde));
    kv("w_bc", fmt(weights.bc));
    kv("w_data", fmt(weights.data));
    os << "# operator\n";
    if (is_pde()) {
      kv("diffusion", fmt(diffusion));
      kv("reaction_delta", fmt(reaction_delta));
      kv("grid", fmt(std::uint64_t{pde.grid}));
      kv("boundary_points", fmt(std::uint64_t{pde.boundary_points}));
      kv("offset_range", fmt_pair(pde.b_lo, pde.b_hi));
    } else {
      kv("op_delta", fmt(ode.delta));
      kv("op_alpha", fmt(ode.alpha));
      kv("beta_range", fmt_pair(ode.beta_lo, ode.beta_hi));
      kv("omega_range", fmt_pair(ode.omega_lo, ode.omega_hi));
      kv("c_range", fmt_pair(ode.c_lo, ode.c_hi));
      kv("u0_range", fmt_pair(ode.u0_lo, ode.u0_hi));
      kv("v0_range", fmt_pair(ode.v0_lo, ode.v0_hi));
      kv("t_end", fmt(ode.t_end));
      kv("n_interior", fmt(std::uint64_t{ode.n_interior}));
    }
    os << "# online\n";
    kv("epsilon", fmt(online.epsilon));
    kv("order", fmt(std::uint64_t{online.order}));
    kv("degree", fmt(std::uint64_t{online.degree}));
    kv("quad_size", fmt(std::uint64_t{online.quad_size}));
    kv("u_range", fmt_pair(online.range.u_min(), online.range.u_max()));
    os << "# benchmark\n";
    kv("instances", fmt(std::uint64_t{instances}));
    kv("test_seed", fmt(test_seed));
    kv("baseline_lr", fmt(baseline.lr));
    kv("baseline_step_size", fmt(std::uint64_t{baseline.step_size}));
    kv("baseline_gamma", fmt(baseline.gamma));
    kv("baseline_tau", fmt(baseline.tau));
    kv("baseline_cap", fmt(std::uint64_t{baseline.cap}));
    kv("baseline_clip", fmt_opt(baseline.clip));
    kv("baseline_init", baseline.init == HeadInit::Zero ? "zero" : "random");
    kv("baseline_interior", fmt(std::uint64_t{baseline.interior_points}));
    kv("baseline_boundary", fmt(std::uint64_t{baseline.boundary_points}));
    kv("baseline_w_pde", fmt(baseline.weights.pde));
    kv("baseline_w_bc", fmt(baseline.weights.bc));
    kv("baseline_seed", fmt(baseline.seed));
    return os.str();
  }

  static RunConfig parse(std::string_view text) {
    using namespace cfgfmt;
    auto kv = KeyValues::parse(text, kConfigHeader);
    RunConfig c = preset(family_from_string(kv.str("family")));
    c.heads = kv.count("heads");
    c.bundle_seed = kv.count("bundle_seed");
    c.body_seed = kv.count("body_seed");
    c.hidden = kv.counts("hidden");
    c.feature_dim = kv.count("feature_dim");
    c.iterations = kv.count("iterations");
    c.lr = kv.real("lr");
    c.step_size = kv.count("step_size");
    c.gamma = kv.real("gamma");
    c.clip = kv.optional_real("clip");
    c.weights = {kv.real("w_pde"), kv.real("w_bc"), kv.real("w_data")};
    if (c.is_pde()) {
      c.diffusion = kv.real("diffusion");
      c.reaction_delta = kv.real("reaction_delta");
      c.pde.grid = kv.count("grid");
      c.pde.boundary_points = kv.count("boundary_points");
      std::tie(c.pde.b_lo, c.pde.b_hi) = kv.pair("offset_range");
    } else {
      c.ode.delta = kv.real("op_delta");
      c.ode.alpha = kv.real("op_alpha");
      std::tie(c.ode.beta_lo, c.ode.beta_hi) = kv.pair("beta_range");
      std::tie(c.ode.omega_lo, c.ode.omega_hi) = kv.pair("omega_range");
      std::tie(c.ode.c_lo, c.ode.c_hi) = kv.pair("c_range");
      std::tie(c.ode.u0_lo, c.ode.u0_hi) = kv.pair("u0_range");
      std::tie(c.ode.v0_lo, c.ode.v0_hi) = kv.pair("v0_range");
      c.ode.t_end = kv.real("t_end");
      c.ode.n_interior = kv.count("n_interior");
    }
    c.online.epsilon = kv.real("epsilon");
    c.online.order = kv.count("order");
    c.online.degree = kv.count("degree");
    c.online.quad_size = kv.count("quad_size");
    const auto [lo, hi] = kv.pair("u_range");
    c.online.range = RangeMap(lo, hi);
    c.instances = kv.count("instances");
    c.test_seed = kv.count("test_seed");
    c.baseline.lr = kv.real("baseline_lr");
    c.baseline.step_size = kv.count("baseline_step_size");
    c.baseline.gamma = kv.real("baseline_gamma");
    c.baseline.tau = kv.real("baseline_tau");
    c.baseline.cap = kv.count("baseline_cap");
    c.baseline.clip = kv.optional_real("baseline_clip");
    const std::string init = kv.str("baseline_init");
    if (init != "zero" && init != "random") fail(ErrorCode::ConfigError, "baseline_init must be zero or random");
    c.baseline.init = init == "zero" ? HeadInit::Zero : HeadInit::Random;
    c.baseline.interior_points = kv.count("baseline_interior");
    c.baseline.boundary_points = kv.count("baseline_boundary");
    c.baseline.weights = {kv.real("baseline_w_pde"), kv.real("baseline_w_bc"), 0.0};
    c.baseline.seed = kv.count("baseline_seed");
    kv.check_all_used();
    if (c.heads == 0) fail(ErrorCode::ConfigError, "heads must be positive");
    if (c.is_pde() && c.heads % 2 != 0) fail(ErrorCode::ConfigError, "pde1 needs an even head count");
    if (c.online.quad_size < c.online.degree + 1) fail(ErrorCode::ConfigError, "quad_size must exceed degree");
    return c;
  }
};

/// One online query. ODE keys: beta, omega (ode1) or gamma (ode2), u0, v0.
/// PDE keys: amplitude, wavenumber, offset. Optional overrides: epsilon,
/// order, degree, quad_size.
struct InstanceSpec {
  Family family = Family::Ode1;
  OdeBenchmark ode;
  PdeBenchmark pde;
  std::optional<double> epsilon;
  std::optional<std::size_t> order;
  std::optional<std::size_t> degree;
  std::optional<std::size_t> quad_size;

  OnlineSettings settings(const RunConfig& cfg) const {
    OnlineSettings s = cfg.online;
    if (epsilon) s.epsilon = *epsilon;
    if (order) s.order = *order;
    if (degree) s.degree = *degree;
    if (quad_size) s.quad_size = *quad_size;
    return s;
  }

  static InstanceSpec parse(std::string_view text) {
    using namespace cfgfmt;
    auto kv = KeyValues::parse(text, kInstanceHeader);
    InstanceSpec s;
    s.family = family_from_string(kv.str("family"));
    if (s.family == Family::Pde1) {
      s.pde.amplitude = kv.real("amplitude");
      s.pde.wavenumber = kv.real("wavenumber");
      s.pde.offset = kv.real("offset");
    } else {
      s.ode.family = s.family == Family::Ode1 ? OdeKind::Ode1 : OdeKind::Ode2;
      if (s.family == Family::Ode1) {
        s.ode.beta = kv.real("beta");
        s.ode.omega = kv.real("omega");
      } else {
        s.ode.gamma = kv.real("gamma");
      }
      s.ode.u0 = kv.real("u0");
      s.ode.v0 = kv.real("v0");
    }
    if (kv.has("epsilon")) s.epsilon = kv.real("epsilon");
    if (kv.has("order")) s.order = kv.count("order");
    if (kv.has("degree")) s.degree = kv.count("degree");
    if (kv.has("quad_size")) s.quad_size = kv.count("quad_size");
    kv.check_all_used();
    return s;
  }

  std::string serialize() const {
    using namespace cfgfmt;
    std::ostringstream os;
    os << kInstanceHeader << '\n' << "family = " << to_string(family) << '\n';
    if (family == Family::Pde1) {
      os << "amplitude = " << fmt(pde.amplitude) << "\nwavenumber = " << fmt(pde.wavenumber)
         << "\noffset = " << fmt(pde.offset) << '\n';
    } else {
      if (family == Family::Ode1) {
        os << "beta = " << fmt(ode.beta) << "\nomega = " << fmt(ode.omega) << '\n';
      } else {
        os << "gamma = " << fmt(ode.gamma) << '\n';
      }
      os << "u0 = " << fmt(ode.u0) << "\nv0 = " << fmt(ode.v0) << '\n';
    }
    if (epsilon) os << "epsilon = " << fmt(*epsilon) << '\n';
    if (order) os << "order = " << *order << '\n';
    if (degree) os << "degree = " << *degree << '\n';
    if (quad_size) os << "quad_size = " << *quad_size << '\n';
    return os.str();
  }

  /// Fills operator coefficients from the run configuration.
  OdeBenchmark ode_benchmark(const RunConfig& cfg) const {
    OdeBenchmark b = ode;
    b.delta = cfg.ode.delta;
    b.alpha = cfg.ode.alpha;
    b.t_end = cfg.ode.t_end;
    b.epsilon = settings(cfg).epsilon;
    return b;
  }

  PdeBenchmark pde_benchmark(const RunConfig& cfg) const {
    PdeBenchmark b = pde;
    b.diffusion = cfg.diffusion;
    b.delta = cfg.reaction_delta;
    b.epsilon = settings(cfg).epsilon;
    return b;
  }
};

}  // namespace chebpinn
