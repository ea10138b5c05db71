#pragma once

// On-disk formats: versioned little-endian binaries with an FNV-1a checksum
// trailer for bodies and series solutions, JSON sidecars for everything a
// reader needs to rebuild the one-shot system.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "chebpinn/error.hpp"
#include "chebpinn/featurenet.hpp"
#include "chebpinn/oneshot.hpp"
#include "chebpinn/operator.hpp"
#include "chebpinn/pretrain.hpp"
#include "json.hpp"

namespace chebpinn {

namespace io {

inline constexpr std::uint32_t kBodyVersion = 1;
inline constexpr std::uint32_t kSolutionVersion = 1;
inline constexpr std::string_view kBodyMagic = "CPNBODY\0";
inline constexpr std::string_view kSolutionMagic = "CPNSOLN\0";

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void raw(std::string_view s) { buf_.append(s); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void u64s(std::span<const std::size_t> v) {
    u64(v.size());
    for (auto x : v) u64(x);
  }
  /// Appends the checksum of everything written so far and returns the bytes.
  std::string finish() {
    const std::uint64_t sum = fnv1a(buf_);
    u64(sum);
    return std::move(buf_);
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string bytes, std::string_view what) : what_(what) {
    if (bytes.size() < 8) corrupt("file too short");
    const std::string_view body(bytes.data(), bytes.size() - 8);
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i)
      stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body.size() + i])) << (8 * i);
    if (fnv1a(body) != stored) corrupt("checksum mismatch");
    bytes.resize(body.size());
    buf_ = std::move(bytes);
  }

  void expect(std::string_view magic) {
    if (buf_.compare(pos_, magic.size(), magic) != 0) corrupt("bad magic");
    pos_ += magic.size();
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::vector<double> f64s() {
    const auto n = u64();
    if (n > (buf_.size() - pos_) / 8) corrupt("length field exceeds file size");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::vector<std::size_t> u64s() {
    const auto n = u64();
    if (n > (buf_.size() - pos_) / 8) corrupt("length field exceeds file size");
    std::vector<std::size_t> v(n);
    for (auto& x : v) x = u64();
    return v;
  }
  void done() const {
    if (pos_ != buf_.size()) corrupt("trailing bytes");
  }
  [[noreturn]] void corrupt(const std::string& why) const { fail(ErrorCode::CorruptFile, std::string(what_) + ": " + why); }

 private:
  std::uint64_t get(int n) {
    if (pos_ + static_cast<std::size_t>(n) > buf_.size()) corrupt("unexpected end of data");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string buf_;
  std::size_t pos_ = 0;
  std::string_view what_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::InvalidArgument, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, std::string_view bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::InvalidArgument, "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace io

// ---------------------------------------------------------------------------
// Body

inline std::string encode_body(const BodyParams& body) {
  const BodyConfig& c = body.config;
  io::Writer w;
  w.raw(io::kBodyMagic);
  w.u32(io::kBodyVersion);
  w.u64(c.input_dim);
  w.u64s(c.hidden);
  w.u64(c.feature_dim);
  w.u64(c.state_dim);
  w.u32(0);  // activation: silu
  w.u64(c.seed);
  w.f64s(c.domain_lower);
  w.f64s(c.domain_upper);
  w.f64s(body.values);
  return w.finish();
}

inline BodyParams decode_body(std::string bytes) {
  io::Reader r(std::move(bytes), "body file");
  r.expect(io::kBodyMagic);
  if (const auto v = r.u32(); v != io::kBodyVersion) r.corrupt("unsupported version " + std::to_string(v));
  BodyParams body;
  BodyConfig& c = body.config;
  c.input_dim = r.u64();
  c.hidden = r.u64s();
  c.feature_dim = r.u64();
  c.state_dim = r.u64();
  if (r.u32() != 0) r.corrupt("unknown activation");
  c.seed = r.u64();
  c.domain_lower = r.f64s();
  c.domain_upper = r.f64s();
  body.values = r.f64s();
  r.done();
  try {
    c.validate();
  } catch (const Error& e) {
    r.corrupt(std::string("invalid config: ") + e.what());
  }
  if (body.values.size() != c.parameter_count()) r.corrupt("parameter count does not match config");
  return body;
}

inline void save_body(const std::filesystem::path& p, const BodyParams& body) { io::write_file(p, encode_body(body)); }
inline BodyParams load_body(const std::filesystem::path& p) { return decode_body(io::read_file(p)); }

// ---------------------------------------------------------------------------
// Feature map sidecar

inline nlohmann::json operator_to_json(const LinearOperatorSpec& op) {
  return {{"kind", op.kind == OperatorKind::Ode2nd ? "ode2nd" : "diffusion"},
          {"delta", op.delta},
          {"alpha", op.alpha},
          {"diffusion", op.diffusion}};
}

inline LinearOperatorSpec operator_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind");
  if (kind == "ode2nd") return LinearOperatorSpec::ode2nd(j.at("delta"), j.at("alpha"));
  if (kind == "diffusion") return LinearOperatorSpec::diffusion_op(j.at("diffusion"));
  fail(ErrorCode::CorruptFile, "unknown operator kind " + kind);
}

/// Writes <stem>.body and <stem>.json.
inline void save_feature_map(const std::filesystem::path& stem, const FeatureMap& fm) {
  std::filesystem::path body_path = stem;
  body_path += ".body";
  std::filesystem::path json_path = stem;
  json_path += ".json";
  save_body(body_path, fm.body);
  nlohmann::json j;
  j["format"] = "chebpinn-feature-map";
  j["version"] = 1;
  j["body_file"] = body_path.filename().string();
  j["family"] = fm.family;
  j["bundle_seed"] = fm.bundle_seed;
  j["operator"] = operator_to_json(fm.op);
  j["weights"] = {{"pde", fm.weights.pde}, {"bc", fm.weights.bc}, {"data", fm.weights.data}};
  j["body"] = {{"input_dim", fm.body.config.input_dim},
               {"hidden", fm.body.config.hidden},
               {"feature_dim", fm.body.config.feature_dim},
               {"state_dim", fm.body.config.state_dim},
               {"activation", "silu"},
               {"seed", fm.body.config.seed}};
  j["interior"] = {{"rows", fm.interior.rows()}, {"cols", fm.interior.cols()}, {"entries", fm.interior.entries()}};
  nlohmann::json cons = nlohmann::json::array();
  for (const auto& c : fm.constraints) cons.push_back({{"point", c.point}, {"component", c.component}});
  j["constraints"] = std::move(cons);
  io::write_file(json_path, j.dump(1) + "\n");
}

/// Loads from the sidecar path (or the stem; ".json" is appended if missing).
inline FeatureMap load_feature_map(const std::filesystem::path& path) {
  std::filesystem::path json_path = path;
  if (json_path.extension() != ".json") json_path += ".json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(json_path));
    if (j.at("format") != "chebpinn-feature-map" || j.at("version") != 1) {
      fail(ErrorCode::CorruptFile, json_path.string() + ": not a version-1 feature map sidecar");
    }
    FeatureMap fm;
    fm.body = load_body(json_path.parent_path() / j.at("body_file").get<std::string>());
    fm.family = j.at("family");
    fm.bundle_seed = j.at("bundle_seed");
    fm.op = operator_from_json(j.at("operator"));
    fm.weights = {j.at("weights").at("pde"), j.at("weights").at("bc"), j.at("weights").at("data")};
    const auto& in = j.at("interior");
    fm.interior = Matrix(in.at("rows"), in.at("cols"), in.at("entries").get<std::vector<double>>());
    for (const auto& c : j.at("constraints"))
      fm.constraints.push_back({c.at("point").get<std::vector<double>>(), c.at("component").get<std::size_t>()});
    return fm;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptFile, json_path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Series solution

inline std::string encode_solution(const SeriesSolution& sol) {
  io::Writer w;
  w.raw(io::kSolutionMagic);
  w.u32(io::kSolutionVersion);
  w.f64(sol.epsilon);
  w.u64(sol.heads.size());
  for (const auto& h : sol.heads) w.f64s(h);
  return w.finish();
}

inline SeriesSolution decode_solution(std::string bytes) {
  io::Reader r(std::move(bytes), "solution file");
  r.expect(io::kSolutionMagic);
  if (const auto v = r.u32(); v != io::kSolutionVersion) r.corrupt("unsupported version " + std::to_string(v));
  SeriesSolution sol;
  sol.epsilon = r.f64();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) sol.heads.push_back(r.f64s());
  r.done();
  return sol;
}

inline nlohmann::json diagnostics_json(const SeriesSolution& sol) {
  nlohmann::json orders = nlohmann::json::array();
  for (std::size_t j = 0; j < sol.diagnostics.rhs_norms.size(); ++j)
    orders.push_back({{"order", j}, {"rhs_norm", sol.diagnostics.rhs_norms[j]}});
  return {{"epsilon", sol.epsilon},
          {"order", sol.order()},
          {"online_seconds", sol.diagnostics.seconds},
          {"range_warnings", sol.diagnostics.range_warnings},
          {"final_out_of_range", sol.diagnostics.final_out_of_range},
          {"factorizations", sol.diagnostics.factorizations},
          {"orders", std::move(orders)}};
}

/// Writes <stem>.sol and <stem>.json.
inline void save_solution(const std::filesystem::path& stem, const SeriesSolution& sol) {
  std::filesystem::path bin = stem;
  bin += ".sol";
  std::filesystem::path js = stem;
  js += ".json";
  io::write_file(bin, encode_solution(sol));
  io::write_file(js, diagnostics_json(sol).dump(1) + "\n");
}

inline SeriesSolution load_solution(const std::filesystem::path& bin) { return decode_solution(io::read_file(bin)); }

}  // namespace chebpinn
