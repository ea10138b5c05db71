#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chebpinn {

enum class ErrorCode {
  NonFactorizable,
  NotSymmetric,
  DimensionMismatch,
  RankDeficient,
  NonFiniteSample,
  GridLengthMismatch,
  ShapeMismatch,
  DegenerateGeometricSum,
  DivergedLoss,
  StepFailure,
  PoleInReaction,
  InvalidArgument,
  CorruptFile,
  ConfigError,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFactorizable: return "NonFactorizable";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    case ErrorCode::GridLengthMismatch: return "GridLengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateGeometricSum: return "DegenerateGeometricSum";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::StepFailure: return "StepFailure";
    case ErrorCode::PoleInReaction: return "PoleInReaction";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace chebpinn
