#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eqq {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  EmptyMeasure,
  TailTooHeavy,
  SolverLimitExceeded,
  TooLarge,
  OutOfDomain,
  InsufficientMass,
  TooCoarse,
  EmptySweep,
  DegenerateFit,
  ExponentOutOfRange,
  Internal,
  Io,
};

std::string_view to_string(ErrorCode code);

// Errors that come from bad input rather than a failed computation.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& detail);

inline void require(bool ok, ErrorCode code, const std::string& detail) {
  if (!ok) fail(code, detail);
}

}  // namespace eqq
