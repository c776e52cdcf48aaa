#include "eqq/errors.hpp"

namespace eqq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyMeasure: return "EmptyMeasure";
    case ErrorCode::TailTooHeavy: return "TailTooHeavy";
    case ErrorCode::SolverLimitExceeded: return "SolverLimitExceeded";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::InsufficientMass: return "InsufficientMass";
    case ErrorCode::TooCoarse: return "TooCoarse";
    case ErrorCode::EmptySweep: return "EmptySweep";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::ExponentOutOfRange: return "ExponentOutOfRange";
    case ErrorCode::Internal: return "Internal";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::EmptyMeasure:
    case ErrorCode::TailTooHeavy:
    case ErrorCode::OutOfDomain:
    case ErrorCode::ExponentOutOfRange:
    case ErrorCode::Io:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

void fail(ErrorCode code, const std::string& detail) { throw Error(code, detail); }

}  // namespace eqq
