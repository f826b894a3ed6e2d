#include "t4g/error.hpp"

namespace t4g {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::format: return "format error";
    case ErrorCode::length: return "length error";
    case ErrorCode::validation: return "validation error";
    case ErrorCode::io: return "io error";
    case ErrorCode::out_of_bounds: return "out-of-bounds";
    case ErrorCode::degenerate_query: return "degenerate query";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::track_count_mismatch: return "track-count mismatch";
    case ErrorCode::undefined_rate: return "undefined rate";
    case ErrorCode::empty_input: return "empty input";
    case ErrorCode::non_finite: return "non-finite loss";
  }
  return "unknown error";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace t4g
