#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace t4g {

enum class ErrorCode {
  format,               // bad magic, unknown version, malformed JSON
  length,               // truncated payload or dimension/length mismatch
  validation,           // a type invariant does not hold
  io,                   // the filesystem refused
  out_of_bounds,        // a point lies outside the grid or image
  degenerate_query,     // zero-norm query feature
  invalid_argument,     // a precondition on a scalar argument failed
  track_count_mismatch, // prediction and ground truth disagree on track count
  undefined_rate,       // a metric with an empty denominator
  empty_input,          // an operation that needs at least one element got none
  non_finite,           // a loss term became NaN or Inf
};

/// Stable machine-readable name, e.g. "track-count mismatch" for
/// ErrorCode::track_count_mismatch. Used verbatim in CLI error lines.
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix that what() carries.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace t4g
