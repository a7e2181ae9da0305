#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tailflow {

enum class Errc {
  shape_mismatch,
  invalid_argument,
  out_of_range,
  domain_error,
  non_finite,
  degenerate,
  io_error,
  parse_error,
  schema_mismatch,
  training_aborted,
};

std::string_view to_string(Errc code) noexcept;

/// Validation errors map to CLI exit code 1, everything else to 2.
bool is_validation_error(Errc code) noexcept;

/// The single exception type thrown by the library. `code()` is stable and
/// machine-checkable; `what()` carries a human readable description that
/// names the offending shapes, indices or paths.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }
  /// The description without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

}  // namespace tailflow
