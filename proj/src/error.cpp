#include "tailflow/error.hpp"

namespace tailflow {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::out_of_range: return "out_of_range";
    case Errc::domain_error: return "domain_error";
    case Errc::non_finite: return "non_finite";
    case Errc::degenerate: return "degenerate";
    case Errc::io_error: return "io_error";
    case Errc::parse_error: return "parse_error";
    case Errc::schema_mismatch: return "schema_mismatch";
    case Errc::training_aborted: return "training_aborted";
  }
  return "unknown";
}

bool is_validation_error(Errc code) noexcept {
  switch (code) {
    case Errc::shape_mismatch:
    case Errc::invalid_argument:
    case Errc::out_of_range:
    case Errc::parse_error:
    case Errc::schema_mismatch:
      return true;
    default:
      return false;
  }
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

}  // namespace tailflow
