#include "visform/error.hpp"

namespace visform {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::no_parallax: return "no parallax";
    case ErrorCode::ambiguous: return "ambiguous";
    case ErrorCode::no_consensus: return "no consensus";
    case ErrorCode::unobservable: return "unobservable";
    case ErrorCode::malformed_message: return "malformed message";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace visform
