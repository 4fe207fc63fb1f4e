#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace visform {

/// Failure categories surfaced by the library. Each maps to a distinct
/// recovery action for the caller (gather more features, densify the graph,
/// fix the config, ...).
enum class ErrorCode {
  invalid_argument,
  degenerate,
  infeasible,
  no_parallax,
  ambiguous,
  no_consensus,
  unobservable,
  malformed_message,
  config,
  io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace visform
