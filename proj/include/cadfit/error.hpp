#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cadfit {

enum class ErrorCode {
  invalid_argument,
  degenerate,
  parse_error,
  io_error,
  not_found,
  size_limit,
  unobservable,
  numeric,
  invalid_state,
  conflict,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library. `detail` carries machine-oriented
// context (a node path, a byte offset, a parameter name) when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace cadfit
