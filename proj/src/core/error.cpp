#include "cadfit/error.hpp"

namespace cadfit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::size_limit: return "size_limit";
    case ErrorCode::unobservable: return "unobservable";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::invalid_state: return "invalid_state";
    case ErrorCode::conflict: return "conflict";
  }
  return "unknown";
}

}  // namespace cadfit
