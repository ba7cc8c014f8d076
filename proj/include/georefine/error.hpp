#pragma once

#include <stdexcept>
#include <string>

namespace georefine {

enum class ErrorCode {
  invalid_argument,
  behind_camera,
  invalid_depth,
  resolution_mismatch,
  no_valid_pixels,
  missing_sources,
  degenerate_scale,
  ordering,
  snippet_unavailable,
  io,
  config,
  insufficient_data,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::behind_camera: return "behind camera";
    case ErrorCode::invalid_depth: return "invalid depth";
    case ErrorCode::resolution_mismatch: return "resolution mismatch";
    case ErrorCode::no_valid_pixels: return "no valid pixels";
    case ErrorCode::missing_sources: return "all source frames missing";
    case ErrorCode::degenerate_scale: return "degenerate scale";
    case ErrorCode::ordering: return "ordering violation";
    case ErrorCode::snippet_unavailable: return "snippet unavailable";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::config: return "config error";
    case ErrorCode::insufficient_data: return "insufficient data";
  }
  return "unknown";
}

/// Single exception type for the library; `code()` distinguishes failure kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace georefine
