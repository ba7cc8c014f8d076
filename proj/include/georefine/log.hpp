#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace georefine::log {

enum class Level { error = 0, info = 1, debug = 2 };

/// Verbosity from GEOREFINE_LOG (error, info, debug); info when unset or unrecognized.
inline Level level_from_env() {
  const char* v = std::getenv("GEOREFINE_LOG");
  if (v == nullptr) return Level::info;
  const std::string_view s(v);
  if (s == "error") return Level::error;
  if (s == "debug") return Level::debug;
  return Level::info;
}

inline Level& threshold() {
  static Level level = level_from_env();
  return level;
}

inline void emit(Level lvl, std::string_view tag, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(threshold())) return;
  std::cerr << "[georefine " << tag << "] " << msg << '\n';
}

inline void error(const std::string& msg) { emit(Level::error, "error", msg); }
inline void warn(const std::string& msg) { emit(Level::info, "warn", msg); }
inline void info(const std::string& msg) { emit(Level::info, "info", msg); }
inline void debug(const std::string& msg) { emit(Level::debug, "debug", msg); }

}  // namespace georefine::log
