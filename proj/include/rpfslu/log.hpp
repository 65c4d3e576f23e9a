#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace rpfslu::log {

enum class Level { quiet = 0, warn = 1, info = 2, debug = 3 };

/// Verbosity from RPFSLU_LOG (quiet|warn|info|debug), default warn.
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("RPFSLU_LOG");
    if (!env) return Level::warn;
    const std::string_view v(env);
    if (v == "quiet") return Level::quiet;
    if (v == "info") return Level::info;
    if (v == "debug") return Level::debug;
    return Level::warn;
  }();
  return lvl;
}

inline void emit(Level at, std::string_view tag, const std::string& msg) {
  if (static_cast<int>(level()) >= static_cast<int>(at)) std::cerr << "[" << tag << "] " << msg << '\n';
}

inline void warn(const std::string& msg) { emit(Level::warn, "warn", msg); }
inline void info(const std::string& msg) { emit(Level::info, "info", msg); }
inline void debug(const std::string& msg) { emit(Level::debug, "debug", msg); }

}  // namespace rpfslu::log
