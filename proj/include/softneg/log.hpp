#pragma once

// Minimal stderr logger. Verbosity comes from SOFTNEG_LOG
// (error|warn|info|debug, default warn).

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>

namespace softneg::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline Level parse_level(std::string_view s) {
  if (s == "error") return Level::Error;
  if (s == "info") return Level::Info;
  if (s == "debug") return Level::Debug;
  return Level::Warn;
}

inline Level& threshold() {
  static Level level = [] {
    const char* env = std::getenv("SOFTNEG_LOG");
    return env ? parse_level(env) : Level::Warn;
  }();
  return level;
}

inline bool enabled(Level l) { return static_cast<int>(l) <= static_cast<int>(threshold()); }

template <class... Args>
void write(Level l, const Args&... args) {
  if (!enabled(l)) return;
  static std::mutex mu;
  std::ostringstream os;
  constexpr const char* tags[] = {"error", "warn", "info", "debug"};
  os << "[softneg " << tags[static_cast<int>(l)] << "] ";
  (os << ... << args);
  os << '\n';
  std::lock_guard lock(mu);
  std::cerr << os.str();
}

template <class... Args> void error(const Args&... a) { write(Level::Error, a...); }
template <class... Args> void warn(const Args&... a) { write(Level::Warn, a...); }
template <class... Args> void info(const Args&... a) { write(Level::Info, a...); }
template <class... Args> void debug(const Args&... a) { write(Level::Debug, a...); }

}  // namespace softneg::log
