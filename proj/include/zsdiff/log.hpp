#pragma once

#include <atomic>
#include <functional>
#include <sstream>
#include <string>

namespace zsdiff::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3 };

void set_level(Level level);
Level level();

// Replaces the stderr sink; pass nullptr to restore it. Tests use this to count warnings.
using Sink = std::function<void(Level, const std::string&)>;
void set_sink(Sink sink);

void write(Level level, const std::string& message);

namespace detail {
template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

template <typename... Args>
void debug(const Args&... args) {
  if (level() <= Level::kDebug) write(Level::kDebug, detail::concat(args...));
}
template <typename... Args>
void info(const Args&... args) {
  if (level() <= Level::kInfo) write(Level::kInfo, detail::concat(args...));
}
template <typename... Args>
void warn(const Args&... args) {
  write(Level::kWarn, detail::concat(args...));
}
template <typename... Args>
void error(const Args&... args) {
  write(Level::kError, detail::concat(args...));
}

}  // namespace zsdiff::log
