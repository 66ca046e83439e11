#include "zsdiff/log.hpp"

#include <iostream>
#include <mutex>

namespace zsdiff::log {
namespace {

std::atomic<Level> g_level{Level::kInfo};
std::mutex g_mutex;
Sink g_sink;

const char* tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
  }
  return "?";
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void set_sink(Sink sink) {
  std::lock_guard lock(g_mutex);
  g_sink = std::move(sink);
}

void write(Level level, const std::string& message) {
  std::lock_guard lock(g_mutex);
  if (g_sink) {
    g_sink(level, message);
    return;
  }
  if (level < g_level.load()) return;
  std::cerr << "[" << tag(level) << "] " << message << '\n';
}

}  // namespace zsdiff::log
