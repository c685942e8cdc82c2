#include "dfi/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace dfi::log {
namespace {

std::atomic<int> g_level{static_cast<int>(Level::Info)};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mutex;

void emit(Level at, const char* tag, std::string_view message) {
  if (static_cast<int>(at) < g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << '[' << tag << "] " << message << '\n';
}

}  // namespace

void set_level(Level level) { g_level.store(static_cast<int>(level)); }
Level level() { return static_cast<Level>(g_level.load()); }

void debug(std::string_view message) { emit(Level::Debug, "debug", message); }
void info(std::string_view message) { emit(Level::Info, "info", message); }
void warn(std::string_view message) {
  ++g_warnings;
  emit(Level::Warning, "warning", message);
}
void error(std::string_view message) { emit(Level::Error, "error", message); }

std::size_t warning_count() { return g_warnings.load(); }
void reset_warning_count() { g_warnings.store(0); }

}  // namespace dfi::log
