#pragma once

#include <cstddef>
#include <functional>
#include <string_view>

namespace dfi::log {

enum class Level { Debug = 0, Info = 1, Warning = 2, Error = 3, Silent = 4 };

void set_level(Level level);
Level level();

void debug(std::string_view message);
void info(std::string_view message);
void warn(std::string_view message);
void error(std::string_view message);

// Number of warnings emitted since process start (or the last reset), counted
// even when the level filters them from stderr.
std::size_t warning_count();
void reset_warning_count();

}  // namespace dfi::log
