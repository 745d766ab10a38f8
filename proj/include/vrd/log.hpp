#pragma once

#include <cstdio>
#include <utility>

#include <fmt/format.h>

namespace vrd {

/// Verbosity of log_info; warnings are always printed.
enum class LogLevel { Quiet, Info };

void set_log_level(LogLevel level);
LogLevel log_level();

template <typename... Args>
void log_info(fmt::format_string<Args...> format, Args&&... args) {
  if (log_level() == LogLevel::Info) {
    fmt::print(stderr, "[vrd] {}\n", fmt::format(format, std::forward<Args>(args)...));
  }
}

template <typename... Args>
void log_warn(fmt::format_string<Args...> format, Args&&... args) {
  fmt::print(stderr, "[vrd] warning: {}\n", fmt::format(format, std::forward<Args>(args)...));
}

}  // namespace vrd
