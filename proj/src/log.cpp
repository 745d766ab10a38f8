#include "vrd/log.hpp"

#include <atomic>

namespace vrd {
namespace {
std::atomic<LogLevel> g_level{LogLevel::Quiet};
}

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

}  // namespace vrd
