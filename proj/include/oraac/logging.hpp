#pragma once

// Minimal stderr logging. The level comes from RAAC_LOG_LEVEL
// (error, info or debug; default info).

#include <string>

namespace oraac {

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level();
void set_log_level(LogLevel level);

void log_error(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace oraac
