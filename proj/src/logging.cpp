#include "oraac/logging.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

namespace oraac {

namespace {

std::optional<LogLevel>& override_level()
{
    static std::optional<LogLevel> level;
    return level;
}

LogLevel level_from_env()
{
    const char* text = std::getenv("RAAC_LOG_LEVEL");
    if (!text)
        return LogLevel::info;
    const std::string name(text);
    if (name == "error")
        return LogLevel::error;
    if (name == "debug")
        return LogLevel::debug;
    return LogLevel::info;
}

void emit(LogLevel level, const char* tag, const std::string& message)
{
    if (static_cast<int>(level) <= static_cast<int>(log_level()))
        std::cerr << "[" << tag << "] " << message << '\n';
}

}  // namespace

LogLevel log_level()
{
    if (override_level())
        return *override_level();
    static const LogLevel from_env = level_from_env();
    return from_env;
}

void set_log_level(LogLevel level) { override_level() = level; }

void log_error(const std::string& message) { emit(LogLevel::error, "error", message); }
void log_info(const std::string& message) { emit(LogLevel::info, "info", message); }
void log_debug(const std::string& message) { emit(LogLevel::debug, "debug", message); }

}  // namespace oraac
