#pragma once

#include <string_view>

namespace flamesift::log {

enum class Level { error = 0, info = 1, debug = 2 };

/// Level from FLAMESIFT_LOG (error|info|debug); info when unset or unknown.
Level level();
void set_level(Level level);

void error(std::string_view msg);
void info(std::string_view msg);
void debug(std::string_view msg);

}  // namespace flamesift::log
