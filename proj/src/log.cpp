#include "flamesift/log.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace flamesift::log {

namespace {

Level from_env() {
    const char* v = std::getenv("FLAMESIFT_LOG");
    if (!v) return Level::info;
    if (std::strcmp(v, "error") == 0) return Level::error;
    if (std::strcmp(v, "debug") == 0) return Level::debug;
    return Level::info;
}

std::atomic<int>& current() {
    static std::atomic<int> lvl{static_cast<int>(from_env())};
    return lvl;
}

void emit(Level at, const char* tag, std::string_view msg) {
    if (static_cast<int>(at) > current().load()) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[" << tag << "] " << msg << '\n';
}

}  // namespace

Level level() { return static_cast<Level>(current().load()); }
void set_level(Level l) { current().store(static_cast<int>(l)); }

void error(std::string_view msg) { emit(Level::error, "error", msg); }
void info(std::string_view msg) { emit(Level::info, "info", msg); }
void debug(std::string_view msg) { emit(Level::debug, "debug", msg); }

}  // namespace flamesift::log
