#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace gendetect::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

// Verbosity comes from GENDETECT_LOG (quiet|info|debug); default is quiet.
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("GENDETECT_LOG");
    if (env == nullptr) return Level::quiet;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    if (std::strcmp(env, "info") == 0 || std::strcmp(env, "1") == 0) return Level::info;
    return Level::quiet;
  }();
  return lvl;
}

inline void info(const std::string& msg) {
  if (level() >= Level::info) std::fprintf(stderr, "[gendetect] %s\n", msg.c_str());
}

inline void debug(const std::string& msg) {
  if (level() >= Level::debug) std::fprintf(stderr, "[gendetect:debug] %s\n", msg.c_str());
}

inline void warn(const std::string& msg) {
  std::fprintf(stderr, "[gendetect] warning: %s\n", msg.c_str());
}

}  // namespace gendetect::log
