#pragma once

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace ip {

// Verbosity comes from IP_LOG (debug | info); default info. Messages go to
// stderr so command output files stay clean.
enum class LogLevel { kInfo = 0, kDebug = 1 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("IP_LOG");
    return (env && std::strcmp(env, "debug") == 0) ? LogLevel::kDebug : LogLevel::kInfo;
  }();
  return level;
}

inline void log_info(const char* fmt, ...) {
  std::va_list args;
  va_start(args, fmt);
  std::fputs("[info] ", stderr);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
  va_end(args);
}

inline void log_debug(const char* fmt, ...) {
  if (log_level() != LogLevel::kDebug) return;
  std::va_list args;
  va_start(args, fmt);
  std::fputs("[debug] ", stderr);
  std::vfprintf(stderr, fmt, args);
  std::fputc('\n', stderr);
  va_end(args);
}

inline void log_info(const std::string& msg) { log_info("%s", msg.c_str()); }
inline void log_debug(const std::string& msg) { log_debug("%s", msg.c_str()); }

}  // namespace ip
