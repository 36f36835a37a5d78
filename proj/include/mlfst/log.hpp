#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>

namespace mlfst {

// Verbosity is controlled by the MLFST_LOG environment variable:
// quiet | error | warn | info | debug. Default is warn.
enum class LogLevel : int { quiet = 0, error = 1, warn = 2, info = 3, debug = 4 };

inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("MLFST_LOG");
    std::string v = env ? env : "warn";
    if (v == "quiet") return LogLevel::quiet;
    if (v == "error") return LogLevel::error;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

inline void log_line(LogLevel lvl, const std::string& msg) {
  static std::mutex mu;
  if (static_cast<int>(lvl) > static_cast<int>(log_level())) return;
  const char* tag = lvl == LogLevel::error ? "error"
                    : lvl == LogLevel::warn ? "warn"
                    : lvl == LogLevel::info ? "info"
                                            : "debug";
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "[mlfst:" << tag << "] " << msg << "\n";
}

inline void log_error(const std::string& m) { log_line(LogLevel::error, m); }
inline void log_warn(const std::string& m) { log_line(LogLevel::warn, m); }
inline void log_info(const std::string& m) { log_line(LogLevel::info, m); }
inline void log_debug(const std::string& m) { log_line(LogLevel::debug, m); }

}  // namespace mlfst
