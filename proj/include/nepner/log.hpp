#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace nepner {

enum class LogLevel { kDebug, kInfo, kWarning, kError };

using LogSink = std::function<void(LogLevel, std::string_view)>;

// Replaces the process-wide sink (default: warnings and errors to stderr).
// Passing an empty function silences logging.
void set_log_sink(LogSink sink);
void log(LogLevel level, std::string_view message);
inline void log_warning(std::string_view m) { log(LogLevel::kWarning, m); }
inline void log_info(std::string_view m) { log(LogLevel::kInfo, m); }

// Collects warnings produced by a single operation so callers can inspect
// them; every entry is also forwarded to the log sink.
struct Diagnostics {
  std::vector<std::string> messages;
  void warn(std::string message);
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) {
    diag->warn(std::move(message));
  } else {
    log_warning(message);
  }
}

}  // namespace nepner
