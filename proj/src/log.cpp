#include "nepner/log.hpp"

#include <iostream>
#include <mutex>

namespace nepner {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& sink() {
  static LogSink s = [](LogLevel level, std::string_view msg) {
    if (level < LogLevel::kWarning) return;
    std::cerr << (level == LogLevel::kError ? "error: " : "warning: ") << msg << '\n';
  };
  return s;
}

}  // namespace

void set_log_sink(LogSink s) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  sink() = std::move(s);
}

void log(LogLevel level, std::string_view message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  if (sink()) sink()(level, message);
}

void Diagnostics::warn(std::string message) {
  log_warning(message);
  messages.push_back(std::move(message));
}

}  // namespace nepner
