#include "prada/util/log.hpp"

#include <iostream>
#include <mutex>

namespace prada {
namespace {

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

bool& verbose_flag() {
  static bool v = false;
  return v;
}

LogSink& sink() {
  static LogSink s = [](LogLevel level, const std::string& msg) {
    if (level == LogLevel::kWarning) {
      std::cerr << "warning: " << msg << '\n';
    } else if (verbose_flag()) {
      std::cerr << msg << '\n';
    }
  };
  return s;
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard<std::mutex> lock(log_mutex());
  LogSink prev = std::move(sink());
  sink() = std::move(s);
  return prev;
}

void set_verbose(bool verbose) { verbose_flag() = verbose; }

void log_info(const std::string& message) {
  std::lock_guard<std::mutex> lock(log_mutex());
  if (sink()) sink()(LogLevel::kInfo, message);
}

void log_warning(const std::string& message) {
  std::lock_guard<std::mutex> lock(log_mutex());
  if (sink()) sink()(LogLevel::kWarning, message);
}

}  // namespace prada
