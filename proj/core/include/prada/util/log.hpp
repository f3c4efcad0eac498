#pragma once

#include <functional>
#include <string>

namespace prada {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide sink (default: stderr, info suppressed unless
// verbose). Returns the previous sink.
LogSink set_log_sink(LogSink sink);
void set_verbose(bool verbose);

void log_info(const std::string& message);
void log_warning(const std::string& message);

}  // namespace prada
