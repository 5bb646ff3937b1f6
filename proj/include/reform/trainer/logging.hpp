#pragma once

#include <string_view>

namespace reform::trainer {

// Accepts "error", "info" or "debug"; anything else throws ConfigError.
void set_log_level(std::string_view level);
// Routes progress logging to stderr so stdout carries only command output.
void log_to_stderr();

}  // namespace reform::trainer
