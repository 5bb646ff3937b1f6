#include "reform/trainer/logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <string>

#include "reform/common/error.hpp"

namespace reform::trainer {

void set_log_level(std::string_view level) {
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw ConfigError("unknown log level '" + std::string(level) +
                      "' (expected error, info or debug)");
  }
}

void log_to_stderr() {
  static const auto logger = spdlog::stderr_color_mt("reform");
  spdlog::set_default_logger(logger);
}

}  // namespace reform::trainer
