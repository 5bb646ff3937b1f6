#define DOCTEST_CONFIG_IMPLEMENT
#include <cstdlib>

#include "doctest.h"
#include "reform/trainer/logging.hpp"

int main(int argc, char** argv) {
  // The CLI entry point reads its level from the environment.
  setenv("RFORM_LOG_LEVEL", "error", 0);
  reform::trainer::set_log_level("error");
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
