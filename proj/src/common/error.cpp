#include "reform/common/error.hpp"

namespace reform {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::precondition: return "precondition error";
    case ErrorKind::format: return "format error";
    case ErrorKind::config: return "config error";
    case ErrorKind::io: return "io error";
    case ErrorKind::usage: return "usage error";
  }
  return "error";
}

}  // namespace reform
