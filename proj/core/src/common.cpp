#include "iclab/common.hpp"

namespace iclab {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::diverged: return "diverged";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::io: return "io";
    case ErrorKind::runtime: return "runtime";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

void require_dims(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::dimension, what);
}

}  // namespace iclab
