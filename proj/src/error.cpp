#include "qattack/error.hpp"

namespace qattack {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kModel: return "model";
    case ErrorKind::kTimeout: return "timeout";
    case ErrorKind::kHttpStatus: return "http-status";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kRuntime: return "runtime";
  }
  return "unknown";
}

}  // namespace qattack
