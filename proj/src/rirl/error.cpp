#include "rirl/error.hpp"

namespace rirl {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ok: return "ok";
    case ErrorCode::internal: return "internal";
    case ErrorCode::config: return "config";
    case ErrorCode::data: return "data";
    case ErrorCode::training: return "training";
    case ErrorCode::exploration: return "exploration";
    case ErrorCode::persistence: return "persistence";
    case ErrorCode::shape: return "shape";
    case ErrorCode::estimation: return "estimation";
    case ErrorCode::registry: return "registry";
    case ErrorCode::routing: return "routing";
    case ErrorCode::metric: return "metric";
    case ErrorCode::plot: return "plot";
    case ErrorCode::check: return "check";
  }
  return "unknown";
}

}  // namespace rirl
