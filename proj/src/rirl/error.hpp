#pragma once

#include <stdexcept>
#include <string>

namespace rirl {

/// Error categories surfaced through the C API as status codes and by the CLI as exit codes.
enum class ErrorCode : int {
  ok = 0,
  internal = 1,
  config = 2,
  data = 3,
  training = 4,
  exploration = 5,
  persistence = 6,
  shape = 7,
  estimation = 8,
  registry = 9,
  routing = 10,
  metric = 11,
  plot = 12,
  check = 13,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define RIRL_DEFINE_ERROR(Name, Code)                                                 \
  class Name : public Error {                                                         \
   public:                                                                            \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {}          \
  };

RIRL_DEFINE_ERROR(ConfigError, config)
RIRL_DEFINE_ERROR(DataError, data)
RIRL_DEFINE_ERROR(TrainingError, training)
RIRL_DEFINE_ERROR(ExplorationError, exploration)
RIRL_DEFINE_ERROR(PersistenceError, persistence)
RIRL_DEFINE_ERROR(ShapeError, shape)
RIRL_DEFINE_ERROR(EstimationError, estimation)
RIRL_DEFINE_ERROR(RegistryError, registry)
RIRL_DEFINE_ERROR(RoutingError, routing)
RIRL_DEFINE_ERROR(MetricError, metric)
RIRL_DEFINE_ERROR(PlotError, plot)
RIRL_DEFINE_ERROR(GradCheckError, check)

#undef RIRL_DEFINE_ERROR

}  // namespace rirl
