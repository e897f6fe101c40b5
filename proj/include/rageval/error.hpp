#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rageval {

enum class ErrorCode {
  kPrecondition,
  kNotFound,
  kCorruption,
  kConfig,
  kProtocol,
  kTransport,
  kDimensionDrift,
  kDomain,
  kIo,
  kStage,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every failure raised by the harness. The code decides
/// how the CLI maps the failure onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::kPrecondition, message);
}

}  // namespace rageval
