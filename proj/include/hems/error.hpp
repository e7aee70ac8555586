// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hems {

enum class ErrorCode {
  kRange,
  kInfeasibleStart,
  kInfeasible,
  kContract,
  kParameter,
  kConfig,
  kParse,
  kData,
  kIo,
  kNotFound,
  kDuplicateSchedule,
  kSpecialistFailure,
  kBackendUnavailable,
  kRateLimited,
};

std::string_view to_string(ErrorCode code);

// Base exception for everything the library throws on purpose. Tool-level
// errors raised inside an orchestration run are caught by the dispatcher and
// turned into observations; they only escape to callers outside a run.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hems
