// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace planforge {

enum class ErrorCode {
  kKindMismatch,
  kTaskMismatch,
  kPoolTooSmall,
  kEmptyAction,
  kInfeasibleBounds,
  kMissingTask,
  kIoFailure,
  kHashMismatch,
  kCorruptShard,
  kCursorManifestMismatch,
  kNoConsistentCheckpoint,
  kConfigMismatch,
  kTrainerFailure,
  kBadConfig,
};

const char* error_code_name(ErrorCode code);

// Hard failures (IO, violated preconditions, corrupted state). Data-level
// verdicts — validation violations, filter drops, unparseable predictions —
// are plain values, not exceptions.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace planforge
