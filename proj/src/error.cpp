// SPDX-License-Identifier: Apache-2.0
#include "planforge/error.hpp"

namespace planforge {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kKindMismatch: return "KIND_MISMATCH";
    case ErrorCode::kTaskMismatch: return "TASK_MISMATCH";
    case ErrorCode::kPoolTooSmall: return "POOL_TOO_SMALL";
    case ErrorCode::kEmptyAction: return "EMPTY_ACTION";
    case ErrorCode::kInfeasibleBounds: return "INFEASIBLE_BOUNDS";
    case ErrorCode::kMissingTask: return "MISSING_TASK";
    case ErrorCode::kIoFailure: return "IO_FAILURE";
    case ErrorCode::kHashMismatch: return "HASH_MISMATCH";
    case ErrorCode::kCorruptShard: return "CORRUPT_SHARD";
    case ErrorCode::kCursorManifestMismatch: return "CURSOR_MANIFEST_MISMATCH";
    case ErrorCode::kNoConsistentCheckpoint: return "NO_CONSISTENT_CHECKPOINT";
    case ErrorCode::kConfigMismatch: return "CONFIG_MISMATCH";
    case ErrorCode::kTrainerFailure: return "TRAINER_FAILURE";
    case ErrorCode::kBadConfig: return "BAD_CONFIG";
  }
  return "UNKNOWN";
}

}  // namespace planforge
