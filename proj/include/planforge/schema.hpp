// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace planforge {

// ---------------------------------------------------------------------------
// Task taxonomy. Enum order is the canonical order used by the sampler's
// inverse-CDF draw; do not reorder without bumping the schema version.

enum class TaskType {
  kVisualGroundingBox,
  kVisualGroundingPoint,
  kEgoViewMcq,
  kEgoViewOpen,
  kPlanningQa,
  kIndustrialCot,
};

inline constexpr std::array<TaskType, 6> kAllTasks = {
    TaskType::kVisualGroundingBox, TaskType::kVisualGroundingPoint,
    TaskType::kEgoViewMcq,         TaskType::kEgoViewOpen,
    TaskType::kPlanningQa,         TaskType::kIndustrialCot,
};

// String form is the lowercase hyphenated name, e.g. "visual-grounding-box".
std::string to_string(TaskType task);
std::optional<TaskType> parse_task_type(const std::string& text);

enum class SceneTag { kIndoor, kOutdoor, kUnknown };

std::string to_string(SceneTag tag);
std::optional<SceneTag> parse_scene_tag(const std::string& text);

// ---------------------------------------------------------------------------
// Visual input. Videos always carry a key-frame reference to their last
// frame; images never do.

enum class VisualKind { kImage, kVideo };

struct VisualInput {
  VisualKind kind = VisualKind::kImage;
  std::string uri;
  std::uint64_t frame_count = 0;  // 0 for images
  std::optional<std::uint64_t> key_frame_index;

  bool operator==(const VisualInput&) const = default;
};

// Sets key_frame_index to the last frame (frame_count - 1). Idempotent.
// Throws Error(kKindMismatch) for image inputs.
VisualInput attach_key_frame(VisualInput v);

// ---------------------------------------------------------------------------
// Supervision targets.

struct FreeText {
  std::vector<std::string> answers;  // nonempty
  bool operator==(const FreeText&) const = default;
};

struct OptionLetter {
  char letter = 'A';  // indexes into options: A -> 0
  std::vector<std::string> options;
  bool operator==(const OptionLetter&) const = default;
};

struct BoxSet {
  // [x0, y0, x1, y1], normalized to [0,1], x0 < x1 and y0 < y1
  std::vector<std::array<double, 4>> boxes;
  bool operator==(const BoxSet&) const = default;
};

struct PointSet {
  // [x, y] normalized to [0,1]; 1..10 points
  std::vector<std::array<double, 2>> points;
  bool operator==(const PointSet&) const = default;
};

using SupervisionTarget = std::variant<FreeText, OptionLetter, BoxSet, PointSet>;

// ---------------------------------------------------------------------------
// The unified, task-aware record every source normalizes into.

struct Sample {
  std::string id;  // unique within a corpus (enforced at ingest)
  TaskType task = TaskType::kPlanningQa;
  VisualInput visual;
  std::string instruction;
  SupervisionTarget target = FreeText{};
  std::string source_dataset;
  std::optional<SceneTag> scene_tag;

  bool operator==(const Sample&) const = default;
};

// ---------------------------------------------------------------------------
// Validation. Violations are data, not errors.

enum class ViolationCode {
  kIdEmpty,
  kInstructionEmpty,
  kImageFrameCount,   // image with frame_count != 0
  kImageKeyframe,     // image with a key_frame_index
  kVideoFrameCount,   // video with frame_count < 1
  kKeyframeMissing,   // video without key_frame_index
  kKeyframeNotLast,   // key_frame_index != frame_count - 1
  kTaskTargetMismatch,
  kVideoRequired,     // ego-view tasks need video input
  kAnswersEmpty,
  kOptionLetterRange,
  kBoxGeometry,       // x0 >= x1 or y0 >= y1
  kPointCount,        // point count outside 1..10
  kCoordRange,        // any coordinate outside [0,1]
};

const char* violation_code_name(ViolationCode code);

struct Violation {
  ViolationCode code;
  std::string detail;
};

struct ValidationVerdict {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(ViolationCode code) const;
};

ValidationVerdict validate_sample(const Sample& s);

// ---------------------------------------------------------------------------
// Canonical on-disk encoding: one compact JSON object per line, keys sorted,
// enum values lowercase. serialize(parse(serialize(s))) is byte-identical.

std::string serialize_sample(const Sample& s);

struct SampleParseError {
  std::string code;   // "SCHEMA_VIOLATION" | "MALFORMED_TEXT"
  std::string field;  // path of the offending field, when known
};

struct SampleParseResult {
  std::optional<Sample> sample;
  std::optional<SampleParseError> error;
  bool ok() const { return sample.has_value(); }
};

// strict = reject unknown fields (the default); lenient ingest relaxes it.
SampleParseResult parse_sample(const std::string& line, bool strict = true);

}  // namespace planforge
