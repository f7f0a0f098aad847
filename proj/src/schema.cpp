// SPDX-License-Identifier: Apache-2.0
#include "planforge/schema.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "planforge/error.hpp"

namespace planforge {

using nlohmann::json;

std::string to_string(TaskType task) {
  switch (task) {
    case TaskType::kVisualGroundingBox: return "visual-grounding-box";
    case TaskType::kVisualGroundingPoint: return "visual-grounding-point";
    case TaskType::kEgoViewMcq: return "ego-view-mcq";
    case TaskType::kEgoViewOpen: return "ego-view-open";
    case TaskType::kPlanningQa: return "planning-qa";
    case TaskType::kIndustrialCot: return "industrial-cot";
  }
  return "unknown";
}

std::optional<TaskType> parse_task_type(const std::string& text) {
  for (TaskType t : kAllTasks) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

std::string to_string(SceneTag tag) {
  switch (tag) {
    case SceneTag::kIndoor: return "indoor";
    case SceneTag::kOutdoor: return "outdoor";
    case SceneTag::kUnknown: return "unknown";
  }
  return "unknown";
}

std::optional<SceneTag> parse_scene_tag(const std::string& text) {
  if (text == "indoor") return SceneTag::kIndoor;
  if (text == "outdoor") return SceneTag::kOutdoor;
  if (text == "unknown") return SceneTag::kUnknown;
  return std::nullopt;
}

VisualInput attach_key_frame(VisualInput v) {
  if (v.kind != VisualKind::kVideo) {
    throw Error(ErrorCode::kKindMismatch, "attach_key_frame requires a video input");
  }
  if (v.frame_count < 1) {
    throw Error(ErrorCode::kKindMismatch, "video input must have frame_count >= 1");
  }
  v.key_frame_index = v.frame_count - 1;
  return v;
}

const char* violation_code_name(ViolationCode code) {
  switch (code) {
    case ViolationCode::kIdEmpty: return "ID_EMPTY";
    case ViolationCode::kInstructionEmpty: return "INSTRUCTION_EMPTY";
    case ViolationCode::kImageFrameCount: return "IMAGE_FRAME_COUNT";
    case ViolationCode::kImageKeyframe: return "IMAGE_KEYFRAME";
    case ViolationCode::kVideoFrameCount: return "VIDEO_FRAME_COUNT";
    case ViolationCode::kKeyframeMissing: return "KEYFRAME_MISSING";
    case ViolationCode::kKeyframeNotLast: return "KEYFRAME_NOT_LAST";
    case ViolationCode::kTaskTargetMismatch: return "TASK_TARGET_MISMATCH";
    case ViolationCode::kVideoRequired: return "VIDEO_REQUIRED";
    case ViolationCode::kAnswersEmpty: return "ANSWERS_EMPTY";
    case ViolationCode::kOptionLetterRange: return "OPTION_LETTER_RANGE";
    case ViolationCode::kBoxGeometry: return "BOX_GEOMETRY";
    case ViolationCode::kPointCount: return "POINT_COUNT";
    case ViolationCode::kCoordRange: return "COORD_RANGE";
  }
  return "UNKNOWN";
}

bool ValidationVerdict::has(ViolationCode code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [code](const Violation& v) { return v.code == code; });
}

namespace {

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

void check_visual(const Sample& s, std::vector<Violation>& out) {
  const VisualInput& v = s.visual;
  if (v.kind == VisualKind::kImage) {
    if (v.frame_count != 0) {
      out.push_back({ViolationCode::kImageFrameCount, "image frame_count must be 0"});
    }
    if (v.key_frame_index.has_value()) {
      out.push_back({ViolationCode::kImageKeyframe, "image must not carry key_frame_index"});
    }
  } else {
    if (v.frame_count < 1) {
      out.push_back({ViolationCode::kVideoFrameCount, "video frame_count must be >= 1"});
    }
    if (!v.key_frame_index.has_value()) {
      out.push_back({ViolationCode::kKeyframeMissing, "video must carry its last frame"});
    } else if (v.frame_count >= 1 && *v.key_frame_index != v.frame_count - 1) {
      out.push_back({ViolationCode::kKeyframeNotLast,
                     "key_frame_index must equal frame_count - 1"});
    }
  }
}

void check_target(const Sample& s, std::vector<Violation>& out) {
  bool compatible = false;
  switch (s.task) {
    case TaskType::kVisualGroundingBox:
      compatible = std::holds_alternative<BoxSet>(s.target);
      break;
    case TaskType::kVisualGroundingPoint:
      compatible = std::holds_alternative<PointSet>(s.target);
      break;
    case TaskType::kEgoViewMcq:
      compatible = std::holds_alternative<OptionLetter>(s.target);
      break;
    default:
      compatible = std::holds_alternative<FreeText>(s.target);
      break;
  }
  if (!compatible) {
    out.push_back({ViolationCode::kTaskTargetMismatch,
                   "target variant incompatible with task " + to_string(s.task)});
  }

  if (const auto* ft = std::get_if<FreeText>(&s.target)) {
    if (ft->answers.empty()) {
      out.push_back({ViolationCode::kAnswersEmpty, "answer set must be nonempty"});
    }
  } else if (const auto* ol = std::get_if<OptionLetter>(&s.target)) {
    int index = ol->letter - 'A';
    if (ol->letter < 'A' || ol->letter > 'Z' ||
        index >= static_cast<int>(ol->options.size())) {
      out.push_back({ViolationCode::kOptionLetterRange,
                     "letter does not index into options"});
    }
  } else if (const auto* bs = std::get_if<BoxSet>(&s.target)) {
    for (const auto& b : bs->boxes) {
      if (!in_unit(b[0]) || !in_unit(b[1]) || !in_unit(b[2]) || !in_unit(b[3])) {
        out.push_back({ViolationCode::kCoordRange, "box coordinate outside [0,1]"});
        break;
      }
    }
    for (const auto& b : bs->boxes) {
      if (!(b[0] < b[2]) || !(b[1] < b[3])) {
        out.push_back({ViolationCode::kBoxGeometry, "box must satisfy x0<x1 and y0<y1"});
        break;
      }
    }
  } else if (const auto* ps = std::get_if<PointSet>(&s.target)) {
    if (ps->points.empty() || ps->points.size() > 10) {
      out.push_back({ViolationCode::kPointCount,
                     "point count " + std::to_string(ps->points.size()) +
                         " outside 1..10"});
    }
    for (const auto& p : ps->points) {
      if (!in_unit(p[0]) || !in_unit(p[1])) {
        out.push_back({ViolationCode::kCoordRange, "point coordinate outside [0,1]"});
        break;
      }
    }
  }
}

}  // namespace

ValidationVerdict validate_sample(const Sample& s) {
  ValidationVerdict verdict;
  auto& out = verdict.violations;
  if (s.id.empty()) out.push_back({ViolationCode::kIdEmpty, "id must be nonempty"});
  if (s.instruction.empty()) {
    out.push_back({ViolationCode::kInstructionEmpty, "instruction must be nonempty"});
  }
  check_visual(s, out);
  check_target(s, out);
  if ((s.task == TaskType::kEgoViewMcq || s.task == TaskType::kEgoViewOpen) &&
      s.visual.kind != VisualKind::kVideo) {
    out.push_back({ViolationCode::kVideoRequired, "ego-view tasks require video input"});
  }
  return verdict;
}

// ---------------------------------------------------------------------------
// JSON encoding

namespace {

json visual_to_json(const VisualInput& v) {
  json j;
  j["kind"] = v.kind == VisualKind::kImage ? "image" : "video";
  j["uri"] = v.uri;
  j["frame_count"] = v.frame_count;
  if (v.key_frame_index.has_value()) j["key_frame_index"] = *v.key_frame_index;
  return j;
}

json target_to_json(const SupervisionTarget& t) {
  json j;
  if (const auto* ft = std::get_if<FreeText>(&t)) {
    j["kind"] = "free-text";
    j["answers"] = ft->answers;
  } else if (const auto* ol = std::get_if<OptionLetter>(&t)) {
    j["kind"] = "option-letter";
    j["letter"] = std::string(1, ol->letter);
    j["options"] = ol->options;
  } else if (const auto* bs = std::get_if<BoxSet>(&t)) {
    j["kind"] = "box-set";
    j["boxes"] = bs->boxes;
  } else if (const auto* ps = std::get_if<PointSet>(&t)) {
    j["kind"] = "point-set";
    j["points"] = ps->points;
  }
  return j;
}

// Allowed key sets for strict parsing.
const std::vector<std::string> kSampleKeys = {
    "id", "task", "visual", "instruction", "target", "source_dataset", "scene_tag"};
const std::vector<std::string> kVisualKeys = {"kind", "uri", "frame_count",
                                              "key_frame_index"};

SampleParseError schema_err(const std::string& field) {
  return {"SCHEMA_VIOLATION", field};
}

bool keys_allowed(const json& obj, const std::vector<std::string>& allowed,
                  std::string* offender) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      *offender = it.key();
      return false;
    }
  }
  return true;
}

std::optional<VisualInput> parse_visual(const json& j, bool strict,
                                        SampleParseError* err) {
  if (!j.is_object()) {
    *err = schema_err("visual");
    return std::nullopt;
  }
  std::string offender;
  if (strict && !keys_allowed(j, kVisualKeys, &offender)) {
    *err = schema_err("visual." + offender);
    return std::nullopt;
  }
  VisualInput v;
  if (!j.contains("kind") || !j["kind"].is_string()) {
    *err = schema_err("visual.kind");
    return std::nullopt;
  }
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "image") {
    v.kind = VisualKind::kImage;
  } else if (kind == "video") {
    v.kind = VisualKind::kVideo;
  } else {
    *err = schema_err("visual.kind");
    return std::nullopt;
  }
  if (!j.contains("uri") || !j["uri"].is_string()) {
    *err = schema_err("visual.uri");
    return std::nullopt;
  }
  v.uri = j["uri"].get<std::string>();
  if (!j.contains("frame_count") || !j["frame_count"].is_number_unsigned()) {
    *err = schema_err("visual.frame_count");
    return std::nullopt;
  }
  v.frame_count = j["frame_count"].get<std::uint64_t>();
  if (j.contains("key_frame_index")) {
    if (!j["key_frame_index"].is_number_unsigned()) {
      *err = schema_err("visual.key_frame_index");
      return std::nullopt;
    }
    v.key_frame_index = j["key_frame_index"].get<std::uint64_t>();
  }
  return v;
}

template <std::size_t N>
std::optional<std::vector<std::array<double, N>>> parse_coord_list(const json& j) {
  if (!j.is_array()) return std::nullopt;
  std::vector<std::array<double, N>> out;
  out.reserve(j.size());
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != N) return std::nullopt;
    std::array<double, N> coords{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!row[i].is_number()) return std::nullopt;
      coords[i] = row[i].get<double>();
    }
    out.push_back(coords);
  }
  return out;
}

std::optional<SupervisionTarget> parse_target(const json& j, bool strict,
                                              SampleParseError* err) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    *err = schema_err("target.kind");
    return std::nullopt;
  }
  const std::string kind = j["kind"].get<std::string>();
  std::string offender;
  if (kind == "free-text") {
    if (strict && !keys_allowed(j, {"kind", "answers"}, &offender)) {
      *err = schema_err("target." + offender);
      return std::nullopt;
    }
    if (!j.contains("answers") || !j["answers"].is_array()) {
      *err = schema_err("target.answers");
      return std::nullopt;
    }
    FreeText ft;
    for (const auto& a : j["answers"]) {
      if (!a.is_string()) {
        *err = schema_err("target.answers");
        return std::nullopt;
      }
      ft.answers.push_back(a.get<std::string>());
    }
    return SupervisionTarget{ft};
  }
  if (kind == "option-letter") {
    if (strict && !keys_allowed(j, {"kind", "letter", "options"}, &offender)) {
      *err = schema_err("target." + offender);
      return std::nullopt;
    }
    if (!j.contains("letter") || !j["letter"].is_string() ||
        j["letter"].get<std::string>().size() != 1) {
      *err = schema_err("target.letter");
      return std::nullopt;
    }
    if (!j.contains("options") || !j["options"].is_array()) {
      *err = schema_err("target.options");
      return std::nullopt;
    }
    OptionLetter ol;
    ol.letter = j["letter"].get<std::string>()[0];
    for (const auto& o : j["options"]) {
      if (!o.is_string()) {
        *err = schema_err("target.options");
        return std::nullopt;
      }
      ol.options.push_back(o.get<std::string>());
    }
    return SupervisionTarget{ol};
  }
  if (kind == "box-set") {
    if (strict && !keys_allowed(j, {"kind", "boxes"}, &offender)) {
      *err = schema_err("target." + offender);
      return std::nullopt;
    }
    if (!j.contains("boxes")) {
      *err = schema_err("target.boxes");
      return std::nullopt;
    }
    auto boxes = parse_coord_list<4>(j["boxes"]);
    if (!boxes) {
      *err = schema_err("target.boxes");
      return std::nullopt;
    }
    return SupervisionTarget{BoxSet{std::move(*boxes)}};
  }
  if (kind == "point-set") {
    if (strict && !keys_allowed(j, {"kind", "points"}, &offender)) {
      *err = schema_err("target." + offender);
      return std::nullopt;
    }
    if (!j.contains("points")) {
      *err = schema_err("target.points");
      return std::nullopt;
    }
    auto points = parse_coord_list<2>(j["points"]);
    if (!points) {
      *err = schema_err("target.points");
      return std::nullopt;
    }
    return SupervisionTarget{PointSet{std::move(*points)}};
  }
  *err = schema_err("target.kind");
  return std::nullopt;
}

bool valid_utf8(const std::string& s) {
  std::size_t i = 0;
  const auto* b = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    unsigned char c = b[i];
    std::size_t len = 0;
    if (c < 0x80) {
      len = 1;
    } else if ((c >> 5) == 0x6) {
      len = 2;
    } else if ((c >> 4) == 0xE) {
      len = 3;
    } else if ((c >> 3) == 0x1E) {
      len = 4;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((b[i + k] >> 6) != 0x2) return false;
    }
    i += len;
  }
  return true;
}

}  // namespace

std::string serialize_sample(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["task"] = to_string(s.task);
  j["visual"] = visual_to_json(s.visual);
  j["instruction"] = s.instruction;
  j["target"] = target_to_json(s.target);
  j["source_dataset"] = s.source_dataset;
  if (s.scene_tag.has_value()) j["scene_tag"] = to_string(*s.scene_tag);
  return j.dump();
}

SampleParseResult parse_sample(const std::string& line, bool strict) {
  SampleParseResult result;
  if (!valid_utf8(line)) {
    result.error = SampleParseError{"MALFORMED_TEXT", ""};
    return result;
  }
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    result.error = SampleParseError{"MALFORMED_TEXT", ""};
    return result;
  }

  std::string offender;
  if (strict && !keys_allowed(j, kSampleKeys, &offender)) {
    result.error = schema_err(offender);
    return result;
  }

  Sample s;
  if (!j.contains("id") || !j["id"].is_string()) {
    result.error = schema_err("id");
    return result;
  }
  s.id = j["id"].get<std::string>();

  if (!j.contains("task") || !j["task"].is_string()) {
    result.error = schema_err("task");
    return result;
  }
  auto task = parse_task_type(j["task"].get<std::string>());
  if (!task) {
    result.error = schema_err("task");
    return result;
  }
  s.task = *task;

  if (!j.contains("visual")) {
    result.error = schema_err("visual");
    return result;
  }
  SampleParseError err;
  auto visual = parse_visual(j["visual"], strict, &err);
  if (!visual) {
    result.error = err;
    return result;
  }
  s.visual = std::move(*visual);

  if (!j.contains("instruction") || !j["instruction"].is_string()) {
    result.error = schema_err("instruction");
    return result;
  }
  s.instruction = j["instruction"].get<std::string>();

  if (!j.contains("target")) {
    result.error = schema_err("target");
    return result;
  }
  auto target = parse_target(j["target"], strict, &err);
  if (!target) {
    result.error = err;
    return result;
  }
  s.target = std::move(*target);

  if (!j.contains("source_dataset") || !j["source_dataset"].is_string()) {
    result.error = schema_err("source_dataset");
    return result;
  }
  s.source_dataset = j["source_dataset"].get<std::string>();

  if (j.contains("scene_tag")) {
    if (!j["scene_tag"].is_string()) {
      result.error = schema_err("scene_tag");
      return result;
    }
    auto tag = parse_scene_tag(j["scene_tag"].get<std::string>());
    if (!tag) {
      result.error = schema_err("scene_tag");
      return result;
    }
    s.scene_tag = *tag;
  }

  result.sample = std::move(s);
  return result;
}

}  // namespace planforge
