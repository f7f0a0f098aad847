// SPDX-License-Identifier: Apache-2.0
#include "planforge/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <future>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "planforge/error.hpp"
#include "planforge/rng.hpp"

namespace planforge {

using nlohmann::json;

std::string to_string(AdapterId id) {
  switch (id) {
    case AdapterId::kLvisBox: return "lvis_box";
    case AdapterId::kPixmoPoint: return "pixmo_point";
    case AdapterId::kRobopoint: return "robopoint";
    case AdapterId::kEgoplanClip: return "egoplan_clip";
    case AdapterId::kRobovqaQa: return "robovqa_qa";
    case AdapterId::kSharerobotQa: return "sharerobot_qa";
    case AdapterId::kIndustroplanCot: return "industroplan_cot";
    case AdapterId::kSynthetic: return "synthetic";
  }
  return "unknown";
}

std::optional<AdapterId> parse_adapter_id(const std::string& text) {
  for (AdapterId id : {AdapterId::kLvisBox, AdapterId::kPixmoPoint, AdapterId::kRobopoint,
                       AdapterId::kEgoplanClip, AdapterId::kRobovqaQa,
                       AdapterId::kSharerobotQa, AdapterId::kIndustroplanCot,
                       AdapterId::kSynthetic}) {
    if (to_string(id) == text) return id;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Adapters

namespace {

ParsedRecord fail(const std::string& code, const std::string& field) {
  ParsedRecord r;
  r.error = SampleParseError{code, field};
  return r;
}

bool get_string(const json& j, const char* key, std::string* out) {
  if (!j.contains(key) || !j[key].is_string()) return false;
  *out = j[key].get<std::string>();
  return true;
}

bool get_uint(const json& j, const char* key, std::uint64_t* out) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) return false;
  *out = j[key].get<std::uint64_t>();
  return true;
}

bool get_string_list(const json& j, const char* key, std::vector<std::string>* out) {
  if (!j.contains(key) || !j[key].is_array()) return false;
  for (const auto& item : j[key]) {
    if (!item.is_string()) return false;
    out->push_back(item.get<std::string>());
  }
  return true;
}

template <std::size_t N>
bool get_coords(const json& j, const char* key, std::vector<std::array<double, N>>* out) {
  if (!j.contains(key) || !j[key].is_array()) return false;
  for (const auto& row : j[key]) {
    if (!row.is_array() || row.size() != N) return false;
    std::array<double, N> coords{};
    for (std::size_t i = 0; i < N; ++i) {
      if (!row[i].is_number()) return false;
      coords[i] = row[i].get<double>();
    }
    out->push_back(coords);
  }
  return true;
}

// Absent scene -> unknown (kept and counted rather than silently dropped).
bool get_scene(const json& j, std::optional<SceneTag>* out) {
  if (!j.contains("scene")) {
    *out = SceneTag::kUnknown;
    return true;
  }
  if (!j["scene"].is_string()) return false;
  auto tag = parse_scene_tag(j["scene"].get<std::string>());
  if (!tag) return false;
  *out = *tag;
  return true;
}

bool check_keys(const json& j, std::initializer_list<const char*> allowed,
                bool strict, std::string* offender) {
  if (!strict) return true;
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      *offender = it.key();
      return false;
    }
  }
  return true;
}

ParsedRecord parse_grounding(const json& j, TaskType task, const std::string& source,
                             bool strict) {
  std::string offender;
  const bool boxes = task == TaskType::kVisualGroundingBox;
  if (!check_keys(j, {"id", "image", "question", boxes ? "boxes" : "points", "scene"},
                  strict, &offender)) {
    return fail("SCHEMA_VIOLATION", offender);
  }
  Sample s;
  s.task = task;
  s.source_dataset = source;
  if (!get_string(j, "id", &s.id)) return fail("SCHEMA_VIOLATION", "id");
  if (!get_string(j, "question", &s.instruction)) return fail("SCHEMA_VIOLATION", "question");
  s.visual.kind = VisualKind::kImage;
  if (!get_string(j, "image", &s.visual.uri)) return fail("SCHEMA_VIOLATION", "image");
  if (!get_scene(j, &s.scene_tag)) return fail("SCHEMA_VIOLATION", "scene");
  if (boxes) {
    BoxSet target;
    if (!get_coords<4>(j, "boxes", &target.boxes)) return fail("SCHEMA_VIOLATION", "boxes");
    s.target = std::move(target);
  } else {
    PointSet target;
    if (!get_coords<2>(j, "points", &target.points)) return fail("SCHEMA_VIOLATION", "points");
    s.target = std::move(target);
  }
  ParsedRecord r;
  r.sample = std::move(s);
  return r;
}

ParsedRecord parse_video_qa(const json& j, TaskType task, const std::string& source,
                            bool strict) {
  std::string offender;
  const bool cot = task == TaskType::kIndustrialCot;
  if (!check_keys(j,
                  cot ? std::initializer_list<const char*>{"id", "video", "frame_count",
                                                           "goal", "steps"}
                      : std::initializer_list<const char*>{"id", "video", "frame_count",
                                                           "question", "answers"},
                  strict, &offender)) {
    return fail("SCHEMA_VIOLATION", offender);
  }
  Sample s;
  s.task = task;
  s.source_dataset = source;
  if (!get_string(j, "id", &s.id)) return fail("SCHEMA_VIOLATION", "id");
  s.visual.kind = VisualKind::kVideo;
  if (!get_string(j, "video", &s.visual.uri)) return fail("SCHEMA_VIOLATION", "video");
  if (!get_uint(j, "frame_count", &s.visual.frame_count) || s.visual.frame_count < 1) {
    return fail("SCHEMA_VIOLATION", "frame_count");
  }
  s.visual = attach_key_frame(s.visual);

  FreeText target;
  if (cot) {
    if (!get_string(j, "goal", &s.instruction)) return fail("SCHEMA_VIOLATION", "goal");
    std::vector<std::string> steps;
    if (!get_string_list(j, "steps", &steps) || steps.empty()) {
      return fail("SCHEMA_VIOLATION", "steps");
    }
    std::string plan;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (i > 0) plan += " ";
      plan += "Step " + std::to_string(i + 1) + ": " + steps[i] + ".";
    }
    target.answers.push_back(std::move(plan));
  } else {
    if (!get_string(j, "question", &s.instruction)) return fail("SCHEMA_VIOLATION", "question");
    if (!get_string_list(j, "answers", &target.answers) || target.answers.empty()) {
      return fail("SCHEMA_VIOLATION", "answers");
    }
  }
  s.target = std::move(target);
  ParsedRecord r;
  r.sample = std::move(s);
  return r;
}

ParsedRecord parse_egoclip(const json& j, bool strict) {
  std::string offender;
  if (!check_keys(j, {"clip_id", "video", "frame_count", "history", "action", "sequence_id"},
                  strict, &offender)) {
    return fail("SCHEMA_VIOLATION", offender);
  }
  EgoClip clip;
  if (!get_string(j, "clip_id", &clip.clip_id) || clip.clip_id.empty()) {
    return fail("SCHEMA_VIOLATION", "clip_id");
  }
  clip.video.kind = VisualKind::kVideo;
  if (!get_string(j, "video", &clip.video.uri)) return fail("SCHEMA_VIOLATION", "video");
  if (!get_uint(j, "frame_count", &clip.video.frame_count) || clip.video.frame_count < 1) {
    return fail("SCHEMA_VIOLATION", "frame_count");
  }
  if (j.contains("history")) {
    if (!j["history"].is_string()) return fail("SCHEMA_VIOLATION", "history");
    clip.history_summary = j["history"].get<std::string>();
  }
  if (!get_string(j, "action", &clip.labeled_action) || clip.labeled_action.empty()) {
    return fail("SCHEMA_VIOLATION", "action");
  }
  if (!get_string(j, "sequence_id", &clip.sequence_id) || clip.sequence_id.empty()) {
    return fail("SCHEMA_VIOLATION", "sequence_id");
  }
  ParsedRecord r;
  r.clip = std::move(clip);
  return r;
}

bool utf8_ok(const std::string& s) {
  // Reuse the canonical-sample parser's check indirectly: a cheap scan here.
  std::size_t i = 0;
  const auto* b = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    unsigned char c = b[i];
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3
                      : (c >> 3) == 0x1E             ? 4 : 0;
    if (len == 0 || i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((b[i + k] >> 6) != 0x2) return false;
    }
    i += len;
  }
  return true;
}

}  // namespace

ParsedRecord parse_record(const std::string& line, AdapterId adapter,
                          const std::string& source_name, bool strict) {
  if (!utf8_ok(line)) return fail("MALFORMED_TEXT", "");
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return fail("MALFORMED_TEXT", "");

  switch (adapter) {
    case AdapterId::kLvisBox:
      return parse_grounding(j, TaskType::kVisualGroundingBox, source_name, strict);
    case AdapterId::kPixmoPoint:
    case AdapterId::kRobopoint:
      return parse_grounding(j, TaskType::kVisualGroundingPoint, source_name, strict);
    case AdapterId::kEgoplanClip:
      return parse_egoclip(j, strict);
    case AdapterId::kRobovqaQa:
    case AdapterId::kSharerobotQa:
      return parse_video_qa(j, TaskType::kPlanningQa, source_name, strict);
    case AdapterId::kIndustroplanCot:
      return parse_video_qa(j, TaskType::kIndustrialCot, source_name, strict);
    case AdapterId::kSynthetic:
      break;
  }
  return fail("SCHEMA_VIOLATION", "adapter");
}

// ---------------------------------------------------------------------------
// Grounding filter

FilterDecision filter_grounding(const Sample& s) {
  if (s.task != TaskType::kVisualGroundingBox &&
      s.task != TaskType::kVisualGroundingPoint) {
    throw Error(ErrorCode::kTaskMismatch,
                "filter_grounding applies to grounding samples only");
  }
  if (const auto* ps = std::get_if<PointSet>(&s.target)) {
    if (ps->points.size() > 10) {
      return {false, DropReason::kPointCount};
    }
  }
  if (s.scene_tag == SceneTag::kOutdoor) {
    return {false, DropReason::kOutdoor};
  }
  return {true, std::nullopt};
}

// ---------------------------------------------------------------------------
// Ego-view construction

std::string normalize_action(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

namespace {

std::string mcq_instruction(const EgoClip& clip) {
  std::string text = "Task history: ";
  text += clip.history_summary.empty() ? "(none)" : clip.history_summary;
  text += " Which action should come next?";
  return text;
}

}  // namespace

Sample build_mcq(const EgoClip& clip, const std::vector<EgoClip>& pool,
                 std::uint64_t seed, const std::string& source_name) {
  if (clip.labeled_action.empty()) {
    throw Error(ErrorCode::kEmptyAction, "clip " + clip.clip_id);
  }
  const std::string correct_norm = normalize_action(clip.labeled_action);

  // Unique eligible actions from other sequences, canonically ordered so the
  // result depends only on (clip, pool, seed).
  std::map<std::string, std::string> candidates;  // normalized -> original
  for (const EgoClip& other : pool) {
    if (other.sequence_id == clip.sequence_id) continue;
    if (other.labeled_action.empty()) continue;
    std::string norm = normalize_action(other.labeled_action);
    if (norm == correct_norm) continue;
    candidates.emplace(std::move(norm), other.labeled_action);
  }
  if (candidates.size() < 3) {
    throw Error(ErrorCode::kPoolTooSmall,
                "clip " + clip.clip_id + " has " + std::to_string(candidates.size()) +
                    " eligible distractors, need 3");
  }

  std::vector<std::string> ordered;
  ordered.reserve(candidates.size());
  for (auto& [norm, original] : candidates) ordered.push_back(original);

  SplitMix64 rng(seed);
  // Partial Fisher-Yates: first 3 slots become the distractors.
  for (std::size_t k = 0; k < 3; ++k) {
    std::size_t j = k + static_cast<std::size_t>(rng.next_below(ordered.size() - k));
    std::swap(ordered[k], ordered[j]);
  }

  std::vector<std::string> options = {clip.labeled_action, ordered[0], ordered[1],
                                      ordered[2]};
  std::size_t correct_pos = 0;
  for (std::size_t i = options.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
    std::swap(options[i], options[j]);
    if (correct_pos == i) {
      correct_pos = j;
    } else if (correct_pos == j) {
      correct_pos = i;
    }
  }

  Sample s;
  s.id = clip.clip_id + "-mcq";
  s.task = TaskType::kEgoViewMcq;
  s.visual = attach_key_frame(clip.video);
  s.instruction = mcq_instruction(clip);
  s.target = OptionLetter{static_cast<char>('A' + correct_pos), std::move(options)};
  s.source_dataset = source_name;
  return s;
}

Sample build_open(const EgoClip& clip, const std::string& source_name) {
  if (clip.labeled_action.empty()) {
    throw Error(ErrorCode::kEmptyAction, "clip " + clip.clip_id);
  }
  Sample s;
  s.id = clip.clip_id + "-open";
  s.task = TaskType::kEgoViewOpen;
  s.visual = attach_key_frame(clip.video);
  std::string text = "Task history: ";
  text += clip.history_summary.empty() ? "(none)" : clip.history_summary;
  text += " What is the next action?";
  s.instruction = text;
  s.target = FreeText{{clip.labeled_action}};
  s.source_dataset = source_name;
  return s;
}

// ---------------------------------------------------------------------------
// Report

DatasetCounts IngestReport::totals() const {
  DatasetCounts t;
  for (const auto& [name, c] : datasets) {
    t.read += c.read;
    t.accepted += c.accepted;
    t.dropped_point_count += c.dropped_point_count;
    t.dropped_outdoor += c.dropped_outdoor;
    t.dropped_schema += c.dropped_schema;
    t.kept_unknown_scene += c.kept_unknown_scene;
    t.adversarial_generated += c.adversarial_generated;
  }
  return t;
}

void IngestReport::merge(const IngestReport& other) {
  for (const auto& [name, c] : other.datasets) {
    DatasetCounts& mine = datasets[name];
    mine.read += c.read;
    mine.accepted += c.accepted;
    mine.dropped_point_count += c.dropped_point_count;
    mine.dropped_outdoor += c.dropped_outdoor;
    mine.dropped_schema += c.dropped_schema;
    mine.kept_unknown_scene += c.kept_unknown_scene;
    mine.adversarial_generated += c.adversarial_generated;
  }
}

namespace {

json counts_to_json(const DatasetCounts& c) {
  json j;
  j["read"] = c.read;
  j["accepted"] = c.accepted;
  j["dropped_point_count"] = c.dropped_point_count;
  j["dropped_outdoor"] = c.dropped_outdoor;
  j["dropped_schema"] = c.dropped_schema;
  j["kept_unknown_scene"] = c.kept_unknown_scene;
  j["adversarial_generated"] = c.adversarial_generated;
  return j;
}

}  // namespace

std::string IngestReport::to_json() const {
  json j;
  j["datasets"] = json::object();
  for (const auto& [name, c] : datasets) {
    j["datasets"][name] = counts_to_json(c);
  }
  j["totals"] = counts_to_json(totals());
  return j.dump();
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

const std::vector<std::string> kObjects = {
    "cup",    "drawer", "red block", "bottle", "sponge",
    "apple",  "box",    "plate",     "towel",  "screwdriver"};
const std::vector<std::string> kActions = {
    "pick up the cup",     "open the drawer",      "wipe the table",
    "close the cabinet",   "place the apple down", "push the box aside",
    "grasp the bottle",    "lift the plate",       "fold the towel",
    "rotate the valve",    "stack the red block",  "press the button"};
const std::vector<std::string> kStations = {
    "assembly bench", "conveyor belt", "storage rack", "packing station", "tool crib"};

std::string pick(const std::vector<std::string>& pool, SplitMix64& rng) {
  return pool[rng.next_below(pool.size())];
}

double unit_coord(SplitMix64& rng) {
  // Keep a margin so boxes/points stay comfortably inside [0,1].
  return 0.05 + rng.next_double() * 0.9;
}

SceneTag scene_cycle(std::uint64_t i) {
  switch (i % 5) {
    case 3: return SceneTag::kOutdoor;
    case 4: return SceneTag::kUnknown;
    default: return SceneTag::kIndoor;
  }
}

bool adversarial_slot(std::uint64_t i, double fraction) {
  if (fraction <= 0.0) return false;
  auto mark = [fraction](std::uint64_t n) {
    return static_cast<std::uint64_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
  };
  return mark(i + 1) > mark(i);
}

Sample synth_box(std::uint64_t i, SplitMix64& rng, const std::string& source) {
  Sample s;
  s.id = "syn-box-" + std::to_string(i);
  s.task = TaskType::kVisualGroundingBox;
  s.visual = {VisualKind::kImage, "img://synthetic/box/" + std::to_string(i), 0,
              std::nullopt};
  s.instruction = "Where is the " + pick(kObjects, rng) + "? Give its bounding box.";
  BoxSet boxes;
  std::uint64_t n = 1 + rng.next_below(3);
  for (std::uint64_t b = 0; b < n; ++b) {
    double x0 = 0.05 + rng.next_double() * 0.5;
    double y0 = 0.05 + rng.next_double() * 0.5;
    double x1 = x0 + 0.05 + rng.next_double() * (0.95 - x0 - 0.05);
    double y1 = y0 + 0.05 + rng.next_double() * (0.95 - y0 - 0.05);
    boxes.boxes.push_back({x0, y0, x1, y1});
  }
  s.target = std::move(boxes);
  s.source_dataset = source;
  s.scene_tag = scene_cycle(i);
  return s;
}

Sample synth_point(std::uint64_t i, SplitMix64& rng, bool adversarial,
                   const std::string& source) {
  Sample s;
  s.id = "syn-point-" + std::to_string(i);
  s.task = TaskType::kVisualGroundingPoint;
  s.visual = {VisualKind::kImage, "img://synthetic/point/" + std::to_string(i), 0,
              std::nullopt};
  s.instruction = "Point to the " + pick(kObjects, rng) + ".";
  PointSet points;
  std::uint64_t n = adversarial ? 11 + rng.next_below(5) : 1 + rng.next_below(10);
  for (std::uint64_t p = 0; p < n; ++p) {
    points.points.push_back({unit_coord(rng), unit_coord(rng)});
  }
  s.target = std::move(points);
  s.source_dataset = source;
  s.scene_tag = scene_cycle(i);
  return s;
}

VisualInput synth_video(const std::string& uri, SplitMix64& rng) {
  VisualInput v;
  v.kind = VisualKind::kVideo;
  v.uri = uri;
  v.frame_count = 4 + rng.next_below(29);
  return attach_key_frame(v);
}

Sample synth_mcq(std::uint64_t i, SplitMix64& rng, const std::string& source) {
  Sample s;
  s.id = "syn-mcq-" + std::to_string(i);
  s.task = TaskType::kEgoViewMcq;
  s.visual = synth_video("vid://synthetic/mcq/" + std::to_string(i), rng);
  s.instruction = "Task history: the robot prepared the " + pick(kStations, rng) +
                  ". Which action should come next?";
  // Four distinct actions from the pool.
  std::vector<std::string> actions = kActions;
  for (std::size_t k = 0; k < 4; ++k) {
    std::size_t j = k + static_cast<std::size_t>(rng.next_below(actions.size() - k));
    std::swap(actions[k], actions[j]);
  }
  actions.resize(4);
  char letter = static_cast<char>('A' + rng.next_below(4));
  s.target = OptionLetter{letter, std::move(actions)};
  s.source_dataset = source;
  return s;
}

Sample synth_open(std::uint64_t i, SplitMix64& rng, const std::string& source) {
  Sample s;
  s.id = "syn-open-" + std::to_string(i);
  s.task = TaskType::kEgoViewOpen;
  s.visual = synth_video("vid://synthetic/open/" + std::to_string(i), rng);
  s.instruction = "Task history: the robot reached the " + pick(kStations, rng) +
                  ". What is the next action?";
  s.target = FreeText{{pick(kActions, rng)}};
  s.source_dataset = source;
  return s;
}

Sample synth_planning(std::uint64_t i, SplitMix64& rng, const std::string& source) {
  Sample s;
  s.id = "syn-plan-" + std::to_string(i);
  s.task = TaskType::kPlanningQa;
  s.visual = synth_video("vid://synthetic/plan/" + std::to_string(i), rng);
  std::string object = pick(kObjects, rng);
  s.instruction = "What should the robot do to put the " + object + " away?";
  FreeText target;
  target.answers.push_back(pick(kActions, rng));
  if (rng.next_below(2) == 0) target.answers.push_back(pick(kActions, rng));
  s.target = std::move(target);
  s.source_dataset = source;
  return s;
}

Sample synth_cot(std::uint64_t i, SplitMix64& rng, const std::string& source) {
  Sample s;
  s.id = "syn-cot-" + std::to_string(i);
  s.task = TaskType::kIndustrialCot;
  s.visual = synth_video("vid://synthetic/cot/" + std::to_string(i), rng);
  s.instruction = "Goal: move every " + pick(kObjects, rng) + " to the " +
                  pick(kStations, rng) + ".";
  std::string plan;
  std::uint64_t steps = 2 + rng.next_below(4);
  for (std::uint64_t k = 0; k < steps; ++k) {
    if (k > 0) plan += " ";
    plan += "Step " + std::to_string(k + 1) + ": " + pick(kActions, rng) + ".";
  }
  s.target = FreeText{{std::move(plan)}};
  s.source_dataset = source;
  return s;
}

}  // namespace

void generate_synthetic_corpus(
    const SyntheticSpec& spec,
    const std::function<void(Sample&&, bool adversarial)>& sink) {
  for (TaskType task : kAllTasks) {
    auto it = spec.counts.find(task);
    if (it == spec.counts.end() || it->second == 0) continue;
    // Independent stream per task: counts of one task never shift another.
    SplitMix64 rng(spec.seed ^ fnv1a64(to_string(task)));
    for (std::uint64_t i = 0; i < it->second; ++i) {
      bool adversarial = task == TaskType::kVisualGroundingPoint &&
                         adversarial_slot(i, spec.adversarial_fraction);
      switch (task) {
        case TaskType::kVisualGroundingBox:
          sink(synth_box(i, rng, spec.source_name), false);
          break;
        case TaskType::kVisualGroundingPoint:
          sink(synth_point(i, rng, adversarial, spec.source_name), adversarial);
          break;
        case TaskType::kEgoViewMcq:
          sink(synth_mcq(i, rng, spec.source_name), false);
          break;
        case TaskType::kEgoViewOpen:
          sink(synth_open(i, rng, spec.source_name), false);
          break;
        case TaskType::kPlanningQa:
          sink(synth_planning(i, rng, spec.source_name), false);
          break;
        case TaskType::kIndustrialCot:
          sink(synth_cot(i, rng, spec.source_name), false);
          break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Manifest-driven pipeline

IngestManifest load_ingest_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open manifest " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("sources") ||
      !j["sources"].is_array()) {
    throw Error(ErrorCode::kBadConfig, "manifest must be {\"sources\": [...]}");
  }
  IngestManifest manifest;
  for (const auto& src : j["sources"]) {
    ManifestEntry entry;
    if (!src.is_object() || !src.contains("adapter_id") || !src["adapter_id"].is_string()) {
      throw Error(ErrorCode::kBadConfig, "source entry needs adapter_id");
    }
    auto adapter = parse_adapter_id(src["adapter_id"].get<std::string>());
    if (!adapter) {
      throw Error(ErrorCode::kBadConfig,
                  "unknown adapter_id " + src["adapter_id"].get<std::string>());
    }
    entry.adapter = *adapter;
    if (!src.contains("path") || !src["path"].is_string()) {
      throw Error(ErrorCode::kBadConfig, "source entry needs path");
    }
    entry.path = src["path"].get<std::string>();
    entry.name = src.value("name", to_string(entry.adapter));
    if (src.contains("expected_count")) {
      entry.expected_count = src["expected_count"].get<std::uint64_t>();
    }
    if (src.contains("options") && src["options"].is_object()) {
      entry.egoplan_format = src["options"].value("format", "mcq");
      if (entry.egoplan_format != "mcq" && entry.egoplan_format != "open") {
        throw Error(ErrorCode::kBadConfig, "egoplan format must be mcq or open");
      }
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

namespace {

struct PipelineState {
  std::unordered_set<std::string> seen_ids;
  const std::function<void(Sample&&)>* sink = nullptr;
};

// Filter (grounding only) -> validate -> dedupe -> emit. Returns through the
// counters; the conservation identity is maintained by construction.
void admit_sample(Sample&& s, DatasetCounts& counts, PipelineState& state) {
  const bool grounding = s.task == TaskType::kVisualGroundingBox ||
                         s.task == TaskType::kVisualGroundingPoint;
  if (grounding) {
    FilterDecision decision = filter_grounding(s);
    if (!decision.keep) {
      if (decision.reason == DropReason::kPointCount) {
        counts.dropped_point_count++;
      } else {
        counts.dropped_outdoor++;
      }
      return;
    }
  }
  if (!validate_sample(s).ok()) {
    counts.dropped_schema++;
    return;
  }
  if (!state.seen_ids.insert(s.id).second) {
    counts.dropped_schema++;  // DUPLICATE_ID
    return;
  }
  if (grounding && s.scene_tag == SceneTag::kUnknown) {
    counts.kept_unknown_scene++;
  }
  counts.accepted++;
  (*state.sink)(std::move(s));
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

void run_line_adapter(const ManifestEntry& entry, const IngestOptions& options,
                      DatasetCounts& counts, PipelineState& state) {
  std::vector<std::string> lines = read_lines(entry.path);
  counts.read += lines.size();

  const int threads = std::max(1, options.threads);
  std::vector<ParsedRecord> parsed(lines.size());
  if (threads == 1 || lines.size() < 64) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      parsed[i] = parse_record(lines[i], entry.adapter, entry.name, !options.lenient);
    }
  } else {
    // Parse in parallel, admit in input order: output is independent of the
    // thread count.
    std::vector<std::future<void>> work;
    std::size_t chunk = (lines.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      std::size_t begin = static_cast<std::size_t>(t) * chunk;
      std::size_t end = std::min(lines.size(), begin + chunk);
      if (begin >= end) break;
      work.push_back(std::async(std::launch::async, [&, begin, end] {
        for (std::size_t i = begin; i < end; ++i) {
          parsed[i] = parse_record(lines[i], entry.adapter, entry.name, !options.lenient);
        }
      }));
    }
    for (auto& w : work) w.get();
  }

  for (auto& record : parsed) {
    if (!record.ok()) {
      counts.dropped_schema++;
      continue;
    }
    admit_sample(std::move(*record.sample), counts, state);
  }
}

void run_egoplan_adapter(const ManifestEntry& entry, const IngestOptions& options,
                         DatasetCounts& counts, PipelineState& state) {
  std::vector<std::string> lines = read_lines(entry.path);
  counts.read += lines.size();

  std::vector<EgoClip> clips;
  std::vector<bool> bad(lines.size(), false);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    ParsedRecord record = parse_record(lines[i], AdapterId::kEgoplanClip, entry.name,
                                       !options.lenient);
    if (!record.ok()) {
      counts.dropped_schema++;
      bad[i] = true;
      continue;
    }
    clips.push_back(std::move(*record.clip));
  }

  const bool mcq = entry.egoplan_format == "mcq";
  for (const EgoClip& clip : clips) {
    try {
      Sample s = mcq ? build_mcq(clip, clips, options.seed ^ fnv1a64(clip.clip_id),
                                 entry.name)
                     : build_open(clip, entry.name);
      admit_sample(std::move(s), counts, state);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kPoolTooSmall || e.code() == ErrorCode::kEmptyAction) {
        counts.dropped_schema++;
      } else {
        throw;
      }
    }
  }
}

SyntheticSpec load_synthetic_spec(const std::string& path, const IngestOptions& options,
                                  const std::string& source_name) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open generator spec " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kBadConfig, "generator spec must be a JSON object");
  }
  SyntheticSpec spec;
  spec.seed = j.value("seed", options.seed);
  spec.adversarial_fraction = j.value("adversarial_fraction", 0.0);
  if (options.adversarial_fraction > 0.0) {
    spec.adversarial_fraction = options.adversarial_fraction;
  }
  spec.source_name = source_name;
  if (j.contains("counts") && j["counts"].is_object()) {
    for (auto it = j["counts"].begin(); it != j["counts"].end(); ++it) {
      auto task = parse_task_type(it.key());
      if (!task) throw Error(ErrorCode::kBadConfig, "unknown task " + it.key());
      spec.counts[*task] = it.value().get<std::uint64_t>();
    }
  }
  return spec;
}

void run_synthetic_entry(const ManifestEntry& entry, const IngestOptions& options,
                         DatasetCounts& counts, PipelineState& state) {
  SyntheticSpec spec = load_synthetic_spec(entry.path, options, entry.name);
  generate_synthetic_corpus(spec, [&](Sample&& s, bool adversarial) {
    counts.read++;
    if (adversarial) counts.adversarial_generated++;
    admit_sample(std::move(s), counts, state);
  });
}

}  // namespace

IngestResult run_ingest(const IngestManifest& manifest, const IngestOptions& options,
                        const std::function<void(Sample&&)>& sink) {
  IngestResult result;
  PipelineState state;
  state.sink = &sink;

  for (const ManifestEntry& entry : manifest.entries) {
    DatasetCounts& counts = result.report.datasets[entry.name];
    switch (entry.adapter) {
      case AdapterId::kEgoplanClip:
        run_egoplan_adapter(entry, options, counts, state);
        break;
      case AdapterId::kSynthetic:
        run_synthetic_entry(entry, options, counts, state);
        break;
      default:
        run_line_adapter(entry, options, counts, state);
        break;
    }
  }

  for (const auto& [name, counts] : result.report.datasets) {
    result.total_accepted += counts.accepted;
  }
  return result;
}

}  // namespace planforge
