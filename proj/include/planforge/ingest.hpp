// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "planforge/schema.hpp"

namespace planforge {

// ---------------------------------------------------------------------------
// Source adapters. Each adapter maps one source-format JSONL record into a
// unified Sample (or reports why it cannot).

enum class AdapterId {
  kLvisBox,
  kPixmoPoint,
  kRobopoint,
  kEgoplanClip,
  kRobovqaQa,
  kSharerobotQa,
  kIndustroplanCot,
  kSynthetic,  // generator-spec entries, not a line adapter
};

std::string to_string(AdapterId id);
std::optional<AdapterId> parse_adapter_id(const std::string& text);

// One source record converted, or a schema/malformed verdict. The `clip`
// member is populated only by the egoplan_clip adapter, which produces an
// intermediate clip that MCQ/open construction consumes.
struct EgoClip {
  std::string clip_id;
  VisualInput video;
  std::string history_summary;
  std::string labeled_action;
  std::string sequence_id;
};

struct ParsedRecord {
  std::optional<Sample> sample;
  std::optional<EgoClip> clip;
  std::optional<SampleParseError> error;
  bool ok() const { return !error.has_value(); }
};

// `source_name` lands in Sample::source_dataset. egoplan_clip records come
// back as clips; everything else comes back as samples. strict = reject
// unknown source fields.
ParsedRecord parse_record(const std::string& line, AdapterId adapter,
                          const std::string& source_name, bool strict = true);

// ---------------------------------------------------------------------------
// Grounding filter: drop >10-point instances and outdoor scenes.

enum class DropReason { kPointCount, kOutdoor };

struct FilterDecision {
  bool keep = true;
  std::optional<DropReason> reason;
};

// Pure function of (target, scene_tag). Throws Error(kTaskMismatch) for
// non-grounding samples.
FilterDecision filter_grounding(const Sample& s);

// ---------------------------------------------------------------------------
// Ego-view construction.

// 4 options: the labeled action plus 3 distinct distractors drawn from
// other-sequence clips. Seed-deterministic. Throws Error(kPoolTooSmall)
// when fewer than 3 eligible distractor actions exist.
Sample build_mcq(const EgoClip& clip, const std::vector<EgoClip>& pool,
                 std::uint64_t seed, const std::string& source_name);

// Open-ended variant: free-text target whose answer set is the labeled
// action. Throws Error(kEmptyAction).
Sample build_open(const EgoClip& clip, const std::string& source_name);

// Lowercase + collapse internal whitespace; distractor eligibility and
// option dedup compare actions through this.
std::string normalize_action(const std::string& text);

// ---------------------------------------------------------------------------
// Per-dataset ingest accounting. read = accepted + dropped_*.

struct DatasetCounts {
  std::uint64_t read = 0;
  std::uint64_t accepted = 0;
  std::uint64_t dropped_point_count = 0;
  std::uint64_t dropped_outdoor = 0;
  std::uint64_t dropped_schema = 0;
  std::uint64_t kept_unknown_scene = 0;
  std::uint64_t adversarial_generated = 0;

  bool conserved() const {
    return read == accepted + dropped_point_count + dropped_outdoor + dropped_schema;
  }
};

struct IngestReport {
  std::map<std::string, DatasetCounts> datasets;

  DatasetCounts totals() const;
  // Associative and commutative; parallel workers reduce through this.
  void merge(const IngestReport& other);
  std::string to_json() const;
};

// ---------------------------------------------------------------------------
// Synthetic desk-scale corpus generation (stands in for externally
// generated QA). Deterministic given seed. When adversarial_fraction > 0,
// that fraction of visual-grounding-point samples violates the 10-point cap
// (evenly spread, exact count = floor(n * fraction)).

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::map<TaskType, std::uint64_t> counts;
  double adversarial_fraction = 0.0;
  std::string source_name = "synthetic";
};

void generate_synthetic_corpus(const SyntheticSpec& spec,
                               const std::function<void(Sample&&, bool adversarial)>& sink);

// ---------------------------------------------------------------------------
// Manifest-driven ingest pipeline.

struct ManifestEntry {
  AdapterId adapter = AdapterId::kRobovqaQa;
  std::string path;
  std::string name;                          // report key; defaults to adapter id
  std::optional<std::uint64_t> expected_count;
  std::string egoplan_format = "mcq";        // "mcq" | "open" for egoplan_clip
};

struct IngestManifest {
  std::vector<ManifestEntry> entries;
};

IngestManifest load_ingest_manifest(const std::string& path);

struct IngestOptions {
  bool lenient = false;
  double adversarial_fraction = 0.0;  // synthetic entries only
  std::uint64_t seed = 0;             // synthetic + mcq option shuffles
  int threads = 1;
};

struct IngestResult {
  IngestReport report;
  std::uint64_t total_accepted = 0;
};

// Runs every manifest entry, appends accepted samples (in input order) to
// `sink`, and accumulates the per-dataset report.
IngestResult run_ingest(const IngestManifest& manifest, const IngestOptions& options,
                        const std::function<void(Sample&&)>& sink);

}  // namespace planforge
