// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "planforge/schema.hpp"

namespace planforge {

// Sharded corpus layout, one directory per corpus:
//
//   manifest.json   {schema_version, total_records, creation_seed,
//                    compression: "none", shards: [{file, record_count,
//                    content_hash}]}
//   shard-00000     length-prefixed records: u32 little-endian byte length
//   shard-00001     followed by the canonical JSON sample encoding (UTF-8)
//   ...
//
// content_hash is "fnv1a64:<16 hex digits>" over the raw shard bytes.
// Shards are immutable after write; within-epoch order is writer order
// (shuffling is the sampler's concern, not the store's).

inline constexpr std::uint32_t kShardSchemaVersion = 1;

struct ShardInfo {
  std::string file;
  std::uint64_t record_count = 0;
  std::string content_hash;
};

struct ShardManifest {
  std::uint32_t schema_version = kShardSchemaVersion;
  std::uint64_t total_records = 0;
  std::uint64_t creation_seed = 0;
  std::vector<ShardInfo> shards;

  std::string to_json() const;
  static ShardManifest from_json(const std::string& text);
};

ShardManifest load_manifest(const std::string& dir);

// Resumable read position. shard_index == shards.size() with record_index 0
// is the end-of-epoch sentinel.
struct Cursor {
  std::uint64_t epoch = 0;
  std::uint64_t shard_index = 0;
  std::uint64_t record_index = 0;
  std::uint64_t draws_consumed = 0;

  bool operator==(const Cursor&) const = default;
};

std::string serialize_cursor(const Cursor& c);
// Rejects cursors inconsistent with the manifest (index out of range,
// schema-version fence). Throws Error(kCursorManifestMismatch).
Cursor restore_cursor(const std::string& bytes, const ShardManifest& manifest);

// ---------------------------------------------------------------------------
// Writer: single pass, memory bounded by one record plus the output buffer.
// Throws IO_FAILURE / HASH_MISMATCH (post-write verification re-reads each
// shard). Takes an exclusive lock file in out_dir for the duration.

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::optional<Sample> next() = 0;
};

ShardManifest write_shards(SampleSource& source, std::uint64_t shard_size,
                           const std::string& out_dir, std::uint64_t creation_seed = 0);

// Convenience for tests and small corpora.
class VectorSource : public SampleSource {
 public:
  explicit VectorSource(std::vector<Sample> samples) : samples_(std::move(samples)) {}
  std::optional<Sample> next() override {
    if (index_ >= samples_.size()) return std::nullopt;
    return samples_[index_++];
  }

 private:
  std::vector<Sample> samples_;
  std::size_t index_ = 0;
};

// ---------------------------------------------------------------------------
// Reader: sequential stream with O(1) memory in corpus size. Each shard's
// content hash is verified once, when the shard is opened. Cursors are
// single-owner; independent readers with independent cursors are safe.

class ShardReader {
 public:
  ShardReader(std::string dir, ShardManifest manifest);

  struct Next {
    std::optional<Sample> sample;  // nullopt => end of epoch
    Cursor cursor;                 // position after this call
  };

  // Returns the record at the cursor plus the advanced cursor, or an
  // end-of-epoch result carrying the epoch-incremented cursor. Throws
  // Error(kCorruptShard) if the shard fails its hash check at open time.
  Next next(const Cursor& cursor);

  const ShardManifest& manifest() const { return manifest_; }

 private:
  void open_shard(std::uint64_t shard_index);
  void seek_to(std::uint64_t shard_index, std::uint64_t record_index);
  std::string read_record();

  std::string dir_;
  ShardManifest manifest_;
  std::ifstream stream_;
  std::uint64_t open_shard_index_ = UINT64_MAX;
  std::uint64_t stream_record_index_ = 0;
};

}  // namespace planforge
