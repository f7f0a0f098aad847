// SPDX-License-Identifier: Apache-2.0
#include "planforge/shardstore.hpp"

#include <cstdio>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "planforge/error.hpp"
#include "planforge/rng.hpp"

namespace planforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string shard_file_name(std::uint64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "shard-%05llu", static_cast<unsigned long long>(index));
  return buf;
}

std::string hash_to_string(std::uint64_t h) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Streaming hash of a whole file; 64 KiB buffer keeps memory flat.
std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  std::vector<char> buf(64 * 1024);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    std::streamsize got = in.gcount();
    if (got > 0) h = fnv1a64(buf.data(), static_cast<std::size_t>(got), h);
  }
  return h;
}

class LockFile {
 public:
  explicit LockFile(const fs::path& dir) : path_(dir / "lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
      throw Error(ErrorCode::kIoFailure,
                  "output directory is locked by another writer: " + path_.string());
    }
    std::fclose(f);
  }
  ~LockFile() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

}  // namespace

std::string ShardManifest::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["total_records"] = total_records;
  j["creation_seed"] = creation_seed;
  j["compression"] = "none";
  j["shards"] = json::array();
  for (const auto& s : shards) {
    j["shards"].push_back(
        {{"file", s.file}, {"record_count", s.record_count}, {"content_hash", s.content_hash}});
  }
  return j.dump();
}

ShardManifest ShardManifest::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kIoFailure, "malformed shard manifest");
  }
  ShardManifest m;
  m.schema_version = j.value("schema_version", 0u);
  m.total_records = j.value("total_records", 0ull);
  m.creation_seed = j.value("creation_seed", 0ull);
  for (const auto& s : j.value("shards", json::array())) {
    m.shards.push_back({s.value("file", ""), s.value("record_count", 0ull),
                        s.value("content_hash", "")});
  }
  std::uint64_t sum = 0;
  for (const auto& s : m.shards) sum += s.record_count;
  if (sum != m.total_records) {
    throw Error(ErrorCode::kIoFailure, "manifest record counts do not sum to total");
  }
  return m;
}

ShardManifest load_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw Error(ErrorCode::kIoFailure, "no manifest.json in " + dir);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ShardManifest::from_json(text);
}

// ---------------------------------------------------------------------------
// Cursor

std::string serialize_cursor(const Cursor& c) {
  json j;
  j["epoch"] = c.epoch;
  j["shard_index"] = c.shard_index;
  j["record_index"] = c.record_index;
  j["draws_consumed"] = c.draws_consumed;
  j["schema_version"] = kShardSchemaVersion;
  return j.dump();
}

Cursor restore_cursor(const std::string& bytes, const ShardManifest& manifest) {
  json j = json::parse(bytes, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kCursorManifestMismatch, "unreadable cursor");
  }
  if (j.value("schema_version", 0u) != manifest.schema_version) {
    throw Error(ErrorCode::kCursorManifestMismatch, "cursor schema version fence");
  }
  Cursor c;
  c.epoch = j.value("epoch", 0ull);
  c.shard_index = j.value("shard_index", 0ull);
  c.record_index = j.value("record_index", 0ull);
  c.draws_consumed = j.value("draws_consumed", 0ull);

  const std::uint64_t shard_count = manifest.shards.size();
  const bool sentinel = c.shard_index == shard_count && c.record_index == 0;
  if (!sentinel) {
    if (c.shard_index >= shard_count) {
      throw Error(ErrorCode::kCursorManifestMismatch, "shard index out of range");
    }
    if (c.record_index >= manifest.shards[c.shard_index].record_count) {
      throw Error(ErrorCode::kCursorManifestMismatch, "record index out of range");
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Writer

namespace {

void write_u32_le(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

ShardManifest write_shards(SampleSource& source, std::uint64_t shard_size,
                           const std::string& out_dir, std::uint64_t creation_seed) {
  if (shard_size < 1) throw Error(ErrorCode::kBadConfig, "shard_size must be >= 1");
  LockFile lock{fs::path(out_dir)};

  ShardManifest manifest;
  manifest.creation_seed = creation_seed;

  std::ofstream out;
  std::uint64_t hash = 0;
  std::uint64_t in_shard = 0;

  auto close_shard = [&] {
    if (!out.is_open()) return;
    out.close();
    if (!out) throw Error(ErrorCode::kIoFailure, "short write closing shard");
    manifest.shards.push_back({shard_file_name(manifest.shards.size()), in_shard,
                               hash_to_string(hash)});
  };

  while (auto sample = source.next()) {
    if (!out.is_open()) {
      fs::path path = fs::path(out_dir) / shard_file_name(manifest.shards.size());
      out.open(path, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::kIoFailure, "cannot create " + path.string());
      hash = 0xCBF29CE484222325ULL;
      in_shard = 0;
    }
    std::string record = serialize_sample(*sample);
    if (record.size() > UINT32_MAX) {
      throw Error(ErrorCode::kIoFailure, "record too large");
    }
    auto len = static_cast<std::uint32_t>(record.size());
    unsigned char lb[4] = {static_cast<unsigned char>(len & 0xFF),
                           static_cast<unsigned char>((len >> 8) & 0xFF),
                           static_cast<unsigned char>((len >> 16) & 0xFF),
                           static_cast<unsigned char>((len >> 24) & 0xFF)};
    write_u32_le(out, len);
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
    if (!out) throw Error(ErrorCode::kIoFailure, "short write in shard");
    hash = fnv1a64(lb, 4, hash);
    hash = fnv1a64(record.data(), record.size(), hash);
    manifest.total_records++;
    if (++in_shard == shard_size) close_shard();
  }
  close_shard();

  // Post-write verification: re-read every shard and compare hashes.
  for (const auto& s : manifest.shards) {
    std::uint64_t on_disk = hash_file((fs::path(out_dir) / s.file).string());
    if (hash_to_string(on_disk) != s.content_hash) {
      throw Error(ErrorCode::kHashMismatch, s.file);
    }
  }

  std::ofstream mf(fs::path(out_dir) / "manifest.json", std::ios::trunc);
  if (!mf) throw Error(ErrorCode::kIoFailure, "cannot write manifest.json");
  mf << manifest.to_json();
  mf.close();
  if (!mf) throw Error(ErrorCode::kIoFailure, "short write on manifest.json");
  return manifest;
}

// ---------------------------------------------------------------------------
// Reader

ShardReader::ShardReader(std::string dir, ShardManifest manifest)
    : dir_(std::move(dir)), manifest_(std::move(manifest)) {}

void ShardReader::open_shard(std::uint64_t shard_index) {
  const ShardInfo& info = manifest_.shards[shard_index];
  fs::path path = fs::path(dir_) / info.file;
  std::uint64_t h = hash_file(path.string());
  if (hash_to_string(h) != info.content_hash) {
    throw Error(ErrorCode::kCorruptShard, info.file + " failed content hash check");
  }
  stream_.close();
  stream_.clear();
  stream_.open(path, std::ios::binary);
  if (!stream_) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  open_shard_index_ = shard_index;
  stream_record_index_ = 0;
}

std::string ShardReader::read_record() {
  unsigned char lb[4];
  stream_.read(reinterpret_cast<char*>(lb), 4);
  if (stream_.gcount() != 4) {
    throw Error(ErrorCode::kCorruptShard, "truncated record length");
  }
  std::uint32_t len = static_cast<std::uint32_t>(lb[0]) |
                      (static_cast<std::uint32_t>(lb[1]) << 8) |
                      (static_cast<std::uint32_t>(lb[2]) << 16) |
                      (static_cast<std::uint32_t>(lb[3]) << 24);
  std::string record(len, '\0');
  stream_.read(record.data(), len);
  if (stream_.gcount() != static_cast<std::streamsize>(len)) {
    throw Error(ErrorCode::kCorruptShard, "truncated record payload");
  }
  stream_record_index_++;
  return record;
}

void ShardReader::seek_to(std::uint64_t shard_index, std::uint64_t record_index) {
  if (open_shard_index_ != shard_index) open_shard(shard_index);
  if (stream_record_index_ > record_index) {
    // Cursor moved backwards (fresh restore): rewind and skip forward.
    stream_.clear();
    stream_.seekg(0);
    stream_record_index_ = 0;
  }
  while (stream_record_index_ < record_index) {
    unsigned char lb[4];
    stream_.read(reinterpret_cast<char*>(lb), 4);
    if (stream_.gcount() != 4) {
      throw Error(ErrorCode::kCorruptShard, "truncated record length while seeking");
    }
    std::uint32_t len = static_cast<std::uint32_t>(lb[0]) |
                        (static_cast<std::uint32_t>(lb[1]) << 8) |
                        (static_cast<std::uint32_t>(lb[2]) << 16) |
                        (static_cast<std::uint32_t>(lb[3]) << 24);
    stream_.seekg(len, std::ios::cur);
    if (!stream_) throw Error(ErrorCode::kCorruptShard, "seek past end of shard");
    stream_record_index_++;
  }
}

ShardReader::Next ShardReader::next(const Cursor& cursor) {
  const std::uint64_t shard_count = manifest_.shards.size();
  Next result;

  const bool sentinel =
      cursor.shard_index == shard_count ||
      shard_count == 0;  // empty corpus: every position is end-of-epoch
  if (sentinel) {
    result.cursor = cursor;
    result.cursor.epoch++;
    result.cursor.shard_index = 0;
    result.cursor.record_index = 0;
    return result;
  }

  if (cursor.shard_index >= shard_count ||
      cursor.record_index >= manifest_.shards[cursor.shard_index].record_count) {
    throw Error(ErrorCode::kCursorManifestMismatch, "cursor out of range");
  }

  seek_to(cursor.shard_index, cursor.record_index);
  std::string record = read_record();
  SampleParseResult parsed = parse_sample(record);
  if (!parsed.ok()) {
    throw Error(ErrorCode::kCorruptShard, "record failed to parse at shard " +
                                              std::to_string(cursor.shard_index));
  }

  result.sample = std::move(parsed.sample);
  result.cursor = cursor;  // draws_consumed is the orchestrator's to advance
  result.cursor.record_index++;
  if (result.cursor.record_index >= manifest_.shards[cursor.shard_index].record_count) {
    result.cursor.shard_index++;
    result.cursor.record_index = 0;
    // shard_index == shard_count is the end-of-epoch sentinel.
  }
  return result;
}

}  // namespace planforge
