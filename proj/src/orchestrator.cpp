// SPDX-License-Identifier: Apache-2.0
#include "planforge/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "planforge/error.hpp"
#include "planforge/rng.hpp"

namespace planforge {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// RunConfig

namespace {

SimulatedTaskParams params_from_json(const json& j, const SimulatedTaskParams& base) {
  SimulatedTaskParams p = base;
  p.base_loss = j.value("base_loss", p.base_loss);
  p.decay = j.value("decay", p.decay);
  p.noise = j.value("noise", p.noise);
  return p;
}

}  // namespace

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open run config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kBadConfig, "run config must be a JSON object");
  }

  RunConfig c;
  c.total_steps = j.value("total_steps", 0ull);
  c.batch_size = j.value("batch_size", 1ull);
  c.checkpoint_interval = j.value("checkpoint_interval", 1ull);
  c.validation_interval = j.value("validation_interval", c.checkpoint_interval);
  c.seed = j.value("seed", 0ull);
  if (c.batch_size < 1 || c.checkpoint_interval < 1 || c.validation_interval < 1) {
    throw Error(ErrorCode::kBadConfig, "intervals and batch_size must be >= 1");
  }

  const json sampler = j.value("sampler", json::object());
  c.w_min = sampler.value("w_min", 0.0);
  c.w_max = sampler.value("w_max", 1.0);
  c.beta = sampler.value("beta", 0.0);

  const json trainer = j.value("trainer", json::object());
  c.trainer.seed = trainer.value("seed", c.seed);
  c.trainer.fail_at_step = trainer.value("fail_at_step", std::int64_t{-1});
  for (const auto& g : trainer.value("frozen_groups", json::array())) {
    c.trainer.frozen_groups.push_back(g.get<std::string>());
  }
  SimulatedTaskParams base = params_from_json(trainer.value("default", json::object()), {});
  // Tasks are resolved against the data at orchestrator construction; store
  // the default under every known task and let overrides win.
  for (TaskType t : kAllTasks) c.trainer.tasks[t] = base;
  const json tasks = trainer.value("tasks", json::object());
  for (auto it = tasks.begin(); it != tasks.end(); ++it) {
    auto task = parse_task_type(it.key());
    if (!task) throw Error(ErrorCode::kBadConfig, "unknown task " + it.key());
    c.trainer.tasks[*task] = params_from_json(it.value(), base);
  }

  const json retention = j.value("retention", json::object());
  c.keep_last = retention.value("keep_last", 3ull);
  c.keep_every = retention.value("keep_every", 0ull);

  const json monitor = j.value("monitor", json::object());
  c.monitor.util_drop_delta = monitor.value("util_drop_delta", 0.5);
  c.monitor.util_median_window = monitor.value("util_median_window", std::size_t{50});
  c.monitor.util_consecutive = monitor.value("util_consecutive", std::size_t{3});
  c.monitor.drift_short_half_life = monitor.value("drift_short_half_life", 10.0);
  c.monitor.drift_long_half_life = monitor.value("drift_long_half_life", 100.0);
  c.monitor.drift_ratio = monitor.value("drift_ratio", 1.2);
  return c;
}

std::string RunConfig::to_json() const {
  json j;
  j["total_steps"] = total_steps;
  j["batch_size"] = batch_size;
  j["checkpoint_interval"] = checkpoint_interval;
  j["validation_interval"] = validation_interval;
  j["seed"] = seed;
  j["sampler"] = {{"w_min", w_min}, {"w_max", w_max}, {"beta", beta}};
  json tasks = json::object();
  for (const auto& [task, p] : trainer.tasks) {
    tasks[planforge::to_string(task)] = {
        {"base_loss", p.base_loss}, {"decay", p.decay}, {"noise", p.noise}};
  }
  j["trainer"] = {{"seed", trainer.seed},
                  {"fail_at_step", trainer.fail_at_step},
                  {"frozen_groups", trainer.frozen_groups},
                  {"tasks", tasks}};
  j["retention"] = {{"keep_last", keep_last}, {"keep_every", keep_every}};
  j["monitor"] = {{"util_drop_delta", monitor.util_drop_delta},
                  {"util_median_window", monitor.util_median_window},
                  {"util_consecutive", monitor.util_consecutive},
                  {"drift_short_half_life", monitor.drift_short_half_life},
                  {"drift_long_half_life", monitor.drift_long_half_life},
                  {"drift_ratio", monitor.drift_ratio}};
  return j.dump();
}

std::uint64_t RunConfig::config_hash() const { return fnv1a64(to_json()); }

// ---------------------------------------------------------------------------
// Training data

TrainingData load_training_data(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "dataset.json");
  if (!in) throw Error(ErrorCode::kIoFailure, "no dataset.json in " + dir);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("tasks")) {
    throw Error(ErrorCode::kBadConfig, "malformed dataset.json");
  }

  TrainingData data;
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (TaskType task : kAllTasks) {
    const std::string name = to_string(task);
    if (!j["tasks"].contains(name)) continue;
    TaskDataset ds;
    ds.task = task;
    ds.dir = (fs::path(dir) / j["tasks"][name].value("path", name)).string();
    ds.manifest = load_manifest(ds.dir);
    if (ds.manifest.total_records == 0) {
      throw Error(ErrorCode::kBadConfig, "task " + name + " has an empty corpus");
    }
    h = fnv1a64(name.data(), name.size(), h);
    for (const auto& shard : ds.manifest.shards) {
      h = fnv1a64(shard.content_hash.data(), shard.content_hash.size(), h);
    }
    data.tasks.push_back(std::move(ds));
  }
  if (data.tasks.empty()) {
    throw Error(ErrorCode::kBadConfig, "dataset.json lists no tasks");
  }
  data.data_hash = h;
  return data;
}

// ---------------------------------------------------------------------------
// RunSummary

std::string RunSummary::to_json() const {
  json j;
  j["total_steps"] = total_steps;
  j["resumed_from"] = resumed_from;
  j["checkpoints_written"] = checkpoints_written;
  j["alerts_raised"] = alerts_raised;
  j["killed"] = killed;
  j["trainer_failed"] = trainer_failed;
  json draws = json::object(), train = json::object(), valid = json::object(),
       weights = json::object();
  for (const auto& [task, n] : draws_per_task) draws[planforge::to_string(task)] = n;
  for (const auto& [task, v] : final_train_losses) train[planforge::to_string(task)] = v;
  for (const auto& [task, v] : final_validation_losses) {
    valid[planforge::to_string(task)] = v;
  }
  for (const auto& [task, v] : final_weights) weights[planforge::to_string(task)] = v;
  j["draws_per_task"] = draws;
  j["final_train_losses"] = train;
  j["final_validation_losses"] = valid;
  j["final_weights"] = weights;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Checkpoint scan

namespace {

std::string checkpoint_dir_name(std::uint64_t step, bool emergency) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "ckpt-%09llu%s", static_cast<unsigned long long>(step),
                emergency ? "-emergency" : "");
  return buf;
}

std::string hex_hash(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

const std::vector<std::string> kCheckpointFiles = {
    "model.bin", "optimizer.bin", "sampler.json", "cursor.json", "monitor.json"};

bool checkpoint_consistent(const fs::path& dir, json* manifest_out) {
  if (!fs::exists(dir / "COMPLETE")) return false;
  auto manifest_text = read_file(dir / "manifest.json");
  if (!manifest_text) return false;
  json manifest = json::parse(*manifest_text, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object() || !manifest.contains("files")) {
    return false;
  }
  for (const std::string& name : kCheckpointFiles) {
    if (!manifest["files"].contains(name)) return false;
    auto content = read_file(dir / name);
    if (!content) return false;
    if (hex_hash(fnv1a64(*content)) != manifest["files"][name].get<std::string>()) {
      return false;
    }
  }
  if (manifest_out) *manifest_out = std::move(manifest);
  return true;
}

}  // namespace

std::vector<CheckpointRef> list_consistent_checkpoints(const std::string& out_dir) {
  std::vector<CheckpointRef> refs;
  if (!fs::exists(out_dir)) return refs;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("ckpt-", 0) != 0) continue;
    if (name.size() >= 4 && name.substr(name.size() - 4) == ".tmp") continue;
    bool emergency = name.size() > 10 && name.substr(name.size() - 10) == "-emergency";
    std::string digits = name.substr(5, 9);
    if (digits.size() != 9 ||
        !std::all_of(digits.begin(), digits.end(),
                     [](char c) { return c >= '0' && c <= '9'; })) {
      continue;
    }
    if (!checkpoint_consistent(entry.path(), nullptr)) continue;
    refs.push_back({std::stoull(digits), emergency, entry.path().string()});
  }
  // Ascending by step; periodic wins a tie with emergency at the same step.
  std::sort(refs.begin(), refs.end(), [](const CheckpointRef& a, const CheckpointRef& b) {
    if (a.step != b.step) return a.step < b.step;
    return a.emergency && !b.emergency;
  });
  return refs;
}

// ---------------------------------------------------------------------------
// Orchestrator

Orchestrator::Orchestrator(RunConfig config, TrainingData data,
                           std::unique_ptr<Trainer> trainer, std::string out_dir)
    : config_(std::move(config)),
      data_(std::move(data)),
      trainer_(std::move(trainer)),
      out_dir_(std::move(out_dir)),
      sampler_(),
      monitor_(config_.monitor) {
  std::vector<TaskType> tasks;
  for (const TaskDataset& ds : data_.tasks) {
    tasks.push_back(ds.task);
    cursors_[ds.task] = Cursor{};
    readers_[ds.task] = std::make_unique<ShardReader>(ds.dir, ds.manifest);
  }
  sampler_ = sampler_init(tasks, config_.w_min, config_.w_max, config_.seed, config_.beta);
  fs::create_directories(out_dir_);
}

std::vector<Sample> Orchestrator::fill_batch(TaskType task) {
  ShardReader& reader = *readers_.at(task);
  Cursor cursor = cursors_.at(task);
  std::vector<Sample> batch;
  batch.reserve(config_.batch_size);
  while (batch.size() < config_.batch_size) {
    ShardReader::Next next = reader.next(cursor);
    cursor = next.cursor;
    if (next.sample.has_value()) batch.push_back(std::move(*next.sample));
    // end-of-epoch wraps silently; corpora are nonempty by construction
  }
  cursor.draws_consumed++;  // one sampler draw serviced
  cursors_[task] = cursor;
  return batch;
}

void Orchestrator::record_step_metrics(std::uint64_t step, TaskType task,
                                       const TrainerStep& result) {
  sim_clock_ms_ += result.step_time_ms;
  const double throughput =
      result.step_time_ms > 0.0
          ? static_cast<double>(config_.batch_size) / (result.step_time_ms / 1000.0)
          : 0.0;

  std::ofstream metrics(fs::path(out_dir_) / "metrics.jsonl", std::ios::app);
  auto emit = [&](MetricKind kind, std::optional<TaskType> t, double value) {
    MetricEvent event{step, sim_clock_ms_, kind, t, value};
    monitor_.record(event);
    metrics << event.to_json() << "\n";
  };
  for (const auto& [loss_task, value] : result.losses) {
    emit(MetricKind::kTaskLoss, loss_task, value);
    last_train_loss_[loss_task] = value;
  }
  emit(MetricKind::kThroughput, std::nullopt, throughput);
  emit(MetricKind::kMemory, std::nullopt, result.memory_bytes);
  emit(MetricKind::kUtilization, std::nullopt, result.utilization);
  (void)task;
}

std::string Orchestrator::write_checkpoint(bool emergency,
                                           const CheckpointBoundaryHook& hook) {
  auto boundary = [&](const std::string& name) {
    if (hook) hook(name);
  };

  const std::string name = checkpoint_dir_name(step_, emergency);
  const fs::path final_dir = fs::path(out_dir_) / name;
  const fs::path tmp_dir = fs::path(out_dir_) / (name + ".tmp");

  std::error_code ec;
  fs::remove_all(tmp_dir, ec);  // stale leftovers from a crashed attempt
  fs::create_directories(tmp_dir);

  json cursor_state;
  cursor_state["sim_clock_ms"] = sim_clock_ms_;
  json cursor_map = json::object(), draws = json::object(), train_losses = json::object(),
       valid_losses = json::object();
  for (const auto& [task, cursor] : cursors_) {
    cursor_map[to_string(task)] = json::parse(serialize_cursor(cursor));
  }
  for (const auto& [task, n] : draws_per_task_) draws[to_string(task)] = n;
  for (const auto& [task, v] : last_train_loss_) train_losses[to_string(task)] = v;
  for (const auto& [task, v] : last_validation_loss_) valid_losses[to_string(task)] = v;
  cursor_state["cursors"] = cursor_map;
  cursor_state["draws_per_task"] = draws;
  cursor_state["last_train_loss"] = train_losses;
  cursor_state["last_validation_loss"] = valid_losses;

  TrainerSnapshot snap = trainer_->snapshot();
  const std::vector<std::pair<std::string, std::string>> files = {
      {"model.bin", snap.model_blob},
      {"optimizer.bin", snap.optimizer_blob},
      {"sampler.json", sampler_.to_json()},
      {"cursor.json", cursor_state.dump()},
      {"monitor.json", monitor_.to_json()},
  };

  json manifest;
  manifest["step"] = step_;
  manifest["kind"] = emergency ? "emergency" : "periodic";
  manifest["schema_version"] = 1;
  manifest["config_hash"] = hex_hash(config_.config_hash());
  manifest["data_hash"] = hex_hash(data_.data_hash);
  manifest["files"] = json::object();

  for (const auto& [file_name, content] : files) {
    std::ofstream out(tmp_dir / file_name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoFailure, "cannot create " + file_name);
    const std::size_t half = content.size() / 2;
    out.write(content.data(), static_cast<std::streamsize>(half));
    out.flush();
    boundary("half:" + file_name);
    out.write(content.data() + half, static_cast<std::streamsize>(content.size() - half));
    out.flush();
    out.close();
    if (!out) throw Error(ErrorCode::kIoFailure, "short write on " + file_name);
    boundary("done:" + file_name);
    manifest["files"][file_name] = hex_hash(fnv1a64(content));
  }

  {
    std::ofstream out(tmp_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoFailure, "cannot create manifest.json");
    out << manifest.dump();
    out.close();
    if (!out) throw Error(ErrorCode::kIoFailure, "short write on manifest.json");
  }
  boundary("manifest");

  // A marker-less final dir can survive a crash between rename and marker;
  // it is inconsistent by definition and safe to replace.
  if (fs::exists(final_dir)) {
    if (fs::exists(final_dir / "COMPLETE")) {
      throw Error(ErrorCode::kIoFailure,
                  "checkpoint " + name + " already exists with marker");
    }
    fs::remove_all(final_dir);
  }
  fs::rename(tmp_dir, final_dir);
  boundary("renamed");

  {
    std::ofstream marker(final_dir / "COMPLETE", std::ios::binary | std::ios::trunc);
    if (!marker) throw Error(ErrorCode::kIoFailure, "cannot write COMPLETE marker");
  }
  boundary("marker");
  return final_dir.string();
}

void Orchestrator::prune_checkpoints() {
  std::vector<CheckpointRef> refs = list_consistent_checkpoints(out_dir_);
  std::vector<std::uint64_t> periodic_steps;
  for (const CheckpointRef& ref : refs) {
    if (!ref.emergency) periodic_steps.push_back(ref.step);
  }
  if (periodic_steps.size() <= config_.keep_last) return;
  const std::size_t cut = periodic_steps.size() - config_.keep_last;
  for (std::size_t i = 0; i < cut; ++i) {
    const std::uint64_t step = periodic_steps[i];
    if (config_.keep_every > 0 && step % config_.keep_every == 0) continue;
    std::error_code ec;
    fs::remove_all(fs::path(out_dir_) / checkpoint_dir_name(step, false), ec);
  }
}

void Orchestrator::restore_latest() {
  std::vector<CheckpointRef> refs = list_consistent_checkpoints(out_dir_);
  if (refs.empty()) {
    throw Error(ErrorCode::kNoConsistentCheckpoint, out_dir_);
  }
  const CheckpointRef& best = refs.back();

  json manifest;
  checkpoint_consistent(best.dir, &manifest);
  if (manifest.value("config_hash", "") != hex_hash(config_.config_hash())) {
    throw Error(ErrorCode::kConfigMismatch, "checkpoint written under different config");
  }
  if (manifest.value("data_hash", "") != hex_hash(data_.data_hash)) {
    throw Error(ErrorCode::kConfigMismatch, "checkpoint written under different data");
  }

  auto read = [&](const std::string& file) {
    auto content = read_file(fs::path(best.dir) / file);
    if (!content) throw Error(ErrorCode::kIoFailure, "missing " + file);
    return *content;
  };

  trainer_->restore(TrainerSnapshot{read("model.bin"), read("optimizer.bin")});
  sampler_ = SamplerState::from_json(read("sampler.json"));
  monitor_ = Monitor::from_json(read("monitor.json"), config_.monitor);

  json cursor_state = json::parse(read("cursor.json"));
  sim_clock_ms_ = cursor_state.value("sim_clock_ms", 0.0);
  cursors_.clear();
  draws_per_task_.clear();
  last_train_loss_.clear();
  last_validation_loss_.clear();
  for (const TaskDataset& ds : data_.tasks) {
    const std::string name = to_string(ds.task);
    if (!cursor_state["cursors"].contains(name)) {
      throw Error(ErrorCode::kCursorManifestMismatch, "checkpoint lacks cursor for " + name);
    }
    cursors_[ds.task] =
        restore_cursor(cursor_state["cursors"][name].dump(), ds.manifest);
  }
  auto load_map_u64 = [&](const char* key, std::map<TaskType, std::uint64_t>& out) {
    const json m = cursor_state.value(key, json::object());
    for (auto it = m.begin(); it != m.end(); ++it) {
      out[*parse_task_type(it.key())] = it.value().get<std::uint64_t>();
    }
  };
  auto load_map_d = [&](const char* key, std::map<TaskType, double>& out) {
    const json m = cursor_state.value(key, json::object());
    for (auto it = m.begin(); it != m.end(); ++it) {
      out[*parse_task_type(it.key())] = it.value().get<double>();
    }
  };
  load_map_u64("draws_per_task", draws_per_task_);
  load_map_d("last_train_loss", last_train_loss_);
  load_map_d("last_validation_loss", last_validation_loss_);

  step_ = best.step;
  resumed_from_ = best.step;
}

RunSummary Orchestrator::run(const RunHooks& hooks) {
  if (!list_consistent_checkpoints(out_dir_).empty()) {
    throw Error(ErrorCode::kBadConfig,
                "out dir already holds checkpoints; use resume");
  }
  step_ = 0;
  return run_loop(1, hooks);
}

RunSummary Orchestrator::resume(const RunHooks& hooks) {
  restore_latest();
  return run_loop(step_ + 1, hooks);
}

RunSummary Orchestrator::run_loop(std::uint64_t first_step, const RunHooks& hooks) {
  RunSummary summary;
  summary.resumed_from = resumed_from_;

  for (std::uint64_t n = first_step; n <= config_.total_steps; ++n) {
    Draw draw = sampler_draw(sampler_);
    sampler_ = std::move(draw.state);
    draws_per_task_[draw.task]++;

    std::vector<Sample> batch = fill_batch(draw.task);
    if (hooks.on_step) {
      StepTrace trace{n, draw.task, {}};
      trace.sample_ids.reserve(batch.size());
      for (const Sample& s : batch) trace.sample_ids.push_back(s.id);
      hooks.on_step(trace);
    }

    TrainerStep result;
    try {
      result = trainer_->step(batch, n);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kTrainerFailure) {
        step_ = n - 1;  // the failed step never completed
        try {
          write_checkpoint(true);
        } catch (const Error&) {
          // best-effort: the emergency checkpoint must not mask the failure
        }
        throw;
      }
      throw;
    }
    record_step_metrics(n, draw.task, result);

    if (n % config_.validation_interval == 0) {
      std::map<TaskType, double> losses;
      std::map<TaskType, double> all = trainer_->validation_losses(n);
      for (const auto& [task, cursor] : cursors_) losses[task] = all.at(task);
      sampler_ = update_weights(sampler_, losses);
      last_validation_loss_ = losses;
    }

    step_ = n;
    if (n % config_.checkpoint_interval == 0) {
      write_checkpoint(false, hooks.checkpoint_boundary);
      checkpoints_written_++;
      prune_checkpoints();
    }

    if (hooks.kill_after_step && hooks.kill_after_step(n)) {
      summary.killed = true;
      break;
    }
  }

  monitor_.flush();
  summary.total_steps = step_;
  summary.draws_per_task = draws_per_task_;
  summary.final_train_losses = last_train_loss_;
  summary.final_validation_losses = last_validation_loss_;
  for (std::size_t i = 0; i < sampler_.tasks.size(); ++i) {
    summary.final_weights[sampler_.tasks[i]] = sampler_.weights[i];
  }
  summary.checkpoints_written = checkpoints_written_;
  summary.alerts_raised = monitor_.alerts().size();

  if (!summary.killed) {
    std::ofstream alerts(fs::path(out_dir_) / "alerts.jsonl", std::ios::trunc);
    for (const Alert& a : monitor_.alerts()) alerts << a.to_json() << "\n";
    std::ofstream out(fs::path(out_dir_) / "run_summary.json", std::ios::trunc);
    out << summary.to_json();
  }
  return summary;
}

}  // namespace planforge
