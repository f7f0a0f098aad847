// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "planforge/monitor.hpp"
#include "planforge/sampler.hpp"
#include "planforge/shardstore.hpp"
#include "planforge/trainer.hpp"

namespace planforge {

// Checkpoint directory layout (bit-exact):
//   ckpt-%09d/            (or ckpt-%09d-emergency)
//     model.bin optimizer.bin sampler.json cursor.json monitor.json
//     manifest.json       step, kind, per-file hashes, config/data hash
//     COMPLETE            empty marker, written last
// A checkpoint is consistent iff COMPLETE exists and every hash verifies.

struct RunConfig {
  std::uint64_t total_steps = 0;
  std::uint64_t batch_size = 1;
  std::uint64_t checkpoint_interval = 1;
  std::uint64_t validation_interval = 1;
  std::uint64_t seed = 0;
  double w_min = 0.0;
  double w_max = 1.0;
  double beta = 0.0;
  SimulatedTrainerConfig trainer;
  std::uint64_t keep_last = 3;   // checkpoint retention
  std::uint64_t keep_every = 0;  // additionally keep every multiple; 0 = off
  MonitorConfig monitor;

  static RunConfig from_json_file(const std::string& path);
  std::string to_json() const;
  std::uint64_t config_hash() const;
};

// Per-task corpus: each task has its own shard directory and cursor, so a
// sampler draw maps directly onto that task's stream and resume equivalence
// is provable sample-by-sample.
struct TaskDataset {
  TaskType task;
  std::string dir;
  ShardManifest manifest;
};

struct TrainingData {
  std::vector<TaskDataset> tasks;  // canonical enum order
  std::uint64_t data_hash = 0;
};

// Loads dataset.json + per-task manifests from a directory produced by
// `planforge shard`.
TrainingData load_training_data(const std::string& dir);

// Fault-injection hook: called at every named write boundary of the
// checkpoint protocol. Tests throw from it to simulate a crash.
using CheckpointBoundaryHook = std::function<void(const std::string& boundary)>;

struct StepTrace {
  std::uint64_t step;
  TaskType task;
  std::vector<std::string> sample_ids;
};
using StepObserver = std::function<void(const StepTrace&)>;

struct RunHooks {
  CheckpointBoundaryHook checkpoint_boundary;
  StepObserver on_step;
  // Return true to hard-stop after this step (simulated kill: no cleanup,
  // no final checkpoint).
  std::function<bool(std::uint64_t step)> kill_after_step;
};

struct RunSummary {
  std::uint64_t total_steps = 0;
  std::uint64_t resumed_from = 0;  // 0 = fresh run
  std::map<TaskType, std::uint64_t> draws_per_task;
  std::map<TaskType, double> final_train_losses;
  std::map<TaskType, double> final_validation_losses;
  std::map<TaskType, double> final_weights;
  std::uint64_t checkpoints_written = 0;
  std::uint64_t alerts_raised = 0;
  bool killed = false;          // stopped by kill hook
  bool trainer_failed = false;  // aborted via emergency checkpoint

  std::string to_json() const;
};

struct CheckpointRef {
  std::uint64_t step = 0;
  bool emergency = false;
  std::string dir;
};

// Scans out_dir, verifying markers and hashes. Consistent checkpoints only,
// sorted ascending by (step, periodic-over-emergency).
std::vector<CheckpointRef> list_consistent_checkpoints(const std::string& out_dir);

class Orchestrator {
 public:
  Orchestrator(RunConfig config, TrainingData data, std::unique_ptr<Trainer> trainer,
               std::string out_dir);

  // pre: out_dir has no checkpoints (fresh) — use resume() otherwise.
  RunSummary run(const RunHooks& hooks = {});
  // pre: out_dir holds >= 1 consistent checkpoint from the same config/data.
  // Restores the highest-step one and continues to total_steps.
  RunSummary resume(const RunHooks& hooks = {});

  // Writes one checkpoint of the current state. Exposed for fault-injection
  // tests; run() calls it on the checkpoint cadence.
  std::string write_checkpoint(bool emergency, const CheckpointBoundaryHook& hook = {});

 private:
  RunSummary run_loop(std::uint64_t first_step, const RunHooks& hooks);
  void restore_latest();
  void prune_checkpoints();
  std::vector<Sample> fill_batch(TaskType task);
  void record_step_metrics(std::uint64_t step, TaskType task, const TrainerStep& result);

  RunConfig config_;
  TrainingData data_;
  std::unique_ptr<Trainer> trainer_;
  std::string out_dir_;

  SamplerState sampler_;
  std::map<TaskType, Cursor> cursors_;
  std::map<TaskType, std::unique_ptr<ShardReader>> readers_;
  Monitor monitor_;
  std::uint64_t step_ = 0;  // last completed step
  double sim_clock_ms_ = 0.0;
  std::map<TaskType, double> last_train_loss_;
  std::map<TaskType, double> last_validation_loss_;
  std::map<TaskType, std::uint64_t> draws_per_task_;
  std::uint64_t checkpoints_written_ = 0;
  std::uint64_t resumed_from_ = 0;
};

}  // namespace planforge
