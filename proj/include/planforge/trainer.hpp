// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "planforge/schema.hpp"

namespace planforge {

// The model/optimizer side of the loop, kept opaque: the orchestrator only
// sees losses out and blobs in/out. frozen_groups is carried verbatim into
// run metadata; the simulated trainer assigns it no semantics.
struct TrainerStep {
  std::map<TaskType, double> losses;  // tasks covered by this batch
  double utilization = 0.0;           // [0,1]
  double memory_bytes = 0.0;
  double step_time_ms = 0.0;          // simulated clock increment
};

struct TrainerSnapshot {
  std::string model_blob;
  std::string optimizer_blob;
};

class Trainer {
 public:
  virtual ~Trainer() = default;

  // restore(snapshot()) followed by an identical step sequence must
  // reproduce identical loss outputs.
  virtual TrainerStep step(const std::vector<Sample>& batch, std::uint64_t step_index) = 0;
  virtual std::map<TaskType, double> validation_losses(std::uint64_t step_index) = 0;
  virtual TrainerSnapshot snapshot() const = 0;
  virtual void restore(const TrainerSnapshot& snap) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic stand-in for the real model. Emitted loss for task t at
// global step n is
//
//   L0_t * exp(-k_t * n) + noise(seed, t, n) * sigma_t
//
// with noise a pure function of its arguments (uniform in [-1,1], clamped so
// losses stay nonnegative). Validation losses use a disjoint seed domain so
// weight updates are deterministic but uncorrelated with training noise.
struct SimulatedTaskParams {
  double base_loss = 2.0;
  double decay = 5e-4;
  double noise = 0.01;
};

struct SimulatedTrainerConfig {
  std::map<TaskType, SimulatedTaskParams> tasks;
  std::uint64_t seed = 0;
  std::vector<std::string> frozen_groups;
  std::int64_t fail_at_step = -1;  // Error(kTrainerFailure) at this step; -1 = never
  double base_utilization = 0.92;
  double base_memory_bytes = 24.0 * 1024 * 1024 * 1024;
  double step_time_ms = 450.0;
};

class SimulatedTrainer : public Trainer {
 public:
  explicit SimulatedTrainer(SimulatedTrainerConfig config);

  TrainerStep step(const std::vector<Sample>& batch, std::uint64_t step_index) override;
  std::map<TaskType, double> validation_losses(std::uint64_t step_index) override;
  TrainerSnapshot snapshot() const override;
  void restore(const TrainerSnapshot& snap) override;

  double loss_at(TaskType task, std::uint64_t step_index, bool validation) const;
  std::uint64_t steps_done() const { return steps_done_; }

 private:
  SimulatedTrainerConfig config_;
  std::uint64_t steps_done_ = 0;
  std::uint64_t batch_digest_ = 0;  // folds consumed sample ids, for audit
};

}  // namespace planforge
