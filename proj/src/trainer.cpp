// SPDX-License-Identifier: Apache-2.0
#include "planforge/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "planforge/error.hpp"
#include "planforge/rng.hpp"

namespace planforge {

using nlohmann::json;

namespace {

// Pure noise in [-1,1] keyed by (seed, task, step). One splitmix advance on
// a mixed key keeps streams independent across tasks and steps.
double unit_noise(std::uint64_t seed, TaskType task, std::uint64_t step,
                  std::uint64_t salt) {
  std::uint64_t key = seed;
  key ^= fnv1a64(to_string(task));
  key ^= salt;
  key += step * 0x9E3779B97F4A7C15ULL;
  SplitMix64 rng(key);
  return rng.next_double() * 2.0 - 1.0;
}

constexpr std::uint64_t kTrainSalt = 0x747261696E00ULL;  // disjoint noise domains
constexpr std::uint64_t kValidSalt = 0x76616C696400ULL;

}  // namespace

SimulatedTrainer::SimulatedTrainer(SimulatedTrainerConfig config)
    : config_(std::move(config)) {
  if (config_.tasks.empty()) {
    throw Error(ErrorCode::kBadConfig, "simulated trainer needs per-task parameters");
  }
}

double SimulatedTrainer::loss_at(TaskType task, std::uint64_t step_index,
                                 bool validation) const {
  auto it = config_.tasks.find(task);
  if (it == config_.tasks.end()) {
    throw Error(ErrorCode::kMissingTask, "no simulated params for " + to_string(task));
  }
  const SimulatedTaskParams& p = it->second;
  double mean = p.base_loss * std::exp(-p.decay * static_cast<double>(step_index));
  double noise = unit_noise(config_.seed, task, step_index,
                            validation ? kValidSalt : kTrainSalt);
  return std::max(0.0, mean + noise * p.noise);
}

TrainerStep SimulatedTrainer::step(const std::vector<Sample>& batch,
                                   std::uint64_t step_index) {
  if (config_.fail_at_step >= 0 &&
      static_cast<std::int64_t>(step_index) == config_.fail_at_step) {
    throw Error(ErrorCode::kTrainerFailure,
                "injected failure at step " + std::to_string(step_index));
  }
  TrainerStep result;
  for (const Sample& s : batch) {
    batch_digest_ = fnv1a64(s.id.data(), s.id.size(), batch_digest_);
    result.losses[s.task] = loss_at(s.task, step_index, false);
  }
  result.utilization =
      std::clamp(config_.base_utilization +
                     0.03 * unit_noise(config_.seed, TaskType::kPlanningQa, step_index,
                                       0x7574696CULL),
                 0.0, 1.0);
  result.memory_bytes = config_.base_memory_bytes *
                        (1.0 + 0.02 * unit_noise(config_.seed, TaskType::kPlanningQa,
                                                 step_index, 0x6D656DULL));
  result.step_time_ms = config_.step_time_ms;
  steps_done_ = step_index;
  return result;
}

std::map<TaskType, double> SimulatedTrainer::validation_losses(std::uint64_t step_index) {
  std::map<TaskType, double> losses;
  for (const auto& [task, params] : config_.tasks) {
    losses[task] = loss_at(task, step_index, true);
  }
  return losses;
}

TrainerSnapshot SimulatedTrainer::snapshot() const {
  json model;
  model["kind"] = "simulated";
  model["steps_done"] = steps_done_;
  model["seed"] = config_.seed;
  model["batch_digest"] = batch_digest_;
  json opt;
  opt["kind"] = "simulated-optimizer";
  opt["steps_done"] = steps_done_;
  return TrainerSnapshot{model.dump(), opt.dump()};
}

void SimulatedTrainer::restore(const TrainerSnapshot& snap) {
  json model = json::parse(snap.model_blob, nullptr, false);
  if (model.is_discarded() || model.value("kind", "") != "simulated") {
    throw Error(ErrorCode::kConfigMismatch, "snapshot is not from a simulated trainer");
  }
  if (model.value("seed", 0ull) != config_.seed) {
    throw Error(ErrorCode::kConfigMismatch, "snapshot seed does not match config");
  }
  steps_done_ = model.value("steps_done", 0ull);
  batch_digest_ = model.value("batch_digest", 0ull);
}

}  // namespace planforge
