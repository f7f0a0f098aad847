// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "planforge/rng.hpp"
#include "planforge/schema.hpp"

namespace planforge {

// Task-balanced sampler. Weights live on the box-constrained simplex
// {w : sum w = 1, w_min <= w_i <= w_max}; updates make weights proportional
// to per-task validation losses (higher loss -> sampled more), projected
// back into the box. Draws are inverse-CDF over tasks in canonical enum
// order, advanced by the documented splitmix64 recurrence, so a serialized
// state replays bit-for-bit.
struct SamplerState {
  std::vector<TaskType> tasks;   // canonical enum order
  std::vector<double> weights;   // aligned with tasks, sums to 1
  double w_min = 0.0;
  double w_max = 1.0;
  double beta = 0.0;             // EMA smoothing on updates; 0 = off
  std::uint64_t rng_state = 0;
  std::uint64_t update_count = 0;
  bool last_update_skipped = false;  // set when all losses were zero

  double weight_of(TaskType task) const;
  std::string to_json() const;
  static SamplerState from_json(const std::string& text);
};

// Uniform weights 1/|tasks|. Throws Error(kInfeasibleBounds) unless
// |tasks|*w_min <= 1 <= |tasks|*w_max.
SamplerState sampler_init(const std::vector<TaskType>& tasks, double w_min,
                          double w_max, std::uint64_t seed, double beta = 0.0);

// Loss-proportional reweighting with box projection. Losses must cover every
// task (Error(kMissingTask) otherwise); all-zero losses return the state
// unchanged except for the warning flag.
SamplerState update_weights(const SamplerState& state,
                            const std::map<TaskType, double>& validation_losses);

struct Draw {
  TaskType task;
  SamplerState state;
};

Draw sampler_draw(const SamplerState& state);

// Projection onto {w : sum w = 1, lo <= w_i <= hi}, preserving the input's
// proportions on unclamped coordinates: w_i = clip(lambda * raw_i, lo, hi)
// with lambda solved so the result sums to 1. This is the stable point of
// clamp-violators-and-renormalize iteration; solving for lambda directly
// avoids orderings of that loop that terminate infeasible when both bounds
// activate. Exposed for tests.
std::vector<double> project_box_simplex(const std::vector<double>& raw, double lo,
                                        double hi);

}  // namespace planforge
