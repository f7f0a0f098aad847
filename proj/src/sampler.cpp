// SPDX-License-Identifier: Apache-2.0
#include "planforge/sampler.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "planforge/error.hpp"

namespace planforge {

using nlohmann::json;

double SamplerState::weight_of(TaskType task) const {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i] == task) return weights[i];
  }
  throw Error(ErrorCode::kMissingTask, "task not in sampler: " + to_string(task));
}

SamplerState sampler_init(const std::vector<TaskType>& tasks, double w_min,
                          double w_max, std::uint64_t seed, double beta) {
  if (tasks.empty()) throw Error(ErrorCode::kBadConfig, "sampler needs at least one task");
  const double n = static_cast<double>(tasks.size());
  if (!(w_min >= 0.0) || !(w_max <= 1.0) || !(w_min <= w_max) ||
      n * w_min > 1.0 + 1e-12 || n * w_max < 1.0 - 1e-12) {
    throw Error(ErrorCode::kInfeasibleBounds,
                "need |tasks|*w_min <= 1 <= |tasks|*w_max");
  }
  if (!(beta >= 0.0) || !(beta < 1.0)) {
    throw Error(ErrorCode::kBadConfig, "beta must be in [0,1)");
  }

  SamplerState state;
  state.tasks = tasks;
  std::sort(state.tasks.begin(), state.tasks.end());  // canonical enum order
  state.tasks.erase(std::unique(state.tasks.begin(), state.tasks.end()),
                    state.tasks.end());
  if (state.tasks.size() != tasks.size()) {
    throw Error(ErrorCode::kBadConfig, "duplicate task in sampler");
  }
  state.weights.assign(state.tasks.size(), 1.0 / n);
  state.w_min = w_min;
  state.w_max = w_max;
  state.beta = beta;
  state.rng_state = seed;
  return state;
}

std::vector<double> project_box_simplex(const std::vector<double>& raw, double lo,
                                        double hi) {
  const std::size_t n = raw.size();
  auto clip = [lo, hi](double x) { return std::min(hi, std::max(lo, x)); };

  // Already feasible: return unchanged (idempotence, and it keeps the
  // unconstrained proportional weights exact).
  bool feasible = true;
  for (double w : raw) {
    if (w < lo || w > hi) {
      feasible = false;
      break;
    }
  }
  if (feasible) return raw;

  // f(lambda) = sum clip(lambda*raw_i) is piecewise linear, nondecreasing.
  // Find the segment where it crosses 1, then split tasks into low/high/free.
  std::vector<double> breakpoints = {0.0};
  for (double r : raw) {
    if (r > 0.0) {
      if (lo > 0.0) breakpoints.push_back(lo / r);
      breakpoints.push_back(hi / r);
    }
  }
  std::sort(breakpoints.begin(), breakpoints.end());
  breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()),
                    breakpoints.end());

  auto f = [&](double lambda) {
    double sum = 0.0;
    for (double r : raw) sum += clip(lambda * r);
    return sum;
  };

  double seg_lo = breakpoints.back(), seg_hi = breakpoints.back();
  for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
    if (f(breakpoints[k]) <= 1.0 && 1.0 <= f(breakpoints[k + 1])) {
      seg_lo = breakpoints[k];
      seg_hi = breakpoints[k + 1];
      break;
    }
  }

  const double mid = seg_lo == seg_hi ? seg_lo : 0.5 * (seg_lo + seg_hi);
  double clamped_mass = 0.0;
  double free_raw = 0.0;
  std::vector<int> kind(n);  // -1 low, 0 free, +1 high
  for (std::size_t i = 0; i < n; ++i) {
    double v = mid * raw[i];
    if (v <= lo) {
      kind[i] = -1;
      clamped_mass += lo;
    } else if (v >= hi) {
      kind[i] = 1;
      clamped_mass += hi;
    } else {
      kind[i] = 0;
      free_raw += raw[i];
    }
  }

  std::vector<double> out(n);
  const double remaining = 1.0 - clamped_mass;
  for (std::size_t i = 0; i < n; ++i) {
    if (kind[i] < 0) {
      out[i] = lo;
    } else if (kind[i] > 0) {
      out[i] = hi;
    } else {
      // Free coordinates share the remaining mass proportionally; single
      // free coordinate gets it exactly.
      out[i] = clip(remaining * (raw[i] / free_raw));
    }
  }

  // Zero-loss tasks are stuck at lo under pure proportionality, so when the
  // cap binds elsewhere the leftover mass has nowhere to go. Spill it
  // equally across coordinates with headroom (feasibility n*hi >= 1
  // guarantees this terminates).
  double total = 0.0;
  for (double w : out) total += w;
  while (1.0 - total > 1e-9) {
    double deficit = 1.0 - total;
    std::size_t open = 0;
    for (double w : out) {
      if (w < hi) open++;
    }
    if (open == 0) break;
    for (double& w : out) {
      if (w < hi) w = std::min(hi, w + deficit / static_cast<double>(open));
    }
    total = 0.0;
    for (double w : out) total += w;
  }
  return out;
}

SamplerState update_weights(const SamplerState& state,
                            const std::map<TaskType, double>& validation_losses) {
  std::vector<double> losses(state.tasks.size());
  double sum = 0.0;
  bool any_positive = false;
  for (std::size_t i = 0; i < state.tasks.size(); ++i) {
    auto it = validation_losses.find(state.tasks[i]);
    if (it == validation_losses.end()) {
      throw Error(ErrorCode::kMissingTask,
                  "no validation loss for " + to_string(state.tasks[i]));
    }
    double loss = it->second;
    if (!(loss >= 0.0) || !std::isfinite(loss)) {
      throw Error(ErrorCode::kBadConfig,
                  "validation loss must be finite and nonnegative");
    }
    losses[i] = loss;
    sum += loss;
    if (loss > 0.0) any_positive = true;
  }

  SamplerState next = state;
  if (!any_positive) {
    next.last_update_skipped = true;  // ALL_ZERO_LOSSES: weights unchanged
    return next;
  }

  std::vector<double> raw(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) raw[i] = losses[i] / sum;
  std::vector<double> updated = project_box_simplex(raw, state.w_min, state.w_max);

  if (state.beta > 0.0) {
    for (std::size_t i = 0; i < updated.size(); ++i) {
      updated[i] = state.beta * state.weights[i] + (1.0 - state.beta) * updated[i];
    }
  }

  next.weights = std::move(updated);
  next.update_count = state.update_count + 1;
  next.last_update_skipped = false;
  return next;
}

Draw sampler_draw(const SamplerState& state) {
  Draw result{state.tasks.front(), state};
  SplitMix64 rng(0);
  rng.set_state(state.rng_state);
  const double u = rng.next_double();
  result.state.rng_state = rng.state();

  double cum = 0.0;
  for (std::size_t i = 0; i < state.tasks.size(); ++i) {
    cum += state.weights[i];
    if (u < cum) {
      result.task = state.tasks[i];
      return result;
    }
  }
  result.task = state.tasks.back();  // u landed in the fp tail of the CDF
  return result;
}

std::string SamplerState::to_json() const {
  json j;
  j["tasks"] = json::array();
  j["weights"] = json::object();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    j["tasks"].push_back(planforge::to_string(tasks[i]));
    j["weights"][planforge::to_string(tasks[i])] = weights[i];
  }
  j["w_min"] = w_min;
  j["w_max"] = w_max;
  j["beta"] = beta;
  j["rng_state"] = std::to_string(rng_state);
  j["update_count"] = update_count;
  j["last_update_skipped"] = last_update_skipped;
  return j.dump();
}

SamplerState SamplerState::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kBadConfig, "malformed sampler state");
  }
  SamplerState state;
  for (const auto& name : j.value("tasks", json::array())) {
    auto task = parse_task_type(name.get<std::string>());
    if (!task) throw Error(ErrorCode::kBadConfig, "unknown task in sampler state");
    state.tasks.push_back(*task);
  }
  state.weights.resize(state.tasks.size());
  for (std::size_t i = 0; i < state.tasks.size(); ++i) {
    state.weights[i] = j["weights"][planforge::to_string(state.tasks[i])].get<double>();
  }
  state.w_min = j.value("w_min", 0.0);
  state.w_max = j.value("w_max", 1.0);
  state.beta = j.value("beta", 0.0);
  state.rng_state = std::stoull(j.value("rng_state", std::string("0")));
  state.update_count = j.value("update_count", 0ull);
  state.last_update_skipped = j.value("last_update_skipped", false);
  return state;
}

}  // namespace planforge
