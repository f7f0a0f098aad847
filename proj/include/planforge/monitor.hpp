// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "planforge/schema.hpp"

namespace planforge {

enum class MetricKind { kTaskLoss, kThroughput, kMemory, kUtilization };

std::string to_string(MetricKind kind);

struct MetricEvent {
  std::uint64_t step = 0;
  double wall_time_ms = 0.0;  // simulated clock, ms since run start
  MetricKind kind = MetricKind::kUtilization;
  std::optional<TaskType> task;  // task_loss only
  double value = 0.0;

  std::string to_json() const;
};

enum class AlertKind { kUtilizationDrop, kLossDrift };

struct Alert {
  AlertKind kind = AlertKind::kUtilizationDrop;
  std::uint64_t first_step = 0;
  std::uint64_t last_step = 0;
  std::optional<TaskType> task;  // loss drift only
  std::string evidence;          // triggering statistics, human-readable

  std::string to_json() const;
};

// Detection thresholds. All values are artifact defaults (recorded into run
// metadata), not paper-sourced.
struct MonitorConfig {
  double util_drop_delta = 0.5;     // fire when util < delta * rolling median
  std::size_t util_median_window = 50;
  std::size_t util_consecutive = 3;
  double drift_short_half_life = 10.0;   // events
  double drift_long_half_life = 100.0;   // events
  double drift_ratio = 1.2;              // fire when ema_short/ema_long > ratio
};

// Pure, idempotent detection over an immutable window of events, exactly the
// batch form of the incremental detector below.
std::vector<Alert> detect(const std::vector<MetricEvent>& window,
                          const MonitorConfig& config);

enum class RecordVerdict { kAccepted, kOutOfOrder, kInvalidValue };

// Rolling-state monitor: O(1) memory per stream, serializable into
// checkpoints. Incremental alerts over a stream equal detect() over the
// full window. record() is safe to call from concurrent appenders.
class Monitor {
 public:
  explicit Monitor(MonitorConfig config = {});

  Monitor(Monitor&& other) noexcept
      : config_(std::move(other.config_)),
        util_(std::move(other.util_)),
        drift_(std::move(other.drift_)),
        last_step_by_kind_(std::move(other.last_step_by_kind_)),
        alerts_(std::move(other.alerts_)),
        rejected_out_of_order_(other.rejected_out_of_order_),
        rejected_invalid_(other.rejected_invalid_) {}
  Monitor& operator=(Monitor&& other) noexcept {
    config_ = std::move(other.config_);
    util_ = std::move(other.util_);
    drift_ = std::move(other.drift_);
    last_step_by_kind_ = std::move(other.last_step_by_kind_);
    alerts_ = std::move(other.alerts_);
    rejected_out_of_order_ = other.rejected_out_of_order_;
    rejected_invalid_ = other.rejected_invalid_;
    return *this;
  }

  // Events must arrive in nondecreasing step order per stream (per kind,
  // and per task for task_loss). Violations are rejected and counted.
  RecordVerdict record(const MetricEvent& event);

  // Alerts completed so far (violation runs that have ended). flush() also
  // closes any open runs; call it at end of run before reading alerts.
  void flush();
  const std::vector<Alert>& alerts() const { return alerts_; }
  std::uint64_t rejected_out_of_order() const { return rejected_out_of_order_; }
  std::uint64_t rejected_invalid() const { return rejected_invalid_; }

  // Serialized rolling state; restore() reproduces identical subsequent
  // alerts for identical subsequent events. Already-emitted alerts travel
  // with the state.
  std::string to_json() const;
  static Monitor from_json(const std::string& text, const MonitorConfig& config);

  const MonitorConfig& config() const { return config_; }

 private:
  struct UtilState {
    std::deque<double> window;  // last M utilization values
    std::optional<std::uint64_t> run_first_step;
    std::uint64_t run_last_step = 0;
    std::size_t run_length = 0;
    double run_min_ratio = 0.0;
    std::optional<std::uint64_t> last_step;
  };
  struct DriftState {
    double ema_short = 0.0;
    double ema_long = 0.0;
    bool initialized = false;
    std::optional<std::uint64_t> run_first_step;
    std::uint64_t run_last_step = 0;
    double run_max_ratio = 0.0;
    std::optional<std::uint64_t> last_step;
  };

  void ingest_utilization(const MetricEvent& event);
  void ingest_loss(const MetricEvent& event);
  void close_util_run();
  void close_drift_run(TaskType task);

  MonitorConfig config_;
  UtilState util_;
  std::map<TaskType, DriftState> drift_;
  std::map<MetricKind, std::uint64_t> last_step_by_kind_;  // throughput/memory ordering
  std::vector<Alert> alerts_;
  std::uint64_t rejected_out_of_order_ = 0;
  std::uint64_t rejected_invalid_ = 0;
  std::mutex mutex_;
};

}  // namespace planforge
