// SPDX-License-Identifier: Apache-2.0
#include "planforge/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "planforge/error.hpp"

namespace planforge {

using nlohmann::json;

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::kTaskLoss: return "task_loss";
    case MetricKind::kThroughput: return "throughput";
    case MetricKind::kMemory: return "memory";
    case MetricKind::kUtilization: return "utilization";
  }
  return "unknown";
}

std::string MetricEvent::to_json() const {
  json j;
  j["step"] = step;
  j["wall_time_ms"] = wall_time_ms;
  j["kind"] = planforge::to_string(kind);
  if (task.has_value()) j["task"] = planforge::to_string(*task);
  j["value"] = value;
  return j.dump();
}

std::string Alert::to_json() const {
  json j;
  j["kind"] = kind == AlertKind::kUtilizationDrop ? "UTILIZATION_DROP" : "LOSS_DRIFT";
  j["first_step"] = first_step;
  j["last_step"] = last_step;
  if (task.has_value()) j["task"] = planforge::to_string(*task);
  j["evidence"] = evidence;
  return j.dump();
}

namespace {

double median_of(const std::deque<double>& window) {
  std::vector<double> values(window.begin(), window.end());
  std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  std::nth_element(values.begin(), values.begin() + (mid - 1), values.end());
  return 0.5 * (values[mid - 1] + upper);
}

double half_life_alpha(double half_life) {
  return 1.0 - std::exp2(-1.0 / half_life);
}

bool event_value_valid(const MetricEvent& e) {
  if (!std::isfinite(e.value)) return false;
  if (e.kind == MetricKind::kUtilization && (e.value < 0.0 || e.value > 1.0)) return false;
  return true;
}

}  // namespace

Monitor::Monitor(MonitorConfig config) : config_(config) {}

RecordVerdict Monitor::record(const MetricEvent& event) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (!event_value_valid(event)) {
    rejected_invalid_++;
    return RecordVerdict::kInvalidValue;
  }
  if (event.kind == MetricKind::kTaskLoss && !event.task.has_value()) {
    rejected_invalid_++;
    return RecordVerdict::kInvalidValue;
  }

  // Per-stream nondecreasing step order.
  std::optional<std::uint64_t>* last = nullptr;
  std::optional<std::uint64_t> scratch;
  if (event.kind == MetricKind::kUtilization) {
    last = &util_.last_step;
  } else if (event.kind == MetricKind::kTaskLoss) {
    last = &drift_[*event.task].last_step;
  } else {
    auto it = last_step_by_kind_.find(event.kind);
    if (it != last_step_by_kind_.end()) scratch = it->second;
    last = &scratch;
  }
  if (last->has_value() && event.step < **last) {
    rejected_out_of_order_++;
    return RecordVerdict::kOutOfOrder;
  }

  switch (event.kind) {
    case MetricKind::kUtilization:
      ingest_utilization(event);
      break;
    case MetricKind::kTaskLoss:
      ingest_loss(event);
      break;
    default:
      last_step_by_kind_[event.kind] = event.step;
      break;
  }
  return RecordVerdict::kAccepted;
}

void Monitor::ingest_utilization(const MetricEvent& event) {
  util_.last_step = event.step;

  // Baseline is the rolling median over samples strictly before this one,
  // so a cliff does not drag its own baseline down.
  bool violation = false;
  double ratio = 1.0;
  if (!util_.window.empty()) {
    double baseline = median_of(util_.window);
    if (baseline > 0.0) {
      ratio = event.value / baseline;
      violation = event.value < config_.util_drop_delta * baseline;
    }
  }

  if (violation) {
    if (!util_.run_first_step.has_value()) {
      util_.run_first_step = event.step;
      util_.run_min_ratio = ratio;
    }
    util_.run_last_step = event.step;
    util_.run_length++;
    util_.run_min_ratio = std::min(util_.run_min_ratio, ratio);
  } else {
    close_util_run();
  }

  util_.window.push_back(event.value);
  if (util_.window.size() > config_.util_median_window) util_.window.pop_front();
}

void Monitor::close_util_run() {
  if (util_.run_first_step.has_value() && util_.run_length >= config_.util_consecutive) {
    Alert alert;
    alert.kind = AlertKind::kUtilizationDrop;
    alert.first_step = *util_.run_first_step;
    alert.last_step = util_.run_last_step;
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "utilization/median ratio fell to %.4f over %zu samples",
                  util_.run_min_ratio, util_.run_length);
    alert.evidence = buf;
    alerts_.push_back(std::move(alert));
  }
  util_.run_first_step.reset();
  util_.run_length = 0;
  util_.run_min_ratio = 0.0;
}

void Monitor::ingest_loss(const MetricEvent& event) {
  DriftState& st = drift_[*event.task];
  st.last_step = event.step;

  if (!st.initialized) {
    st.ema_short = event.value;
    st.ema_long = event.value;
    st.initialized = true;
  } else {
    const double a_s = half_life_alpha(config_.drift_short_half_life);
    const double a_l = half_life_alpha(config_.drift_long_half_life);
    st.ema_short = a_s * event.value + (1.0 - a_s) * st.ema_short;
    st.ema_long = a_l * event.value + (1.0 - a_l) * st.ema_long;
  }

  // Recent average rising against the long trend.
  bool violation = false;
  double ratio = 0.0;
  if (st.ema_long > 0.0) {
    ratio = st.ema_short / st.ema_long;
    violation = ratio > config_.drift_ratio;
  } else if (st.ema_short > 0.0) {
    ratio = std::numeric_limits<double>::infinity();
    violation = true;
  }

  if (violation) {
    if (!st.run_first_step.has_value()) {
      st.run_first_step = event.step;
      st.run_max_ratio = ratio;
    }
    st.run_last_step = event.step;
    st.run_max_ratio = std::max(st.run_max_ratio, ratio);
  } else {
    close_drift_run(*event.task);
  }
}

void Monitor::close_drift_run(TaskType task) {
  DriftState& st = drift_[task];
  if (st.run_first_step.has_value()) {
    Alert alert;
    alert.kind = AlertKind::kLossDrift;
    alert.first_step = *st.run_first_step;
    alert.last_step = st.run_last_step;
    alert.task = task;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "ema_short/ema_long peaked at %.4f", st.run_max_ratio);
    alert.evidence = buf;
    alerts_.push_back(std::move(alert));
  }
  st.run_first_step.reset();
  st.run_max_ratio = 0.0;
}

void Monitor::flush() {
  std::lock_guard<std::mutex> lock(mutex_);
  close_util_run();
  for (auto& [task, st] : drift_) {
    close_drift_run(task);
  }
}

std::vector<Alert> detect(const std::vector<MetricEvent>& window,
                          const MonitorConfig& config) {
  Monitor monitor(config);
  for (const MetricEvent& e : window) monitor.record(e);
  monitor.flush();
  return monitor.alerts();
}

// ---------------------------------------------------------------------------
// Snapshot / restore

std::string Monitor::to_json() const {
  json j;
  j["util"]["window"] = std::vector<double>(util_.window.begin(), util_.window.end());
  if (util_.run_first_step.has_value()) j["util"]["run_first_step"] = *util_.run_first_step;
  j["util"]["run_last_step"] = util_.run_last_step;
  j["util"]["run_length"] = util_.run_length;
  j["util"]["run_min_ratio"] = util_.run_min_ratio;
  if (util_.last_step.has_value()) j["util"]["last_step"] = *util_.last_step;

  j["drift"] = json::object();
  for (const auto& [task, st] : drift_) {
    json d;
    d["ema_short"] = st.ema_short;
    d["ema_long"] = st.ema_long;
    d["initialized"] = st.initialized;
    if (st.run_first_step.has_value()) d["run_first_step"] = *st.run_first_step;
    d["run_last_step"] = st.run_last_step;
    d["run_max_ratio"] = st.run_max_ratio;
    if (st.last_step.has_value()) d["last_step"] = *st.last_step;
    j["drift"][planforge::to_string(task)] = std::move(d);
  }

  j["last_step_by_kind"] = json::object();
  for (const auto& [kind, step] : last_step_by_kind_) {
    j["last_step_by_kind"][planforge::to_string(kind)] = step;
  }

  j["alerts"] = json::array();
  for (const Alert& a : alerts_) {
    j["alerts"].push_back(json::parse(a.to_json()));
  }
  j["rejected_out_of_order"] = rejected_out_of_order_;
  j["rejected_invalid"] = rejected_invalid_;
  return j.dump();
}

Monitor Monitor::from_json(const std::string& text, const MonitorConfig& config) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::kBadConfig, "malformed monitor state");
  }
  Monitor m(config);

  const json& u = j.at("util");
  for (double v : u.value("window", std::vector<double>{})) m.util_.window.push_back(v);
  if (u.contains("run_first_step")) {
    m.util_.run_first_step = u["run_first_step"].get<std::uint64_t>();
  }
  m.util_.run_last_step = u.value("run_last_step", 0ull);
  m.util_.run_length = u.value("run_length", std::size_t{0});
  m.util_.run_min_ratio = u.value("run_min_ratio", 0.0);
  if (u.contains("last_step")) m.util_.last_step = u["last_step"].get<std::uint64_t>();

  for (auto it = j.at("drift").begin(); it != j.at("drift").end(); ++it) {
    auto task = parse_task_type(it.key());
    if (!task) throw Error(ErrorCode::kBadConfig, "unknown task in monitor state");
    DriftState st;
    const json& d = it.value();
    st.ema_short = d.value("ema_short", 0.0);
    st.ema_long = d.value("ema_long", 0.0);
    st.initialized = d.value("initialized", false);
    if (d.contains("run_first_step")) {
      st.run_first_step = d["run_first_step"].get<std::uint64_t>();
    }
    st.run_last_step = d.value("run_last_step", 0ull);
    st.run_max_ratio = d.value("run_max_ratio", 0.0);
    if (d.contains("last_step")) st.last_step = d["last_step"].get<std::uint64_t>();
    m.drift_[*task] = st;
  }

  const json by_kind = j.value("last_step_by_kind", json::object());
  for (auto it = by_kind.begin(); it != by_kind.end(); ++it) {
    MetricKind kind = it.key() == "throughput" ? MetricKind::kThroughput
                                               : MetricKind::kMemory;
    m.last_step_by_kind_[kind] = it.value().get<std::uint64_t>();
  }

  for (const auto& a : j.value("alerts", json::array())) {
    Alert alert;
    alert.kind = a.value("kind", "") == "UTILIZATION_DROP" ? AlertKind::kUtilizationDrop
                                                           : AlertKind::kLossDrift;
    alert.first_step = a.value("first_step", 0ull);
    alert.last_step = a.value("last_step", 0ull);
    if (a.contains("task")) alert.task = parse_task_type(a["task"].get<std::string>());
    alert.evidence = a.value("evidence", "");
    m.alerts_.push_back(std::move(alert));
  }
  m.rejected_out_of_order_ = j.value("rejected_out_of_order", 0ull);
  m.rejected_invalid_ = j.value("rejected_invalid", 0ull);
  return m;
}

}  // namespace planforge
