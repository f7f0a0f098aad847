// SPDX-License-Identifier: Apache-2.0
//
// planforge: multi-task corpus construction, sharding, simulated training
// with checkpoint/resume, and benchmark scoring, behind one CLI.
//
// Exit codes: 0 success, 1 data/validation failure, 2 usage error,
// 3 IO failure. Every subcommand prints a single-line JSON summary on
// stdout; human-readable logs go to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "planforge/error.hpp"
#include "planforge/eval.hpp"
#include "planforge/ingest.hpp"
#include "planforge/orchestrator.hpp"
#include "planforge/rng.hpp"
#include "planforge/schema.hpp"
#include "planforge/shardstore.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace planforge;

namespace {

constexpr const char* kToolVersion = "planforge 0.1.0";

bool g_quiet = false;

void log_line(const std::string& message) {
  if (!g_quiet) std::cerr << message << "\n";
}

std::string hex_hash(std::uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// ingest

int cmd_ingest(const std::string& manifest_path, const std::string& out_dir,
               bool lenient, double adversarial, std::uint64_t seed, int threads) {
  IngestManifest manifest = load_ingest_manifest(manifest_path);
  // Source paths are relative to the manifest file.
  const fs::path base = fs::path(manifest_path).parent_path();
  for (ManifestEntry& entry : manifest.entries) {
    if (!fs::path(entry.path).is_absolute()) {
      entry.path = (base / entry.path).string();
    }
  }

  fs::create_directories(out_dir);
  std::ofstream corpus(fs::path(out_dir) / "corpus.jsonl",
                       std::ios::binary | std::ios::trunc);
  if (!corpus) throw Error(ErrorCode::kIoFailure, "cannot write corpus.jsonl");

  IngestOptions options;
  options.lenient = lenient;
  options.adversarial_fraction = adversarial;
  options.seed = seed;
  options.threads = threads;

  IngestResult result = run_ingest(manifest, options, [&](Sample&& s) {
    corpus << serialize_sample(s) << "\n";
  });
  corpus.close();
  if (!corpus) throw Error(ErrorCode::kIoFailure, "short write on corpus.jsonl");

  std::ofstream report(fs::path(out_dir) / "ingest_report.json", std::ios::trunc);
  report << result.report.to_json();
  report.close();

  for (const auto& entry : manifest.entries) {
    const DatasetCounts& c = result.report.datasets.at(entry.name);
    if (entry.expected_count.has_value() && c.read != *entry.expected_count) {
      log_line("warning: " + entry.name + " read " + std::to_string(c.read) +
               " records, expected " + std::to_string(*entry.expected_count));
    }
    if (!c.conserved()) {
      throw Error(ErrorCode::kBadConfig, "conservation identity broken for " + entry.name);
    }
  }

  json summary;
  summary["command"] = "ingest";
  summary["accepted"] = result.total_accepted;
  summary["report"] = json::parse(result.report.to_json());
  summary["out"] = out_dir;
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// shard

class JsonlFileSource : public SampleSource {
 public:
  explicit JsonlFileSource(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  }
  std::optional<Sample> next() override {
    std::string line;
    while (std::getline(in_, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      SampleParseResult parsed = parse_sample(line);
      if (!parsed.ok()) {
        throw Error(ErrorCode::kIoFailure, "corpus line failed to parse: " +
                                               parsed.error->code + " " +
                                               parsed.error->field);
      }
      return std::move(parsed.sample);
    }
    return std::nullopt;
  }

 private:
  std::ifstream in_;
};

int cmd_shard(const std::string& in_path, const std::string& out_dir,
              std::uint64_t shard_size, std::uint64_t seed) {
  fs::create_directories(out_dir);

  // Pass 1: split the mixed corpus into one temp JSONL per task, streaming.
  std::map<TaskType, fs::path> temp_paths;
  std::map<TaskType, std::ofstream> temp_streams;
  std::map<TaskType, std::uint64_t> counts;
  {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + in_path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      SampleParseResult parsed = parse_sample(line);
      if (!parsed.ok()) {
        throw Error(ErrorCode::kIoFailure,
                    "corpus line failed to parse: " + parsed.error->code);
      }
      TaskType task = parsed.sample->task;
      if (!temp_streams.count(task)) {
        fs::path tmp = fs::path(out_dir) / (to_string(task) + ".split.tmp");
        temp_streams[task].open(tmp, std::ios::binary | std::ios::trunc);
        if (!temp_streams[task]) {
          throw Error(ErrorCode::kIoFailure, "cannot write " + tmp.string());
        }
        temp_paths[task] = tmp;
      }
      temp_streams[task] << line << "\n";
      counts[task]++;
    }
  }
  for (auto& [task, stream] : temp_streams) stream.close();

  // Pass 2: shard each task stream into its own directory.
  json dataset;
  dataset["schema_version"] = kShardSchemaVersion;
  dataset["tasks"] = json::object();
  json shard_summary = json::object();
  for (const auto& [task, tmp] : temp_paths) {
    const std::string name = to_string(task);
    const fs::path task_dir = fs::path(out_dir) / name;
    fs::create_directories(task_dir);
    JsonlFileSource source(tmp.string());
    ShardManifest manifest = write_shards(source, shard_size, task_dir.string(), seed);
    dataset["tasks"][name] = {{"path", name}, {"records", manifest.total_records}};
    shard_summary[name] = manifest.total_records;
    fs::remove(tmp);
    log_line("sharded " + std::to_string(manifest.total_records) + " " + name +
             " records into " + std::to_string(manifest.shards.size()) + " shards");
  }

  std::ofstream ds(fs::path(out_dir) / "dataset.json", std::ios::trunc);
  ds << dataset.dump();
  ds.close();
  if (!ds) throw Error(ErrorCode::kIoFailure, "short write on dataset.json");

  json summary;
  summary["command"] = "shard";
  summary["out"] = out_dir;
  summary["tasks"] = shard_summary;
  std::cout << summary.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train / kill-test

void write_run_metadata(const RunConfig& config, const TrainingData& data,
                        const std::string& out_dir) {
  json j;
  j["tool_version"] = kToolVersion;
  j["config_hash"] = hex_hash(config.config_hash());
  j["data_hash"] = hex_hash(data.data_hash);
  j["seed"] = config.seed;
  j["trainer_seed"] = config.trainer.seed;
  j["frozen_groups"] = config.trainer.frozen_groups;
  j["defaults"] = {{"w_min", config.w_min},
                   {"w_max", config.w_max},
                   {"beta", config.beta},
                   {"checkpoint_interval", config.checkpoint_interval},
                   {"validation_interval", config.validation_interval},
                   {"keep_last", config.keep_last},
                   {"keep_every", config.keep_every},
                   {"util_drop_delta", config.monitor.util_drop_delta},
                   {"util_median_window", config.monitor.util_median_window},
                   {"util_consecutive", config.monitor.util_consecutive},
                   {"drift_short_half_life", config.monitor.drift_short_half_life},
                   {"drift_long_half_life", config.monitor.drift_long_half_life},
                   {"drift_ratio", config.monitor.drift_ratio},
                   {"resume_tie_break", "periodic-over-emergency"}};
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "run_metadata.json", std::ios::trunc);
  out << j.dump();
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, bool resume,
              std::optional<std::uint64_t> seed_override,
              std::optional<std::uint64_t> kill_at_step,
              std::optional<std::uint64_t> kill_at_boundary) {
  RunConfig config = RunConfig::from_json_file(config_path);
  if (seed_override.has_value()) {
    config.seed = *seed_override;
    config.trainer.seed = *seed_override;
  }
  TrainingData data = load_training_data(data_dir);

  // Restrict simulated-trainer params to tasks actually present.
  SimulatedTrainerConfig trainer_config = config.trainer;
  auto trainer = std::make_unique<SimulatedTrainer>(trainer_config);

  write_run_metadata(config, data, out_dir);
  Orchestrator orchestrator(config, data, std::move(trainer), out_dir);

  RunHooks hooks;
  if (kill_at_step.has_value() && !kill_at_boundary.has_value()) {
    hooks.kill_after_step = [at = *kill_at_step](std::uint64_t step) {
      if (step == at) {
        std::cerr << "kill-test: hard exit after step " << step << "\n";
        std::_Exit(137);  // no destructors, no flushes: a real kill
      }
      return false;
    };
  }
  if (kill_at_boundary.has_value()) {
    const std::uint64_t target_step = kill_at_step.value_or(0);
    hooks.checkpoint_boundary = [target_step, at = *kill_at_boundary,
                                 count = std::uint64_t{0}](const std::string&) mutable {
      count++;
      if (count == at) {
        std::cerr << "kill-test: hard exit at checkpoint boundary " << at << "\n";
        std::_Exit(137);
      }
      (void)target_step;
    };
  }

  RunSummary summary = resume ? orchestrator.resume(hooks) : orchestrator.run(hooks);

  json out = json::parse(summary.to_json());
  out["command"] = "train";
  out["out"] = out_dir;
  std::cout << out.dump() << "\n";
  log_line("run complete at step " + std::to_string(summary.total_steps) + ", " +
           std::to_string(summary.alerts_raised) + " alerts");
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& protocol, const std::string& pred_path,
             const std::string& gold_path, const std::string& out_path) {
  std::vector<Prediction> predictions = load_predictions(pred_path);
  std::string report_json;
  if (protocol == "robovqa-bleu") {
    BleuReport report = score_bleu(predictions, load_bleu_gold(gold_path));
    report_json = report.to_json();
  } else if (protocol == "egoplan-top1") {
    const std::vector<std::string> categories = {"Daily life", "Work", "Recreation",
                                                 "Hobbies"};
    Top1Report report = score_top1(predictions, load_mcq_gold(gold_path), categories);
    report_json = report.to_json();
  } else {
    throw CLI::ValidationError("--protocol must be robovqa-bleu or egoplan-top1");
  }

  fs::path out = out_path;
  if (fs::is_directory(out)) out /= "eval_report.json";
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream file(out, std::ios::trunc);
  if (!file) throw Error(ErrorCode::kIoFailure, "cannot write " + out.string());
  file << report_json;
  file.close();

  std::cout << report_json << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report

void flatten_scores(const json& node, const std::string& prefix,
                    std::map<std::string, double>& out) {
  if (node.is_number()) {
    out[prefix] = node.get<double>();
    return;
  }
  if (node.is_object()) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      flatten_scores(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  }
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  struct Row {
    std::string name;
    std::map<std::string, double> scores;
  };
  std::vector<Row> rows;
  for (const std::string& input : inputs) {
    fs::path path = input;
    if (fs::is_directory(path)) path /= "eval_report.json";
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
      throw Error(ErrorCode::kIoFailure, "malformed report " + path.string());
    }
    Row row;
    row.name = input;
    flatten_scores(j.value("scores", json::object()), "", row.scores);
    rows.push_back(std::move(row));
  }

  // Union of numeric columns; per-column best and second-best flags.
  std::vector<std::string> columns;
  for (const Row& row : rows) {
    for (const auto& [key, value] : row.scores) {
      if (std::find(columns.begin(), columns.end(), key) == columns.end()) {
        columns.push_back(key);
      }
    }
  }
  std::sort(columns.begin(), columns.end());

  json consolidated;
  consolidated["command"] = "report";
  consolidated["columns"] = columns;
  consolidated["rows"] = json::array();
  for (const Row& row : rows) {
    json r;
    r["name"] = row.name;
    r["scores"] = json::object();
    r["best"] = json::array();
    r["second_best"] = json::array();
    for (const auto& [key, value] : row.scores) r["scores"][key] = value;
    consolidated["rows"].push_back(std::move(r));
  }
  for (const std::string& column : columns) {
    std::vector<double> values;
    for (const Row& row : rows) {
      auto it = row.scores.find(column);
      if (it != row.scores.end()) values.push_back(it->second);
    }
    if (values.empty()) continue;
    std::sort(values.begin(), values.end(), std::greater<>());
    const double best = values.front();
    std::optional<double> second;
    for (double v : values) {
      if (v < best) {
        second = v;
        break;
      }
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto it = rows[i].scores.find(column);
      if (it == rows[i].scores.end()) continue;
      if (it->second == best) {
        consolidated["rows"][i]["best"].push_back(column);
      } else if (second.has_value() && it->second == *second) {
        consolidated["rows"][i]["second_best"].push_back(column);
      }
    }
  }

  // Plain-text table on stderr.
  if (!g_quiet) {
    std::cerr << "report";
    for (const std::string& c : columns) std::cerr << "\t" << c;
    std::cerr << "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::cerr << rows[i].name;
      for (const std::string& c : columns) {
        auto it = rows[i].scores.find(c);
        std::cerr << "\t";
        if (it == rows[i].scores.end()) {
          std::cerr << "-";
          continue;
        }
        std::cerr << it->second;
        const json& flags = consolidated["rows"][i];
        for (const auto& b : flags["best"]) {
          if (b.get<std::string>() == c) std::cerr << "*";
        }
      }
      std::cerr << "\n";
    }
  }

  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + out_path);
    out << consolidated.dump();
  }
  std::cout << consolidated.dump() << "\n";
  return 0;
}

int exit_code_for(const Error& e) {
  return e.code() == ErrorCode::kIoFailure ? 3 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planforge: multi-task training data pipeline, run orchestrator, "
               "and evaluation harness"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed_flag;
  int threads = 1;
  app.add_option("--seed", seed_flag, "Override the seed for this invocation");
  app.add_option("--threads", threads, "Worker threads for ingest parsing");
  app.add_flag("--quiet", g_quiet, "Suppress stderr logs");

  auto* ingest = app.add_subcommand("ingest", "Convert source datasets into the unified corpus");
  std::string ingest_manifest, ingest_out;
  bool lenient = false;
  double adversarial = 0.0;
  ingest->add_option("--manifest", ingest_manifest, "Corpus manifest JSON")->required();
  ingest->add_option("--out", ingest_out, "Output directory")->required();
  ingest->add_flag("--lenient", lenient, "Accept unknown source fields");
  ingest->add_option("--adversarial", adversarial,
                     "Fraction of synthetic point samples violating the point cap");

  auto* shard = app.add_subcommand("shard", "Shard a unified corpus for streaming reads");
  std::string shard_in, shard_out;
  std::uint64_t shard_size = 0;
  shard->add_option("--in", shard_in, "Unified corpus JSONL")->required();
  shard->add_option("--out", shard_out, "Output directory")->required();
  shard->add_option("--shard-size", shard_size, "Records per shard")->required();

  auto* train = app.add_subcommand("train", "Run the (simulated) training loop");
  std::string train_config, train_data, train_out;
  bool resume = false;
  train->add_option("--config", train_config, "Run config JSON")->required();
  train->add_option("--data", train_data, "Sharded dataset directory")->required();
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_flag("--resume", resume, "Resume from the latest consistent checkpoint");

  auto* kill = app.add_subcommand("kill-test", "Fault-injection harness: train, then die");
  std::string kill_config, kill_data, kill_out;
  std::uint64_t kill_step = 0;
  std::optional<std::uint64_t> kill_boundary;
  bool kill_resume = false;
  kill->add_option("--config", kill_config, "Run config JSON")->required();
  kill->add_option("--data", kill_data, "Sharded dataset directory")->required();
  kill->add_option("--out", kill_out, "Run directory")->required();
  kill->add_option("--at-step", kill_step, "Hard-exit after this step")->required();
  kill->add_option("--at-boundary", kill_boundary,
                   "Instead hard-exit at the Nth checkpoint write boundary");
  kill->add_flag("--resume", kill_resume, "Resume before killing");

  auto* eval = app.add_subcommand("eval", "Score a prediction file against gold");
  std::string protocol, pred_path, gold_path, eval_out;
  eval->add_option("--protocol", protocol, "robovqa-bleu | egoplan-top1")->required();
  eval->add_option("--pred", pred_path, "Predictions JSONL")->required();
  eval->add_option("--gold", gold_path, "Gold JSONL")->required();
  eval->add_option("--out", eval_out, "Report output path")->required();

  auto* report = app.add_subcommand("report", "Merge eval reports into one table");
  std::vector<std::string> report_inputs;
  std::string report_out;
  report->add_option("inputs", report_inputs, "Eval reports or run dirs")->required();
  report->add_option("--out", report_out, "Consolidated JSON output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) {
      return cmd_ingest(ingest_manifest, ingest_out, lenient, adversarial,
                        seed_flag.value_or(0), threads);
    }
    if (*shard) {
      return cmd_shard(shard_in, shard_out, shard_size, seed_flag.value_or(0));
    }
    if (*train) {
      return cmd_train(train_config, train_data, train_out, resume, seed_flag,
                       std::nullopt, std::nullopt);
    }
    if (*kill) {
      return cmd_train(kill_config, kill_data, kill_out, kill_resume, seed_flag,
                       kill_step, kill_boundary);
    }
    if (*eval) {
      return cmd_eval(protocol, pred_path, gold_path, eval_out);
    }
    if (*report) {
      return cmd_report(report_inputs, report_out);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    json failure;
    failure["error"] = e.what();
    std::cout << failure.dump() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
