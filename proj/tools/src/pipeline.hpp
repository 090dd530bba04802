#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairlens/causality.hpp"
#include "fairlens/metrics.hpp"
#include "fairlens/model.hpp"
#include "fairlens/repair.hpp"
#include "fairlens/selector.hpp"

namespace fairlens::cli {

inline constexpr int kReportFormatVersion = 1;

// Every phase reads and writes files under `out`; config.json carries the
// run configuration from one phase to the next.
struct RunConfig {
  std::string dataset;
  std::string schema;
  std::vector<std::string> protected_names;  // empty: every protected attribute
  MetricKind metric = MetricKind::kSpd;
  double p_thres = kDefaultPThres;
  std::size_t num_interval = kDefaultNumInterval;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  int epochs = 50;
  double learning_rate = TrainConfig{}.learning_rate;
  std::size_t batch_size = 32;
  std::vector<std::size_t> hidden = kDefaultHidden;
  double lambda = RepairOptions{}.fairness_penalty;
  double theta_band = RepairOptions{}.theta_band;
  double dir_level = RepairOptions{}.dir_level;
  std::vector<Method> methods = MethodOptions{}.enabled;
  std::filesystem::path out;

  TrainConfig train_config() const;
  RepairOptions repair_options() const;
  MethodOptions method_options() const;
};

std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(std::string_view text);
// config.json of `out`, with `out` filled in.
RunConfig load_run_config(const std::filesystem::path& out);

// Inputs shared by the phases that need data: schema, full data set, the
// train/test split and the metric resolved against the schema.
struct Workspace {
  std::shared_ptr<const Schema> schema;
  Dataset train;
  Dataset test;
  FairnessMetric metric;
};

Workspace open_workspace(const RunConfig& config);

// Writes synth.csv and synth.schema.json under `out`.
void cmd_synth(std::size_t rows, double bias, std::uint64_t seed, const std::filesystem::path& out);

ScoreReport cmd_train(const RunConfig& config);
ResponsibilityStats cmd_analyze(const RunConfig& config);

// Recommendation from stats.json, or from `replay` stats when given.
Recommendation cmd_recommend(const RunConfig& config, const std::optional<ResponsibilityStats>& replay = {});

// Runs the recommended method, or `method` when given.
RepairOutcome cmd_repair(const RunConfig& config, std::optional<Method> method = {});

// Scores `model_path` (default model.json) on the test split.
ScoreReport cmd_evaluate(const RunConfig& config, const std::optional<std::filesystem::path>& model_path = {});

// Merges every phase artifact under `out` into report.json. Throws
// FormatError naming the missing files when a phase has not run.
std::string cmd_report(const std::filesystem::path& out);

// Adds `seconds` for `phase` to timings.json.
void record_timing(const std::filesystem::path& out, const std::string& phase, double seconds);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fairlens::cli
