#pragma once

// Experiment plumbing shared by the CLI and the acceptance suite: config
// parsing and hashing, the train/evaluate/analyze pipeline, sweeps, and the
// JSON/CSV writers for their results.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbm/analysis.hpp"
#include "dbm/data.hpp"
#include "dbm/model.hpp"
#include "dbm/trainer.hpp"

namespace dbm {

inline constexpr const char* kSoftwareVersion = "1.0.0";

struct DataSource {
  GenConfig gen;
  std::optional<std::string> train_path;
  std::optional<std::string> test_path;
};

enum class GroupMode { Absolute, Tercile };

struct ExperimentConfig {
  std::string label = "run";
  DataSource data;
  std::vector<int> hidden{64, 32};
  HeadKind head = HeadKind::Cosine;
  TrainConfig train;
  GroupMode group_mode = GroupMode::Absolute;
  GroupThresholds groups;
  std::string output_dir;

  /// Strict: unknown keys and invalid values raise InvalidConfig.
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// Every field, defaults filled in.
  nlohmann::json to_json() const;
  /// FNV-1a over the canonical serialization, excluding label and output dir.
  std::string hash() const;

  void validate() const;
  void set_seed(std::uint64_t seed);
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// Loads train/test files when paths are set, else generates from `gen`.
DatasetSplit load_or_generate(const DataSource& source);

GroupThresholds resolve_thresholds(const ExperimentConfig& cfg, const std::vector<long>& train_counts);

struct EvalMetrics {
  GroupThresholds thresholds;
  GroupAccuracy accuracy;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
};

EvalMetrics evaluate(const ModelParams& model, const LabeledDataset& data, const std::vector<long>& train_counts,
                     const GroupThresholds& thresholds);

struct AnalysisReport {
  std::string split;
  GroupThresholds thresholds;
  GroupAccuracy accuracy;
  std::optional<AngularStats> angular;  // cosine heads only
  SeparabilityReport separability;
  std::vector<long> train_counts;
};

/// Separability uses unit-normalized features for a cosine head and raw
/// features for a linear head.
AnalysisReport analyze(const ModelParams& model, const LabeledDataset& data, const std::vector<long>& train_counts,
                       const GroupThresholds& thresholds, std::string split);

struct RunResult {
  ExperimentConfig config;
  DatasetSplit data;
  TrainResult trained;
  GroupThresholds thresholds;
  EvalMetrics test_metrics;
};

RunResult run_experiment(const ExperimentConfig& cfg);

// Serialization ------------------------------------------------------------

nlohmann::json to_json(const GroupAccuracy& acc);
nlohmann::json to_json(const EvalMetrics& m);
nlohmann::json to_json(const AnalysisReport& r);
std::string analysis_csv(const AnalysisReport& r);
std::string epoch_log_csv(const std::vector<EpochLog>& log);
std::string format_fixed(double v);

/// Writes checkpoint.json, epochs.csv, metrics.json and manifest.json under `dir`.
void write_run_outputs(const RunResult& run, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);

// Sweeps -------------------------------------------------------------------

/// Loss names (ce, bs, dbm-bs, ...) plus ablation variants
/// linear-{ce,bs,cb}, cosine-*, mc-*, mi-p-*, mi-hp-*.
ExperimentConfig apply_variant(const ExperimentConfig& base, const std::string& variant);
bool variant_uses_dbm(const std::string& variant);

struct SweepAxes {
  std::vector<std::string> losses;
  std::vector<std::uint64_t> seeds;
  std::vector<double> K;
  std::vector<double> tau;

  static SweepAxes from_json(const nlohmann::json& j);
};

struct SweepRow {
  std::string variant;
  std::optional<double> K;
  std::optional<double> tau;
  std::uint64_t seed = 0;
  std::string status = "ok";
  GroupAccuracy accuracy;
  std::vector<double> epoch_losses;
  std::optional<double> mean_angle_deg;
  std::optional<double> mean_separability;
};

/// One row per (variant, K, tau, seed); K/tau collapse for non-DBM variants.
/// Rows come back in axis order whatever the thread count.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const SweepAxes& axes, int threads = 1,
                                bool with_analysis = false);

std::string sweep_rows_csv(const std::vector<SweepRow>& rows);
std::string sweep_aggregate_csv(const std::vector<SweepRow>& rows);

}  // namespace dbm
