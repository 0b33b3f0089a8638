#pragma once

#include "teashift/align.hpp"
#include "teashift/classifiers.hpp"
#include "teashift/features.hpp"
#include "teashift/preprocess.hpp"
#include "teashift/synth.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace teashift {

inline constexpr const char* kVersion = "tea-shift 0.1.0";

// A dataset on disk or a generator recipe.
struct DataSource {
  std::optional<std::filesystem::path> path;
  std::optional<SynthSpec> synth;
  bool synth_seed_given = false;  // otherwise derived from the run seed
};

struct PreprocessConfig {
  bool enabled = true;
  Band bandpass{0.5, 35.0};
  double taper_hz = 0.5;
  double reject_z = 3.0;  // <= 0 disables rejection
};

enum class FitOn { Train, PerDataset };

struct NormalizeConfig {
  bool logit = true;
  bool age_regression = true;
  bool subtract_intercept = false;
  bool zscore = true;
  FitOn fit_on = FitOn::Train;
};

struct ExperimentConfig {
  DataSource source;
  DataSource target;
  std::vector<SleepStage> stages;  // empty: all epochs in one pass
  std::vector<ModelSpec> models;
  AlignSpace space = AlignSpace::FeatureSpace;
  bool alignment = true;
  bool center = false;
  double shrinkage = kDefaultShrinkage;
  PreprocessConfig preprocess;
  NormalizeConfig normalize;
  FeatureConfig features;
  std::size_t rfe_k = 0;  // 0 keeps every feature
  std::size_t rfe_trees = 50;
  std::size_t n_folds = 15;
  std::uint64_t seed = 0;
  DbaOptions dba{10, 1e-6, std::size_t{10}};
  std::string output;

  nlohmann::json raw;  // document as given, echoed into the report
};

// Throws ConfigError naming the offending field.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
DataSource parse_data_source(const nlohmann::json& j, const std::string& field);
PreprocessConfig parse_preprocess(const nlohmann::json& j);

// Loads from disk or synthesizes; synthetic seeds default to run_seed + offset.
Dataset materialize(const DataSource& source, std::uint64_t run_seed, std::uint64_t offset);

// Band-pass every epoch, then z-score rejection per subject (skipped below three epochs).
struct PreprocessSummary {
  std::size_t n_in = 0;
  std::size_t n_dropped = 0;
};
Dataset preprocess_dataset(const Dataset& dataset, const PreprocessConfig& config, PreprocessSummary* summary = nullptr);

// ---------------------------------------------------------------------------

struct CellResult {
  std::string stage;
  std::string model;
  std::string case_name;
  Metrics metrics;             // accuracies averaged over folds, counts summed
  std::vector<Metrics> folds;  // in split-plan order

  bool operator==(const CellResult&) const = default;
};

struct DeltaResult {
  std::string stage;
  std::string model;
  std::string comparison;  // e.g. "aligned-unaligned", "c-b"
  double epoch_accuracy = 0.0;
  double subject_accuracy = 0.0;

  bool operator==(const DeltaResult&) const = default;
};

struct StageSummary {
  std::string stage;
  std::size_t source_epochs = 0;
  std::size_t target_epochs = 0;
  std::size_t source_dropped = 0;
  std::size_t target_dropped = 0;
  std::size_t n_features = 0;
  std::vector<Fold> folds;

  bool operator==(const StageSummary&) const = default;
};

struct ExperimentReport {
  std::string experiment;  // "intra" or "inter"
  std::string version = kVersion;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<StageSummary> stages;
  std::vector<CellResult> cells;
  std::vector<DeltaResult> deltas;

  const CellResult* find(std::string_view stage, std::string_view model, std::string_view case_name) const;
  bool operator==(const ExperimentReport&) const = default;
};

// Cases "unaligned" and (when alignment is on) "aligned"; train on source,
// evaluate target subjects fold by fold.
ExperimentReport run_intra(const ExperimentConfig& config);

// Cases "a" (target only), "b" (source + target train), "c" (b after alignment).
ExperimentReport run_inter(const ExperimentConfig& config);

// Writes report.json and accuracy.csv (stage,model,case,epoch_acc,subject_acc).
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);
ExperimentReport read_report(const std::filesystem::path& report_json);

void to_json(nlohmann::json& j, const ExperimentReport& r);
void from_json(const nlohmann::json& j, ExperimentReport& r);

}  // namespace teashift
