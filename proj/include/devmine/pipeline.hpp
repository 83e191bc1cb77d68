#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "devmine/learn.hpp"
#include "devmine/metrics.hpp"
#include "devmine/stats.hpp"

namespace devmine {

enum class Stage { ingest, discover, metrics, partition, correlate, train, synth, report, pipeline };

Stage parse_stage(std::string_view tag);
std::string_view to_string(Stage stage);

/// Which column the train stage predicts.
enum class Target { practice, vg_level, pcc_level };
Target parse_target(std::string_view tag);
std::string_view to_string(Target target);

struct PipelineConfig {
  /// Event files for ingest/discover/metrics/pipeline; a directory is read as
  /// the artifacts of an earlier run (events.jsonl, products.csv, labels.csv).
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path out = "out";
  std::optional<std::filesystem::path> products;
  std::optional<std::filesystem::path> labels;
  std::optional<std::filesystem::path> catalog;
  std::optional<std::filesystem::path> scenario;  // synth JSON overrides

  int level = 2;
  double filter_activities = 1.0;
  double filter_paths = 1.0;
  int k = 3;       // VG reduction levels
  int pcc_k = 2;   // PCC levels
  int k_max = 10;  // upper end of the elbow/silhouette sweep
  double alpha = 0.05;
  PValueMethod p_method = PValueMethod::automatic;
  int folds = 10;
  std::optional<std::uint64_t> seed;
  FeatureSet features = FeatureSet::standard;
  Family family = Family::forest;
  Target target = Target::practice;
  bool grid = true;  // search the family's default grid before the final fit
  int repeats = 10;  // permutation-importance shuffles per column
  std::optional<Direction> select;
  bool strict_hash = false;

  /// ConfigError on out-of-range values; InputError on missing input paths.
  void validate(Stage stage) const;
  /// "key = value" lines, fixed order.
  std::string to_ini() const;
};

/// Names of the files a stage writes, relative to `out`.
struct StageResult {
  std::vector<std::string> artifacts;
};

/// Runs one stage (or the whole chain for Stage::pipeline). Every artifact is
/// written atomically; when the stage throws, the files it already wrote are
/// removed before the exception propagates.
StageResult run_stage(Stage stage, const PipelineConfig& config);

}  // namespace devmine
