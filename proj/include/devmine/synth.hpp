#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "devmine/eventlog.hpp"
#include "devmine/metrics.hpp"

namespace devmine {

/// Behaviour of one practice cohort.
struct PracticeProfile {
  std::string name;  // label written to the labels file, e.g. "AR"
  int teams = 0;
  int sessions_min = 3, sessions_max = 6;
  int events_min = 50, events_max = 90;  // per session
  int developers_min = 1, developers_max = 2;
  /// Weights over "Category/Command" labels; non-negative, positive sum.
  std::vector<std::pair<std::string, double>> command_mix;
  /// Chance that a team's repertoire includes a given mix entry.
  double command_coverage = 1.0;
  int file_pool_min = 8, file_pool_max = 14;  // files a team touches
  double file_stay = 0.6;  // chance the next event stays on the current file
  double pcc_min = 0.0, pcc_max = 0.0;  // target process complexity band
  double vg_min = 0.0, vg_max = 0.0;    // complexity reduction band, percent
  double vg_shape = 1.0;  // reduction = min + (max - min) * u^shape
  /// Share of the reduction quantile taken from the team's PCC quantile
  /// instead of fresh noise; 0 leaves ΔVG independent of PCC.
  double vg_pcc_coupling = 0.0;
};

struct ScenarioConfig {
  std::uint64_t seed = 42;
  std::vector<PracticeProfile> practices;
  std::array<double, kProductMetricCount> product_baseline{};
  double product_noise = 0.02;  // relative jitter on non-VG metrics
  std::string start_date = "2019-03-04";

  /// 32 automatic-refactoring teams and 39 manual-refactoring teams.
  static ScenarioConfig defaults();

  /// ConfigError on empty or inverted ranges, bad weights or unknown metrics.
  void validate() const;

  /// JSON view; `from_json` starts from the defaults and overrides the keys
  /// present.
  std::string to_json() const;
  static ScenarioConfig from_json(std::string_view text);
};

struct TeamTruth {
  std::string team;
  std::string practice;
  std::uint64_t DEV = 0, SES = 0, EVTS = 0, NFILES = 0, NCOM = 0, NCAT = 0, EC = 0;
  std::uint64_t NSS = 0, NCS = 0, NOA = 0, NOT = 0;
  std::int64_t PCC = 0;
  double pcc_target = 0.0;
  double vg_reduction = 0.0;
  std::string vg_level;  // fixed bins: <= 4 LOW, <= 9 MEDIUM, else HIGH
};

struct GroundTruth {
  std::vector<TeamTruth> teams;

  std::string to_csv() const;
  const TeamTruth& find(std::string_view team) const;
};

struct Scenario {
  std::vector<RawEvent> events;
  std::vector<ProductMetricsSnapshot> snapshots;
  GroundTruth truth;

  /// "team,practice" rows.
  std::string labels_csv() const;
};

/// Deterministic per config (same seed, same bytes). Every event is sealed
/// with its hash and (username, begin, end) keys never repeat.
Scenario generate(const ScenarioConfig& config);

/// Reads "team,practice" rows into a team -> label map order-preserving list.
std::vector<std::pair<std::string, std::string>> read_labels(std::string_view csv_text);

}  // namespace devmine
