#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "devmine/discovery.hpp"
#include "devmine/eventlog.hpp"
#include "devmine/matrix.hpp"

namespace devmine {

/// McCabe complexity E - N + 2P of a transition system, counting every node
/// (START/END included) and P weakly connected components.
/// DataError on a system without nodes.
std::int64_t compute_pcc(const TransitionSystem& ts);

// ---- process metrics -------------------------------------------------------

struct ProcessMetricsRecord {
  std::uint64_t DEV = 0;
  std::uint64_t SES = 0;
  std::uint64_t EVTS = 0;
  std::uint64_t NFILES = 0;
  std::uint64_t NCOM = 0;
  double PCCPF = 0.0;
  std::uint64_t EC = 0;
  std::uint64_t NOA = 0;
  std::uint64_t NSS = 0;
  std::uint64_t NCS = 0;
  std::uint64_t NOT = 0;
  std::int64_t PCC = 0;
  std::uint64_t NVER = 0;
  std::uint64_t NCAT = 0;
  std::uint64_t NPLA = 0;
  std::uint64_t NISP = 0;
  std::uint64_t NOS = 0;
  std::uint64_t NPER = 0;
  std::optional<std::string> PCC_LEVEL;

  /// Numeric values in `process_metric_names()` order.
  std::vector<double> values() const;

  friend bool operator==(const ProcessMetricsRecord&, const ProcessMetricsRecord&) = default;
};

/// The 18 numeric process metrics, in table order:
/// DEV SES EVTS NFILES NCOM PCCPF EC NOA NSS NCS NOT PCC NVER NCAT NPLA NISP NOS NPER.
const std::vector<std::string>& process_metric_names();

ProcessMetricsRecord process_metrics_from_values(const std::vector<double>& values);

/// Counts over the log plus structural figures of the model's deepest level.
/// NSS/NCS count simple/composite states of the hierarchy and NOA = NSS + NCS;
/// NOT and PCC come from the deepest transition system. Distinct counts skip
/// empty attribute values; NISP counts distinct cities.
ProcessMetricsRecord compute_process_metrics(const EventLog& log, const ProcessModel& model);

// ---- product metrics -------------------------------------------------------

inline constexpr std::size_t kProductMetricCount = 23;

/// VG PAR NBD CA CE RMI RMA RMD DIT WMC NSC NORM LCOM NOF NSF SIX NOP NOC NOI NOM NSM MLOC TLOC.
const std::array<std::string_view, kProductMetricCount>& product_metric_names();

enum class Moment { t0, t1 };

struct ProductMetricsSnapshot {
  std::string team;
  Moment moment = Moment::t0;
  std::array<double, kProductMetricCount> values{};

  double get(std::string_view metric) const;
};

/// Reads snapshots from CSV with columns team, moment and the 23 metric
/// names (any order). SchemaError on missing columns, negative values or a
/// non-integral TLOC.
std::vector<ProductMetricsSnapshot> read_product_snapshots(std::string_view csv_text);
std::string write_product_snapshots(const std::vector<ProductMetricsSnapshot>& snapshots);

struct DeltaRecord {
  std::string team;
  /// Signed percentage change per metric; nullopt where the t0 value is 0.
  std::array<std::optional<double>, kProductMetricCount> delta{};
  /// -delta(VG): positive when complexity went down.
  std::optional<double> vg_reduction;
  std::optional<std::string> VG_LEVEL;

  std::optional<double> get(std::string_view metric) const;
  bool complete() const;
};

/// (v1 - v0) / v0 * 100 per metric. SchemaError when the teams differ or
/// the moments are not (t0, t1).
DeltaRecord compute_delta(const ProductMetricsSnapshot& t0, const ProductMetricsSnapshot& t1);

// ---- command frequencies ---------------------------------------------------

/// "Category/Command" labels of the refactoring, smell-detection and editor
/// commands tracked as extended metrics.
const std::vector<std::string>& default_command_catalog();

/// One label per line; blank lines and '#' comments ignored. SchemaError on
/// duplicate labels or a label without '/'.
std::vector<std::string> parse_command_catalog(std::string_view text);

struct CommandFrequencyVector {
  std::vector<std::string> catalog;
  std::vector<std::uint64_t> counts;  // aligned with catalog
  std::uint64_t other = 0;            // events outside the catalog

  std::uint64_t count(std::string_view label) const;
  std::uint64_t total() const;  // catalog counts only
};

/// ConfigError on an empty catalog.
CommandFrequencyVector command_frequency_vector(const EventLog& log,
                                                const std::vector<std::string>& catalog);

// ---- feature table ---------------------------------------------------------

struct FeatureRow {
  std::string team;
  ProcessMetricsRecord process;
  std::optional<CommandFrequencyVector> commands;
  std::optional<DeltaRecord> delta;
  std::optional<std::string> practice;  // "AR" or "MR"
};

enum class FeatureSet { standard, extended };
FeatureSet parse_feature_set(std::string_view tag);

/// Which categorical column becomes the label.
enum class LabelKind { practice, vg_level, pcc_level, none };
LabelKind parse_label_kind(std::string_view tag);

struct FeatureTable {
  std::vector<std::string> columns;
  std::vector<std::string> teams;
  Matrix values;
  std::vector<std::string> labels;  // empty when LabelKind::none

  std::string to_csv() const;
  static FeatureTable from_csv(std::string_view text);
};

/// Standard: the 18 process metrics. Extended: plus one "cmd:<label>" column
/// per catalog entry. SchemaError on duplicate teams, rows lacking command
/// vectors (extended), differing catalogs, or a missing label.
FeatureTable assemble_feature_table(const std::vector<FeatureRow>& rows, FeatureSet feature_set,
                                    LabelKind label = LabelKind::practice);

}  // namespace devmine
