#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "devmine/eventlog.hpp"

namespace devmine {

enum class NodeKind { simple, composite, start, end };

std::string_view to_string(NodeKind k);

inline constexpr std::string_view kStartLabel = "START";
inline constexpr std::string_view kEndLabel = "END";
inline constexpr int kMaxLevel = 2;

/// Node of the activity hierarchy. Level-L labels are the first L+1 path
/// segments joined by "|"; composites group the nodes one level below.
struct ActivityNode {
  std::string label;
  int level = 0;
  NodeKind kind = NodeKind::simple;
  std::vector<std::size_t> children;  // indices into ProcessModel::nodes
  std::uint64_t absolute_frequency = 0;

  friend bool operator==(const ActivityNode&, const ActivityNode&) = default;
};

struct TsNode {
  std::string label;
  NodeKind kind = NodeKind::simple;
  std::uint64_t frequency = 0;

  bool artificial() const { return kind == NodeKind::start || kind == NodeKind::end; }
  friend bool operator==(const TsNode&, const TsNode&) = default;
};

struct Arc {
  std::size_t from = 0;
  std::size_t to = 0;
  std::uint64_t frequency = 0;

  friend bool operator==(const Arc&, const Arc&) = default;
};

/// Directly-follows graph at one hierarchy level. Discovered systems list
/// START first, END last, activity nodes in label order between them; arcs
/// are unique per ordered pair and sorted by (from, to).
struct TransitionSystem {
  int level = 0;
  std::vector<TsNode> nodes;
  std::vector<Arc> arcs;

  std::size_t activity_count() const;  // excludes START/END
  /// Index of the node with this label, or nodes.size().
  std::size_t find(std::string_view label) const;
  /// Frequency of the arc between two labels, 0 when absent.
  std::uint64_t arc_frequency(std::string_view from, std::string_view to) const;

  friend bool operator==(const TransitionSystem&, const TransitionSystem&) = default;
};

struct ProcessModel {
  int max_level = kMaxLevel;
  std::vector<ActivityNode> nodes;   // whole hierarchy
  std::vector<std::size_t> roots;    // level-0 nodes
  std::vector<TransitionSystem> levels;  // levels[L] for L in [0, max_level]
  std::string source_digest;

  std::size_t simple_count() const;
  std::size_t composite_count() const;

  friend bool operator==(const ProcessModel&, const ProcessModel&) = default;
};

/// Builds the hierarchy and a directly-follows transition system per level.
/// Throws DataError("no traces") on an empty log and ConfigError when
/// max_level is outside [0, 2].
ProcessModel discover_model(const EventLog& log, int max_level = kMaxLevel);

/// Transition system of one level. ConfigError when out of range.
const TransitionSystem& flatten_level(const ProcessModel& model, int level);

/// Directly-follows system of a log at one level, without the hierarchy.
TransitionSystem directly_follows(const EventLog& log, int level);

/// Keeps the ceil(activity_fraction * |activities|) most frequent activity
/// nodes, then the ceil(path_fraction * |arcs among kept nodes|) most
/// frequent arcs. Ties go to label order. Kept nodes left without an
/// incoming (outgoing) arc from (to) another node are reattached to START
/// (END) with the frequency of their original inflow (outflow).
/// ConfigError unless both fractions lie in (0, 1].
TransitionSystem filter_model(const TransitionSystem& ts, double activity_fraction,
                              double path_fraction);

enum class DotOverlay { none, absolute_frequency };

DotOverlay parse_dot_overlay(std::string_view tag);

/// Graphviz digraph. With the frequency overlay, node fill darkens linearly
/// with frequency (white to dark blue) and labels carry counts.
std::string export_dot(const TransitionSystem& ts, DotOverlay overlay = DotOverlay::absolute_frequency,
                       std::string_view graph_name = "process");

/// {"level":..,"nodes":[..],"arcs":[..]} with labels instead of indices.
std::string transition_system_json(const TransitionSystem& ts);

/// True iff every trace, read at `level`, is a START -> ... -> END walk.
bool replays(const TransitionSystem& ts, const EventLog& log);

}  // namespace devmine
