#include "devmine/discovery.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "devmine/error.hpp"

namespace devmine {
namespace {

std::size_t ceil_fraction(double fraction, std::size_t n) {
  const double v = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, v)));
}

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

void check_level(int level) {
  if (level < 0 || level > kMaxLevel)
    throw ConfigError(fmt::format("hierarchy level {} outside [0, {}]", level, kMaxLevel));
}

void sort_arcs(std::vector<Arc>& arcs) {
  std::sort(arcs.begin(), arcs.end(),
            [](const Arc& a, const Arc& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
}

}  // namespace

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::simple: return "simple";
    case NodeKind::composite: return "composite";
    case NodeKind::start: return "start";
    case NodeKind::end: return "end";
  }
  return "simple";
}

std::size_t TransitionSystem::activity_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TsNode& n) { return !n.artificial(); }));
}

std::size_t TransitionSystem::find(std::string_view label) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].label == label) return i;
  return nodes.size();
}

std::uint64_t TransitionSystem::arc_frequency(std::string_view from, std::string_view to) const {
  const auto f = find(from);
  const auto t = find(to);
  for (const auto& a : arcs)
    if (a.from == f && a.to == t) return a.frequency;
  return 0;
}

std::size_t ProcessModel::simple_count() const {
  return static_cast<std::size_t>(std::count_if(
      nodes.begin(), nodes.end(), [](const ActivityNode& n) { return n.kind == NodeKind::simple; }));
}

std::size_t ProcessModel::composite_count() const {
  return static_cast<std::size_t>(std::count_if(
      nodes.begin(), nodes.end(), [](const ActivityNode& n) { return n.kind == NodeKind::composite; }));
}

TransitionSystem directly_follows(const EventLog& log, int level) {
  check_level(level);
  const std::string start(kStartLabel), end(kEndLabel);
  std::map<std::string, std::uint64_t> node_freq;
  std::map<std::pair<std::string, std::string>, std::uint64_t> arc_freq;
  std::uint64_t trace_count = 0;

  for (const auto& trace : log.traces) {
    if (trace.events.empty()) continue;
    ++trace_count;
    std::string prev = start;
    for (const auto& e : trace.events) {
      auto label = e.label(level);
      ++node_freq[label];
      ++arc_freq[{prev, label}];
      prev = std::move(label);
    }
    ++arc_freq[{prev, end}];
  }

  TransitionSystem ts;
  ts.level = level;
  ts.nodes.push_back({start, NodeKind::start, trace_count});
  std::map<std::string, std::size_t> index{{start, 0}};
  for (const auto& [label, freq] : node_freq) {
    index[label] = ts.nodes.size();
    ts.nodes.push_back({label, NodeKind::simple, freq});
  }
  index[end] = ts.nodes.size();
  ts.nodes.push_back({end, NodeKind::end, trace_count});

  for (const auto& [pair, freq] : arc_freq)
    ts.arcs.push_back({index.at(pair.first), index.at(pair.second), freq});
  sort_arcs(ts.arcs);
  return ts;
}

ProcessModel discover_model(const EventLog& log, int max_level) {
  check_level(max_level);
  if (log.empty() || log.event_count() == 0) throw DataError("no traces");

  ProcessModel model;
  model.max_level = max_level;
  model.source_digest = log_digest(log);

  // Hierarchy: one node per distinct label per level, (level, label) order.
  std::vector<std::map<std::string, std::uint64_t>> freq(static_cast<std::size_t>(max_level) + 1);
  for (const auto& trace : log.traces)
    for (const auto& e : trace.events)
      for (int l = 0; l <= max_level; ++l) ++freq[static_cast<std::size_t>(l)][e.label(l)];

  std::vector<std::map<std::string, std::size_t>> index(freq.size());
  for (int l = 0; l <= max_level; ++l) {
    for (const auto& [label, count] : freq[static_cast<std::size_t>(l)]) {
      ActivityNode node;
      node.label = label;
      node.level = l;
      node.kind = l < max_level ? NodeKind::composite : NodeKind::simple;
      node.absolute_frequency = count;
      index[static_cast<std::size_t>(l)][label] = model.nodes.size();
      if (l == 0) model.roots.push_back(model.nodes.size());
      model.nodes.push_back(std::move(node));
    }
  }
  // Parent links come from the paths themselves, since segments may contain '|'.
  std::set<std::pair<std::size_t, std::size_t>> links;
  for (const auto& trace : log.traces)
    for (const auto& e : trace.events)
      for (int l = 1; l <= max_level; ++l)
        links.emplace(index[static_cast<std::size_t>(l - 1)].at(e.label(l - 1)),
                      index[static_cast<std::size_t>(l)].at(e.label(l)));
  for (const auto& [parent, child] : links) model.nodes[parent].children.push_back(child);

  for (int l = 0; l <= max_level; ++l) {
    auto ts = directly_follows(log, l);
    if (l < max_level)
      for (auto& n : ts.nodes)
        if (!n.artificial()) n.kind = NodeKind::composite;
    model.levels.push_back(std::move(ts));
  }
  return model;
}

const TransitionSystem& flatten_level(const ProcessModel& model, int level) {
  if (level < 0 || level > model.max_level)
    throw ConfigError(fmt::format("level {} outside discovered range [0, {}]", level, model.max_level));
  return model.levels[static_cast<std::size_t>(level)];
}

TransitionSystem filter_model(const TransitionSystem& ts, double activity_fraction,
                              double path_fraction) {
  if (!(activity_fraction > 0.0 && activity_fraction <= 1.0) ||
      !(path_fraction > 0.0 && path_fraction <= 1.0))
    throw ConfigError("filter fractions must lie in (0, 1]");

  std::vector<std::size_t> activities;
  for (std::size_t i = 0; i < ts.nodes.size(); ++i)
    if (!ts.nodes[i].artificial()) activities.push_back(i);
  std::sort(activities.begin(), activities.end(), [&](std::size_t a, std::size_t b) {
    const auto& na = ts.nodes[a];
    const auto& nb = ts.nodes[b];
    if (na.frequency != nb.frequency) return na.frequency > nb.frequency;
    return na.label < nb.label;
  });
  activities.resize(ceil_fraction(activity_fraction, activities.size()));

  std::vector<bool> kept(ts.nodes.size(), false);
  for (auto i : activities) kept[i] = true;
  for (std::size_t i = 0; i < ts.nodes.size(); ++i)
    if (ts.nodes[i].artificial()) kept[i] = true;

  std::vector<Arc> candidates;
  for (const auto& a : ts.arcs)
    if (kept[a.from] && kept[a.to]) candidates.push_back(a);
  std::sort(candidates.begin(), candidates.end(), [&](const Arc& a, const Arc& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return std::tie(ts.nodes[a.from].label, ts.nodes[a.to].label) <
           std::tie(ts.nodes[b.from].label, ts.nodes[b.to].label);
  });
  candidates.resize(ceil_fraction(path_fraction, candidates.size()));

  TransitionSystem out;
  out.level = ts.level;
  std::vector<std::size_t> remap(ts.nodes.size(), ts.nodes.size());
  for (std::size_t i = 0; i < ts.nodes.size(); ++i) {
    if (!kept[i]) continue;
    remap[i] = out.nodes.size();
    out.nodes.push_back(ts.nodes[i]);
  }
  for (const auto& a : candidates) out.arcs.push_back({remap[a.from], remap[a.to], a.frequency});

  const auto start = out.find(kStartLabel);
  const auto end = out.find(kEndLabel);
  if (start < out.nodes.size() && end < out.nodes.size()) {
    std::vector<bool> has_in(out.nodes.size(), false), has_out(out.nodes.size(), false);
    for (const auto& a : out.arcs) {
      if (a.from == a.to) continue;
      has_out[a.from] = true;
      has_in[a.to] = true;
    }
    std::vector<std::uint64_t> inflow(ts.nodes.size(), 0), outflow(ts.nodes.size(), 0);
    for (const auto& a : ts.arcs) {
      outflow[a.from] += a.frequency;
      inflow[a.to] += a.frequency;
    }
    for (std::size_t i = 0; i < ts.nodes.size(); ++i) {
      const auto j = remap[i];
      if (j == ts.nodes.size() || out.nodes[j].artificial()) continue;
      if (!has_in[j]) out.arcs.push_back({start, j, std::max<std::uint64_t>(1, inflow[i])});
      if (!has_out[j]) out.arcs.push_back({j, end, std::max<std::uint64_t>(1, outflow[i])});
    }
  }
  sort_arcs(out.arcs);
  return out;
}

DotOverlay parse_dot_overlay(std::string_view tag) {
  if (tag == "none") return DotOverlay::none;
  if (tag == "absolute-frequency") return DotOverlay::absolute_frequency;
  throw ConfigError(fmt::format("unknown overlay '{}'", tag));
}

std::string export_dot(const TransitionSystem& ts, DotOverlay overlay, std::string_view graph_name) {
  const bool freq = overlay == DotOverlay::absolute_frequency;
  std::uint64_t max_node = 0, max_arc = 0;
  for (const auto& n : ts.nodes)
    if (!n.artificial()) max_node = std::max(max_node, n.frequency);
  for (const auto& a : ts.arcs) max_arc = std::max(max_arc, a.frequency);

  std::string out = fmt::format("digraph \"{}\" {{\n", dot_escape(graph_name));
  if (freq) {
    out += "  rankdir=LR;\n";
    out += "  node [shape=box, fontname=\"Helvetica\"];\n";
  }
  for (std::size_t i = 0; i < ts.nodes.size(); ++i) {
    const auto& n = ts.nodes[i];
    if (!freq) {
      out += fmt::format("  n{} [label=\"{}\"];\n", i, dot_escape(n.label));
      continue;
    }
    if (n.artificial()) {
      out += fmt::format("  n{} [label=\"{}\", shape=circle];\n", i, dot_escape(n.label));
      continue;
    }
    // Linear ramp from white to dark blue (#08306b).
    const double t = max_node ? static_cast<double>(n.frequency) / static_cast<double>(max_node) : 0.0;
    const auto channel = [t](int lo) { return static_cast<int>(std::lround(255.0 + t * (lo - 255.0))); };
    out += fmt::format(
        "  n{} [label=\"{}\\n{}\", style=filled, fillcolor=\"#{:02x}{:02x}{:02x}\", fontcolor=\"{}\"];\n", i,
        dot_escape(n.label), n.frequency, channel(0x08), channel(0x30), channel(0x6b),
        t > 0.5 ? "white" : "black");
  }
  for (const auto& a : ts.arcs) {
    if (!freq) {
      out += fmt::format("  n{} -> n{};\n", a.from, a.to);
      continue;
    }
    const double w = max_arc ? 1.0 + 4.0 * static_cast<double>(a.frequency) / static_cast<double>(max_arc) : 1.0;
    out += fmt::format("  n{} -> n{} [label=\"{}\", penwidth={:.2f}];\n", a.from, a.to, a.frequency, w);
  }
  out += "}\n";
  return out;
}

std::string transition_system_json(const TransitionSystem& ts) {
  nlohmann::ordered_json doc;
  doc["level"] = ts.level;
  doc["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : ts.nodes)
    doc["nodes"].push_back({{"label", n.label}, {"kind", to_string(n.kind)}, {"frequency", n.frequency}});
  doc["arcs"] = nlohmann::ordered_json::array();
  for (const auto& a : ts.arcs)
    doc["arcs"].push_back(
        {{"from", ts.nodes[a.from].label}, {"to", ts.nodes[a.to].label}, {"frequency", a.frequency}});
  return doc.dump(2) + "\n";
}

bool replays(const TransitionSystem& ts, const EventLog& log) {
  std::map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < ts.nodes.size(); ++i) index[ts.nodes[i].label] = i;
  std::set<std::pair<std::size_t, std::size_t>> arcs;
  for (const auto& a : ts.arcs) arcs.emplace(a.from, a.to);

  auto lookup = [&](std::string_view label, std::size_t& out) {
    auto it = index.find(label);
    if (it == index.end()) return false;
    out = it->second;
    return true;
  };
  std::size_t start = 0, end = 0;
  if (!lookup(kStartLabel, start) || !lookup(kEndLabel, end)) return false;

  for (const auto& trace : log.traces) {
    std::size_t prev = start;
    for (const auto& e : trace.events) {
      std::size_t cur = 0;
      if (!lookup(e.label(ts.level), cur) || !arcs.count({prev, cur})) return false;
      prev = cur;
    }
    if (!arcs.count({prev, end})) return false;
  }
  return true;
}

}  // namespace devmine
