#include "devmine/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "devmine/error.hpp"
#include "devmine/io.hpp"

namespace devmine {
namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

std::size_t product_index(std::string_view metric) {
  const auto& names = product_metric_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == metric) return i;
  throw SchemaError(fmt::format("unknown product metric '{}'", metric));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::int64_t compute_pcc(const TransitionSystem& ts) {
  if (ts.nodes.empty()) throw DataError("cannot compute complexity of an empty transition system");
  DisjointSets sets(ts.nodes.size());
  std::size_t components = ts.nodes.size();
  for (const auto& a : ts.arcs)
    if (sets.unite(a.from, a.to)) --components;
  return static_cast<std::int64_t>(ts.arcs.size()) - static_cast<std::int64_t>(ts.nodes.size()) +
         2 * static_cast<std::int64_t>(components);
}

// ---- process metrics -------------------------------------------------------

const std::vector<std::string>& process_metric_names() {
  static const std::vector<std::string> names = {"DEV",  "SES", "EVTS", "NFILES", "NCOM", "PCCPF",
                                                 "EC",   "NOA", "NSS",  "NCS",    "NOT",  "PCC",
                                                 "NVER", "NCAT", "NPLA", "NISP",  "NOS",  "NPER"};
  return names;
}

std::vector<double> ProcessMetricsRecord::values() const {
  auto d = [](auto v) { return static_cast<double>(v); };
  return {d(DEV), d(SES), d(EVTS), d(NFILES), d(NCOM), PCCPF,   d(EC),   d(NOA),  d(NSS),
          d(NCS), d(NOT), d(PCC),  d(NVER),   d(NCAT), d(NPLA), d(NISP), d(NOS), d(NPER)};
}

ProcessMetricsRecord process_metrics_from_values(const std::vector<double>& v) {
  if (v.size() != process_metric_names().size())
    throw SchemaError(fmt::format("expected {} process metrics, got {}", process_metric_names().size(), v.size()));
  auto u = [](double x) { return static_cast<std::uint64_t>(std::llround(x)); };
  ProcessMetricsRecord r;
  r.DEV = u(v[0]);
  r.SES = u(v[1]);
  r.EVTS = u(v[2]);
  r.NFILES = u(v[3]);
  r.NCOM = u(v[4]);
  r.PCCPF = v[5];
  r.EC = u(v[6]);
  r.NOA = u(v[7]);
  r.NSS = u(v[8]);
  r.NCS = u(v[9]);
  r.NOT = u(v[10]);
  r.PCC = std::llround(v[11]);
  r.NVER = u(v[12]);
  r.NCAT = u(v[13]);
  r.NPLA = u(v[14]);
  r.NISP = u(v[15]);
  r.NOS = u(v[16]);
  r.NPER = u(v[17]);
  return r;
}

ProcessMetricsRecord compute_process_metrics(const EventLog& log, const ProcessModel& model) {
  std::set<std::string_view> devs, sessions, files, commands, categories, versions, platforms,
      cities, systems, perspectives;
  std::uint64_t events = 0;
  auto add = [](std::set<std::string_view>& set, const std::string& v) {
    if (!v.empty()) set.insert(v);
  };
  for (const auto& trace : log.traces) {
    for (const auto& e : trace.events) {
      ++events;
      add(devs, e.resource);
      add(sessions, e.attributes.at("session"));
      if (e.activity_path[0] != kNoFile) add(files, e.activity_path[0]);
      add(categories, e.activity_path[1]);
      add(commands, e.activity_path[2]);
      add(versions, e.attributes.at("platform_version"));
      add(platforms, e.attributes.at("platform_branch"));
      add(cities, e.attributes.at("city"));
      add(systems, e.attributes.at("os_name"));
      add(perspectives, e.attributes.at("perspective"));
    }
  }
  std::set<std::string> event_classes;
  for (const auto& trace : log.traces)
    for (const auto& e : trace.events) event_classes.insert(e.label(2));

  const auto& deepest = flatten_level(model, model.max_level);
  ProcessMetricsRecord r;
  r.DEV = devs.size();
  r.SES = sessions.size();
  r.EVTS = events;
  r.NFILES = files.size();
  r.NCOM = commands.size();
  r.EC = event_classes.size();
  r.NSS = model.simple_count();
  r.NCS = model.composite_count();
  r.NOA = r.NSS + r.NCS;
  r.NOT = deepest.arcs.size();
  r.PCC = compute_pcc(deepest);
  r.PCCPF = r.NFILES > 0 ? static_cast<double>(r.PCC) / static_cast<double>(r.NFILES) : 0.0;
  r.NVER = versions.size();
  r.NCAT = categories.size();
  r.NPLA = platforms.size();
  r.NISP = cities.size();
  r.NOS = systems.size();
  r.NPER = perspectives.size();
  return r;
}

// ---- product metrics -------------------------------------------------------

const std::array<std::string_view, kProductMetricCount>& product_metric_names() {
  static constexpr std::array<std::string_view, kProductMetricCount> names = {
      "VG",   "PAR", "NBD", "CA",  "CE",  "RMI", "RMA", "RMD", "DIT", "WMC", "NSC", "NORM",
      "LCOM", "NOF", "NSF", "SIX", "NOP", "NOC", "NOI", "NOM", "NSM", "MLOC", "TLOC"};
  return names;
}

double ProductMetricsSnapshot::get(std::string_view metric) const { return values[product_index(metric)]; }

std::vector<ProductMetricsSnapshot> read_product_snapshots(std::string_view csv_text) {
  auto records = parse_csv(csv_text);
  if (records.empty()) return {};
  const auto& header = records.front().fields;
  auto column = [&](std::string_view name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(fmt::format("product snapshot CSV lacks column '{}'", name));
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto team_col = column("team");
  const auto moment_col = column("moment");
  std::array<std::size_t, kProductMetricCount> metric_cols{};
  for (std::size_t i = 0; i < kProductMetricCount; ++i) metric_cols[i] = column(product_metric_names()[i]);

  std::vector<ProductMetricsSnapshot> out;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.malformed || rec.fields.size() != header.size())
      throw SchemaError(fmt::format("product snapshot CSV line {}: field count mismatch", rec.line));
    ProductMetricsSnapshot s;
    s.team = rec.fields[team_col];
    const auto& moment = rec.fields[moment_col];
    if (moment == "t0") s.moment = Moment::t0;
    else if (moment == "t1") s.moment = Moment::t1;
    else throw SchemaError(fmt::format("line {}: moment must be t0 or t1, got '{}'", rec.line, moment));
    for (std::size_t i = 0; i < kProductMetricCount; ++i) {
      auto v = parse_number(rec.fields[metric_cols[i]]);
      if (!v || *v < 0.0)
        throw SchemaError(fmt::format("line {}: {} must be a non-negative number", rec.line,
                                      product_metric_names()[i]));
      s.values[i] = *v;
    }
    if (s.get("TLOC") != std::floor(s.get("TLOC")))
      throw SchemaError(fmt::format("line {}: TLOC must be integral", rec.line));
    out.push_back(std::move(s));
  }
  return out;
}

std::string write_product_snapshots(const std::vector<ProductMetricsSnapshot>& snapshots) {
  std::vector<std::string> header = {"team", "moment"};
  for (auto n : product_metric_names()) header.emplace_back(n);
  std::string out = csv_line(header);
  for (const auto& s : snapshots) {
    std::vector<std::string> row = {s.team, s.moment == Moment::t0 ? "t0" : "t1"};
    for (double v : s.values) row.push_back(format_number(v));
    out += csv_line(row);
  }
  return out;
}

std::optional<double> DeltaRecord::get(std::string_view metric) const { return delta[product_index(metric)]; }

bool DeltaRecord::complete() const {
  return std::all_of(delta.begin(), delta.end(), [](const auto& d) { return d.has_value(); });
}

DeltaRecord compute_delta(const ProductMetricsSnapshot& t0, const ProductMetricsSnapshot& t1) {
  if (t0.team != t1.team)
    throw SchemaError(fmt::format("delta across teams '{}' and '{}'", t0.team, t1.team));
  if (t0.moment != Moment::t0 || t1.moment != Moment::t1)
    throw SchemaError(fmt::format("team '{}': delta needs a t0 and a t1 snapshot", t0.team));
  DeltaRecord d;
  d.team = t0.team;
  for (std::size_t i = 0; i < kProductMetricCount; ++i) {
    const double v0 = t0.values[i];
    if (v0 == 0.0) continue;
    d.delta[i] = (t1.values[i] - v0) / v0 * 100.0;
  }
  if (auto vg = d.delta[product_index("VG")]) d.vg_reduction = -*vg;
  return d;
}

// ---- command frequencies ---------------------------------------------------

const std::vector<std::string>& default_command_catalog() {
  static const std::vector<std::string> catalog = {
      "Refactor/Java-Extract Method",
      "Refactor/Java-Move - Refactoring",
      "Refactor/Java-Extract Class...",
      "Refactor/Java-Rename - Refactoring",
      "Refactor/Delete Resources",
      "Refactor/Java-Encapsulate Field",
      "Refactor/Java-Change Method Signature",
      "Refactor/Java-Move Type to New File",
      "Eclipse Editor/File Open",
      "Eclipse Editor/File Editing",
      "Eclipse Editor/File Close",
      "Eclipse View/Project Explorer",
      "Eclipse View/Package Explorer",
      "Eclipse View/Long Method",
      "Eclipse View/God Class",
      "Eclipse View/Code Smell Visualization",
      "Eclipse View/Type Checking",
      "Eclipse View/Feature Envy",
      "Eclipse View/Duplicated Code",
      "Edit/Find and Replace",
      "Edit/Copy",
      "Edit/Paste",
      "Edit/Cut",
      "Edit/Delete",
      "Edit/Undo",
      "Edit/Redo",
      "File/Import",
      "File/Refresh",
      "File/Save",
      "File/Save All",
      "Source/Generate Getters and Setters",
      "Compare/Select Next Change",
      "Text Editing/Delete Previous Word",
  };
  return catalog;
}

std::vector<std::string> parse_command_catalog(std::string_view text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty() || line.front() == '#') continue;
    if (line.find('/') == std::string_view::npos)
      throw SchemaError(fmt::format("catalog label '{}' lacks a 'Category/Command' separator", line));
    if (!seen.emplace(line).second) throw SchemaError(fmt::format("duplicate catalog label '{}'", line));
    out.emplace_back(line);
  }
  return out;
}

std::uint64_t CommandFrequencyVector::count(std::string_view label) const {
  for (std::size_t i = 0; i < catalog.size(); ++i)
    if (catalog[i] == label) return counts[i];
  return 0;
}

std::uint64_t CommandFrequencyVector::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

CommandFrequencyVector command_frequency_vector(const EventLog& log, const std::vector<std::string>& catalog) {
  if (catalog.empty()) throw ConfigError("command catalog is empty");
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t i = 0; i < catalog.size(); ++i) index.emplace(catalog[i], i);

  CommandFrequencyVector v;
  v.catalog = catalog;
  v.counts.assign(catalog.size(), 0);
  std::string key;
  for (const auto& trace : log.traces) {
    for (const auto& e : trace.events) {
      key = e.activity_path[1];
      key.push_back('/');
      key += e.activity_path[2];
      if (auto it = index.find(key); it != index.end()) ++v.counts[it->second];
      else ++v.other;
    }
  }
  return v;
}

// ---- feature table ---------------------------------------------------------

FeatureSet parse_feature_set(std::string_view tag) {
  if (tag == "standard") return FeatureSet::standard;
  if (tag == "extended") return FeatureSet::extended;
  throw ConfigError(fmt::format("unknown feature set '{}'", tag));
}

LabelKind parse_label_kind(std::string_view tag) {
  if (tag == "practice") return LabelKind::practice;
  if (tag == "vg_level" || tag == "vg-level") return LabelKind::vg_level;
  if (tag == "pcc_level" || tag == "pcc-level") return LabelKind::pcc_level;
  if (tag == "none") return LabelKind::none;
  throw ConfigError(fmt::format("unknown label kind '{}'", tag));
}

std::string FeatureTable::to_csv() const {
  std::vector<std::string> header = {"team"};
  header.insert(header.end(), columns.begin(), columns.end());
  if (!labels.empty()) header.emplace_back("label");
  std::string out = csv_line(header);
  for (std::size_t r = 0; r < values.rows(); ++r) {
    std::vector<std::string> row = {teams[r]};
    for (double v : values.row(r)) row.push_back(format_number(v));
    if (!labels.empty()) row.push_back(labels[r]);
    out += csv_line(row);
  }
  return out;
}

FeatureTable FeatureTable::from_csv(std::string_view text) {
  auto records = parse_csv(text);
  if (records.empty()) throw SchemaError("feature table is empty");
  const auto& header = records.front().fields;
  if (header.empty() || header.front() != "team") throw SchemaError("feature table must start with a 'team' column");
  const bool has_label = header.back() == "label";
  FeatureTable t;
  t.columns.assign(header.begin() + 1, header.end() - (has_label ? 1 : 0));
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.malformed || rec.fields.size() != header.size())
      throw SchemaError(fmt::format("feature table line {}: field count mismatch", rec.line));
    t.teams.push_back(rec.fields.front());
    std::vector<double> row;
    for (std::size_t c = 1; c <= t.columns.size(); ++c) {
      auto v = parse_number(rec.fields[c]);
      if (!v) throw SchemaError(fmt::format("feature table line {}: '{}' is not numeric", rec.line, rec.fields[c]));
      row.push_back(*v);
    }
    t.values.push_row(row);
    if (has_label) t.labels.push_back(rec.fields.back());
  }
  if (t.values.rows() == 0) t.values = Matrix(0, t.columns.size());
  return t;
}

FeatureTable assemble_feature_table(const std::vector<FeatureRow>& rows, FeatureSet feature_set, LabelKind label) {
  FeatureTable table;
  table.columns = process_metric_names();
  const std::vector<std::string>* catalog = nullptr;
  if (feature_set == FeatureSet::extended) {
    for (const auto& row : rows) {
      if (!row.commands) throw SchemaError(fmt::format("team '{}' has no command frequencies", row.team));
      if (!catalog) catalog = &row.commands->catalog;
      else if (*catalog != row.commands->catalog)
        throw SchemaError(fmt::format("team '{}' uses a different command catalog", row.team));
    }
    if (catalog)
      for (const auto& c : *catalog) table.columns.push_back("cmd:" + c);
  }

  std::set<std::string> seen;
  table.values = Matrix(0, table.columns.size());
  for (const auto& row : rows) {
    if (!seen.insert(row.team).second) throw SchemaError(fmt::format("duplicate team '{}'", row.team));
    auto values = row.process.values();
    if (catalog)
      for (auto c : row.commands->counts) values.push_back(static_cast<double>(c));
    table.values.push_row(values);
    table.teams.push_back(row.team);

    std::optional<std::string> value;
    switch (label) {
      case LabelKind::practice: value = row.practice; break;
      case LabelKind::vg_level: value = row.delta ? row.delta->VG_LEVEL : std::nullopt; break;
      case LabelKind::pcc_level: value = row.process.PCC_LEVEL; break;
      case LabelKind::none: continue;
    }
    if (!value || value->empty()) throw SchemaError(fmt::format("team '{}' has no label", row.team));
    table.labels.push_back(*value);
  }
  return table;
}

}  // namespace devmine
