#include "devmine/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "devmine/discovery.hpp"
#include "devmine/error.hpp"
#include "devmine/eventlog.hpp"
#include "devmine/io.hpp"
#include "devmine/random.hpp"
#include "devmine/synth.hpp"

namespace fs = std::filesystem;

namespace devmine {

namespace {

constexpr const char* kEvents = "events.jsonl";
constexpr const char* kProducts = "products.csv";
constexpr const char* kLabels = "labels.csv";
constexpr const char* kProcessMetrics = "process_metrics.csv";
constexpr const char* kDeltas = "deltas.csv";
constexpr const char* kFeatures = "features.csv";
constexpr const char* kLevels = "levels.csv";

// Collects what a stage writes so a failure can take it back.
class Writer {
 public:
  explicit Writer(fs::path root) : root_(std::move(root)) {}

  void put(const std::string& rel, std::string_view content) {
    const fs::path target = root_ / rel;
    make_dirs(target.parent_path());
    write_file_atomic(target, content);
    if (std::find(written_.begin(), written_.end(), rel) == written_.end()) written_.push_back(rel);
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& rel : written_) fs::remove(root_ / rel, ec);
    for (auto it = created_.rbegin(); it != created_.rend(); ++it) {
      if (fs::is_directory(*it, ec) && fs::is_empty(*it, ec)) fs::remove(*it, ec);
    }
    written_.clear();
    created_.clear();
  }

  const fs::path& root() const { return root_; }
  const std::vector<std::string>& written() const { return written_; }

 private:
  void make_dirs(const fs::path& dir) {
    if (dir.empty() || fs::exists(dir)) return;
    make_dirs(dir.parent_path());
    fs::create_directory(dir);
    created_.push_back(dir);
  }

  fs::path root_;
  std::vector<std::string> written_;
  std::vector<fs::path> created_;
};

struct Sources {
  std::vector<fs::path> events;
  std::optional<fs::path> products;
  std::optional<fs::path> labels;
};

bool single_dir(const PipelineConfig& c) { return c.inputs.size() == 1 && fs::is_directory(c.inputs.front()); }

Sources resolve_sources(const PipelineConfig& c) {
  Sources s;
  s.products = c.products;
  s.labels = c.labels;
  if (single_dir(c)) {
    const fs::path dir = c.inputs.front();
    if (!fs::exists(dir / kEvents)) throw InputError(fmt::format("{} has no {}", dir.string(), kEvents));
    s.events.push_back(dir / kEvents);
    if (!s.products && fs::exists(dir / kProducts)) s.products = dir / kProducts;
    if (!s.labels && fs::exists(dir / kLabels)) s.labels = dir / kLabels;
  } else {
    for (const auto& p : c.inputs) {
      if (fs::is_directory(p)) throw InputError(fmt::format("{} is a directory; pass it alone", p.string()));
      s.events.push_back(p);
    }
  }
  return s;
}

// Directory holding earlier-stage artifacts for the table-driven stages.
fs::path artifact_dir(const PipelineConfig& c) { return single_dir(c) ? c.inputs.front() : c.out; }

fs::path require_artifact(const fs::path& dir, const std::string& name) {
  const fs::path p = dir / name;
  if (!fs::exists(p)) throw InputError(fmt::format("missing artifact {}", p.string()));
  return p;
}

std::uint64_t seed_of(const PipelineConfig& c) { return c.seed.value_or(0); }

std::string safe_name(std::string_view s) {
  std::string out;
  for (char ch : s) {
    const auto u = static_cast<unsigned char>(ch);
    out.push_back(std::isalnum(u) || ch == '-' || ch == '_' || ch == '.' ? ch : '_');
  }
  return out.empty() ? "_" : out;
}

std::string fixed(double v, int digits = 2) {
  if (!std::isfinite(v)) return "n/a";
  return fmt::format("{:.{}f}", v, digits);
}

// ---- event loading ---------------------------------------------------------

struct LoadedEvents {
  std::vector<RawEvent> events;  // deduplicated
  IngestReport report;
};

LoadedEvents load_events(const std::vector<fs::path>& files, bool strict_hash) {
  LoadedEvents out;
  IngestOptions options;
  options.reject_hash_failures = strict_hash;
  std::vector<RawEvent> all;
  for (const auto& f : files) {
    auto parsed = parse_event_file(f.string(), options);
    out.report.parsed += parsed.report.parsed;
    out.report.accepted += parsed.report.accepted;
    out.report.rejected += parsed.report.rejected;
    out.report.hash_failures += parsed.report.hash_failures;
    for (const auto& [reason, n] : parsed.report.rejection_reasons) out.report.rejection_reasons[reason] += n;
    all.insert(all.end(), std::make_move_iterator(parsed.events.begin()),
               std::make_move_iterator(parsed.events.end()));
  }
  out.events = deduplicate(all);
  out.report.duplicates_removed = all.size() - out.events.size();
  return out;
}

EventLog load_log(const std::vector<fs::path>& files, bool strict_hash) {
  auto loaded = load_events(files, strict_hash);
  auto log = build_log(loaded.events);
  if (log.empty()) throw DataError("no events to analyse");
  return log;
}

// ---- small tables ----------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name, const fs::path& source) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(fmt::format("{} has no column '{}'", source.string(), name));
    return static_cast<std::size_t>(it - header.begin());
  }
};

Table read_table(const fs::path& path) {
  auto records = parse_csv(read_file(path));
  Table t;
  if (records.empty()) throw SchemaError(fmt::format("{} is empty", path.string()));
  t.header = records.front().fields;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].malformed || records[r].fields.size() != t.header.size())
      throw SchemaError(fmt::format("{} line {}: field count mismatch", path.string(), records[r].line));
    t.rows.push_back(records[r].fields);
  }
  return t;
}

// team -> value for a numeric column; blank cells are skipped.
std::map<std::string, double> numeric_column(const Table& t, std::string_view name, const fs::path& source) {
  const auto c = t.column(name, source);
  std::map<std::string, double> out;
  for (const auto& row : t.rows) {
    if (row[c].empty()) continue;
    auto v = parse_number(row[c]);
    if (!v) throw SchemaError(fmt::format("{}: '{}' in column {} is not numeric", source.string(), row[c], name));
    out[row.front()] = *v;
  }
  return out;
}

std::map<std::string, std::string> team_labels(const fs::path& dir) {
  std::map<std::string, std::string> out;
  const fs::path path = dir / kFeatures;
  if (!fs::exists(path)) return out;
  auto table = FeatureTable::from_csv(read_file(path));
  for (std::size_t i = 0; i < table.labels.size(); ++i) out[table.teams[i]] = table.labels[i];
  return out;
}

// ---- stages ----------------------------------------------------------------

void stage_ingest(const PipelineConfig& c, const Sources& src, Writer& w) {
  auto loaded = load_events(src.events, c.strict_hash);
  w.put(kEvents, events_to_json_lines(loaded.events));
  w.put("ingest_report.txt", loaded.report.to_text());
}

void stage_discover(const PipelineConfig& c, const Sources& src, Writer& w) {
  const auto log = load_log(src.events, c.strict_hash);
  const auto model = discover_model(log, c.level);
  const auto& ts = flatten_level(model, c.level);
  const bool filtered = c.filter_activities < 1.0 || c.filter_paths < 1.0;
  const std::string stem = fmt::format("model/process_L{}", c.level);
  w.put(stem + ".dot", export_dot(ts));
  w.put(stem + ".json", transition_system_json(ts));
  if (filtered) w.put(stem + "_filtered.dot", export_dot(filter_model(ts, c.filter_activities, c.filter_paths)));

  for (const auto& team : log_teams(log)) {
    const auto tl = team_log(log, team);
    auto tts = directly_follows(tl, c.level);
    if (filtered) tts = filter_model(tts, c.filter_activities, c.filter_paths);
    w.put(fmt::format("model/teams/{}_L{}.dot", safe_name(team), c.level), export_dot(tts, DotOverlay::absolute_frequency, team));
  }
}

void stage_metrics(const PipelineConfig& c, const Sources& src, Writer& w) {
  const auto log = load_log(src.events, c.strict_hash);
  const auto catalog = c.catalog ? parse_command_catalog(read_file(*c.catalog)) : default_command_catalog();

  std::map<std::string, std::string> labels;
  if (src.labels)
    for (auto& [team, label] : read_labels(read_file(*src.labels))) labels[team] = label;

  std::map<std::string, std::pair<const ProductMetricsSnapshot*, const ProductMetricsSnapshot*>> snaps;
  std::vector<ProductMetricsSnapshot> snapshots;
  if (src.products) {
    snapshots = read_product_snapshots(read_file(*src.products));
    for (const auto& s : snapshots) {
      auto& slot = snaps[s.team];
      auto& ref = s.moment == Moment::t0 ? slot.first : slot.second;
      if (ref) throw SchemaError(fmt::format("team '{}' has two {} snapshots", s.team, s.moment == Moment::t0 ? "t0" : "t1"));
      ref = &s;
    }
  }

  std::vector<FeatureRow> rows;
  for (const auto& team : log_teams(log)) {
    const auto tl = team_log(log, team);
    const auto model = discover_model(tl, kMaxLevel);
    FeatureRow row;
    row.team = team;
    row.process = compute_process_metrics(tl, model);
    row.commands = command_frequency_vector(tl, catalog);
    if (auto it = snaps.find(team); it != snaps.end() && it->second.first && it->second.second)
      row.delta = compute_delta(*it->second.first, *it->second.second);
    if (src.labels) {
      auto it = labels.find(team);
      if (it == labels.end()) throw SchemaError(fmt::format("team '{}' has no label in {}", team, src.labels->string()));
      row.practice = it->second;
    }
    rows.push_back(std::move(row));
  }

  w.put(kProcessMetrics, assemble_feature_table(rows, FeatureSet::standard, LabelKind::none).to_csv());

  std::vector<std::string> header = {"team"};
  header.insert(header.end(), catalog.begin(), catalog.end());
  header.emplace_back("other");
  std::string commands = csv_line(header);
  for (const auto& r : rows) {
    std::vector<std::string> line = {r.team};
    for (auto n : r.commands->counts) line.push_back(std::to_string(n));
    line.push_back(std::to_string(r.commands->other));
    commands += csv_line(line);
  }
  w.put("command_frequencies.csv", commands);

  if (src.products) {
    std::vector<std::string> dh = {"team"};
    for (auto name : product_metric_names()) dh.emplace_back(name);
    dh.emplace_back("vg_reduction");
    std::string deltas = csv_line(dh);
    for (const auto& r : rows) {
      if (!r.delta) continue;
      std::vector<std::string> line = {r.team};
      for (const auto& d : r.delta->delta) line.push_back(d ? format_number(*d) : "");
      line.push_back(r.delta->vg_reduction ? format_number(*r.delta->vg_reduction) : "");
      deltas += csv_line(line);
    }
    w.put(kDeltas, deltas);
  }

  w.put(kFeatures, assemble_feature_table(rows, c.features, src.labels ? LabelKind::practice : LabelKind::none).to_csv());
}

struct VariableLevels {
  std::string name;
  std::map<std::string, double> values;
  std::optional<LevelPartition> partition;
};

void stage_partition(const PipelineConfig& c, Writer& w) {
  const fs::path dir = artifact_dir(c);
  const auto pm_path = require_artifact(dir, kProcessMetrics);
  const auto pm = read_table(pm_path);
  std::vector<std::string> teams;
  for (const auto& row : pm.rows) teams.push_back(row.front());

  std::vector<VariableLevels> vars;
  vars.push_back({"PCC", numeric_column(pm, "PCC", pm_path), std::nullopt});
  if (fs::exists(dir / kDeltas)) vars.push_back({"vg_reduction", numeric_column(read_table(dir / kDeltas), "vg_reduction", dir / kDeltas), std::nullopt});

  std::string curve = csv_line({"variable", "k", "distortion", "silhouette"});
  std::string choice = csv_line({"variable", "elbow_k", "silhouette_k", "used_k"});
  std::string bins = csv_line({"variable", "level", "label", "upper_edge", "centroid", "count"});
  for (std::size_t v = 0; v < vars.size(); ++v) {
    auto& var = vars[v];
    const int k = var.name == "PCC" ? c.pcc_k : c.k;
    std::vector<double> values;
    for (const auto& [team, x] : var.values) values.push_back(x);
    const auto stream_seed = derive_seed(seed_of(c), v);
    var.partition = level_partition(values, k, default_level_labels(k), stream_seed);

    std::set<double> distinct(values.begin(), values.end());
    const int k_hi = std::min<int>(c.k_max, static_cast<int>(distinct.size()));
    std::string elbow_k, sil_k;
    if (k_hi >= 4) {
      Matrix points(0, 1);
      for (double x : values) points.push_row(std::vector<double>{x});
      std::vector<int> ks;
      for (int kk = 2; kk <= k_hi; ++kk) ks.push_back(kk);
      const auto elbow = elbow_select(points, ks, derive_seed(stream_seed, 1));
      const auto sil = silhouette_select(points, ks, derive_seed(stream_seed, 1));
      for (std::size_t i = 0; i < ks.size(); ++i)
        curve += csv_line({var.name, std::to_string(ks[i]), format_number(elbow.distortions[i]), format_number(sil.means[i])});
      elbow_k = std::to_string(elbow.chosen_k);
      sil_k = std::to_string(sil.chosen_k);
    }
    choice += csv_line({var.name, elbow_k, sil_k, std::to_string(k)});

    const auto& part = *var.partition;
    std::vector<std::size_t> counts(part.labels.size(), 0);
    for (double x : values) ++counts[part.level_of(x)];
    for (std::size_t l = 0; l < part.labels.size(); ++l) {
      const std::string edge = l < part.upper_edges.size() ? format_number(part.upper_edges[l]) : "";
      bins += csv_line({var.name, std::to_string(l), part.labels[l], edge, format_number(part.centroids[l]),
                        std::to_string(counts[l])});
    }
  }

  std::string levels = csv_line({"team", "PCC", "PCC_LEVEL", "vg_reduction", "VG_LEVEL"});
  for (const auto& team : teams) {
    std::vector<std::string> line = {team};
    for (std::size_t v = 0; v < 2; ++v) {
      if (v < vars.size()) {
        auto it = vars[v].values.find(team);
        if (it != vars[v].values.end()) {
          line.push_back(format_number(it->second));
          line.push_back(vars[v].partition->label_of(it->second));
          continue;
        }
      }
      line.insert(line.end(), {"", ""});
    }
    levels += csv_line(line);
  }
  w.put(kLevels, levels);
  w.put("partition_bins.csv", bins);
  w.put("partition_choice.csv", choice);
  w.put("partition_curve.csv", curve);
}

void stage_correlate(const PipelineConfig& c, Writer& w) {
  const fs::path dir = artifact_dir(c);
  const auto pm_path = require_artifact(dir, kProcessMetrics);
  const auto pm = FeatureTable::from_csv(read_file(pm_path));
  std::map<std::string, double> vg;
  const bool has_vg = fs::exists(dir / kDeltas);
  if (has_vg) vg = numeric_column(read_table(dir / kDeltas), "vg_reduction", dir / kDeltas);
  const auto labels = team_labels(dir);

  std::vector<std::string> names = pm.columns;
  if (has_vg) names.emplace_back("vg_reduction");
  Matrix data(0, names.size());
  std::vector<std::string> teams;
  for (std::size_t r = 0; r < pm.values.rows(); ++r) {
    std::vector<double> row(pm.values.row(r).begin(), pm.values.row(r).end());
    if (has_vg) {
      auto it = vg.find(pm.teams[r]);
      if (it == vg.end()) continue;
      row.push_back(it->second);
    }
    data.push_row(row);
    teams.push_back(pm.teams[r]);
  }
  if (data.rows() < 3) throw DataError(fmt::format("correlation needs at least 3 teams, have {}", data.rows()));

  const auto matrix = correlation_matrix(names, data, c.alpha);
  w.put("correlation_rho.csv", matrix.rho_csv());
  w.put("correlation_p.csv", matrix.p_value_csv());
  if (!has_vg) return;

  std::vector<std::pair<std::string, std::vector<std::size_t>>> groups = {{"all", {}}};
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t r = 0; r < teams.size(); ++r) {
    groups.front().second.push_back(r);
    if (auto it = labels.find(teams[r]); it != labels.end()) by_label[it->second].push_back(r);
  }
  for (auto& [label, rows] : by_label) groups.emplace_back(label, rows);

  const std::size_t vg_col = names.size() - 1;
  std::string out = csv_line({"group", "metric", "rho", "p_value", "n", "significant", "finite_sample_warning"});
  for (const auto& [group, rows] : groups) {
    std::vector<double> y;
    for (auto r : rows) y.push_back(data(r, vg_col));
    for (std::size_t m = 0; m < vg_col; ++m) {
      std::vector<double> x;
      for (auto r : rows) x.push_back(data(r, m));
      std::vector<std::string> line = {group, names[m]};
      try {
        const auto res = spearman(x, y, c.alpha, c.p_method);
        line.insert(line.end(), {format_number(res.rho), format_number(res.p_value), std::to_string(res.n),
                                 res.significant ? "yes" : "no", res.finite_sample_warning ? "yes" : "no"});
      } catch (const Error& e) {
        if (e.code() != ErrorCode::data && e.code() != ErrorCode::config) throw;
        line.insert(line.end(), {"", "", std::to_string(rows.size()), "no", "no"});
      }
      out += csv_line(line);
    }
  }
  w.put("correlation_vg.csv", out);
}

void stage_train(const PipelineConfig& c, Writer& w) {
  const fs::path dir = artifact_dir(c);
  const auto table = FeatureTable::from_csv(read_file(require_artifact(dir, kFeatures)));
  const std::uint64_t seed = seed_of(c);

  std::vector<std::string> labels;
  std::vector<std::size_t> keep;
  if (c.target == Target::practice) {
    if (table.labels.empty()) throw SchemaError(fmt::format("{} has no label column; rerun metrics with --labels", kFeatures));
    labels = table.labels;
    for (std::size_t r = 0; r < table.teams.size(); ++r) keep.push_back(r);
  } else {
    const auto levels_path = require_artifact(dir, kLevels);
    const auto levels = read_table(levels_path);
    const auto col = levels.column(c.target == Target::vg_level ? "VG_LEVEL" : "PCC_LEVEL", levels_path);
    std::map<std::string, std::string> by_team;
    for (const auto& row : levels.rows)
      if (!row[col].empty()) by_team[row.front()] = row[col];
    for (std::size_t r = 0; r < table.teams.size(); ++r) {
      auto it = by_team.find(table.teams[r]);
      if (it == by_team.end()) continue;
      keep.push_back(r);
      labels.push_back(it->second);
    }
  }
  std::vector<std::string> teams;
  for (auto r : keep) teams.push_back(table.teams[r]);
  auto data = Dataset::from_labels(table.columns, table.values.select_rows(keep), labels);

  const std::string prefix = fmt::format("train_{}/", to_string(c.target));
  ClassifierSpec spec;
  spec.family = c.family;
  if (c.grid) {
    const auto grid = grid_search(default_grid(c.family), data, c.folds, derive_seed(seed, 1));
    std::string out = csv_line({"candidate", "roc"});
    for (std::size_t i = 0; i < grid.candidates.size(); ++i)
      out += csv_line({grid.candidates[i].describe(), format_number(grid.roc[i])});
    w.put(prefix + "grid.csv", out);
    spec = grid.candidates[grid.best];
  }

  if (c.select) {
    const auto sel = greedy_feature_select(spec, data, *c.select, c.folds, derive_seed(seed, 2));
    std::string out = csv_line({"step", "roc", "features"});
    for (std::size_t i = 0; i < sel.path.size(); ++i) {
      std::string joined;
      for (const auto& f : sel.path[i].features) joined += (joined.empty() ? "" : ";") + f;
      out += csv_line({std::to_string(i), format_number(sel.path[i].roc), joined});
    }
    w.put(prefix + "selection.csv", out);
    data = data.subset_features(sel.selected);
  }

  const auto cv = cross_validate(spec, data, c.folds, derive_seed(seed, 3));
  w.put(prefix + "eval.csv", cv.report.to_csv());

  std::vector<std::string> ph = {"team", "actual", "predicted"};
  for (const auto& cls : data.class_names) ph.push_back("p_" + cls);
  std::string preds = csv_line(ph);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto p = cv.probabilities.row(r);
    std::vector<std::string> line = {teams[r], data.class_names[data.y[r]], data.class_names[argmax(p)]};
    for (double v : p) line.push_back(format_number(v));
    preds += csv_line(line);
  }
  w.put(prefix + "cv_predictions.csv", preds);

  const auto model = train(spec, data, derive_seed(seed, 4));
  w.put(prefix + "model.json", model.to_json());
  w.put(prefix + "importance.csv",
        cv_permutation_importance(spec, data, c.folds, c.repeats, derive_seed(seed, 5)).to_csv());
}

void stage_synth(const PipelineConfig& c, Writer& w) {
  auto config = c.scenario ? ScenarioConfig::from_json(read_file(*c.scenario)) : ScenarioConfig::defaults();
  if (c.seed) config.seed = *c.seed;
  config.validate();
  const auto scenario = generate(config);
  w.put(kEvents, events_to_json_lines(scenario.events));
  w.put(kProducts, write_product_snapshots(scenario.snapshots));
  w.put(kLabels, scenario.labels_csv());
  w.put("truth.csv", scenario.truth.to_csv());
  w.put("scenario.json", config.to_json());
}

// ---- report ----------------------------------------------------------------

std::string markdown_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + c + " |";
  return out + "\n";
}

std::string markdown_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out = markdown_row(header);
  out += markdown_row(std::vector<std::string>(header.size(), "---"));
  for (const auto& r : rows) out += markdown_row(r);
  return out;
}

void stage_report(const PipelineConfig& c, Writer& w) {
  const fs::path dir = artifact_dir(c);
  std::string md = "# devmine summary\n";
  bool any = false;

  if (fs::exists(dir / "ingest_report.txt")) {
    any = true;
    md += "\n## Ingest\n\n```\n" + read_file(dir / "ingest_report.txt") + "```\n";
  }

  std::map<std::string, std::string> labels = team_labels(dir);
  if (fs::exists(dir / kProcessMetrics)) {
    any = true;
    const auto pm = FeatureTable::from_csv(read_file(dir / kProcessMetrics));
    std::map<std::string, double> vg;
    if (fs::exists(dir / kDeltas)) vg = numeric_column(read_table(dir / kDeltas), "vg_reduction", dir / kDeltas);

    std::map<std::string, std::vector<std::size_t>> cohorts;
    for (std::size_t r = 0; r < pm.teams.size(); ++r) {
      auto it = labels.find(pm.teams[r]);
      cohorts[it == labels.end() ? "all" : it->second].push_back(r);
    }
    const std::vector<std::string> shown = {"DEV", "SES", "EVTS", "NFILES", "NCOM", "NOA", "NOT", "PCC"};
    std::vector<std::string> header = {"cohort", "teams"};
    header.insert(header.end(), shown.begin(), shown.end());
    if (!vg.empty()) header.emplace_back("VG reduction %");
    std::vector<std::vector<std::string>> rows;
    std::map<std::string, double> pcc_mean;
    for (const auto& [name, members] : cohorts) {
      std::vector<std::string> row = {name, std::to_string(members.size())};
      for (const auto& metric : shown) {
        const auto col = static_cast<std::size_t>(std::find(pm.columns.begin(), pm.columns.end(), metric) - pm.columns.begin());
        if (col >= pm.columns.size()) throw SchemaError(fmt::format("{} has no column '{}'", kProcessMetrics, metric));
        double sum = 0.0;
        for (auto r : members) sum += pm.values(r, col);
        const double mean = sum / static_cast<double>(members.size());
        if (metric == "PCC") pcc_mean[name] = mean;
        row.push_back(fixed(mean, 1));
      }
      if (!vg.empty()) {
        double sum = 0.0;
        std::size_t n = 0;
        for (auto r : members)
          if (auto it = vg.find(pm.teams[r]); it != vg.end()) sum += it->second, ++n;
        row.push_back(n ? fixed(sum / static_cast<double>(n)) : "n/a");
      }
      rows.push_back(std::move(row));
    }
    md += "\n## Cohort means\n\n" + markdown_table(header, rows);
    if (pcc_mean.count("AR") && pcc_mean.count("MR")) {
      md += fmt::format("\nMean PCC: MR {} vs AR {} ({}).\n", fixed(pcc_mean["MR"], 1), fixed(pcc_mean["AR"], 1),
                        pcc_mean["MR"] > pcc_mean["AR"] ? "MR > AR" : "MR <= AR");
    }
  }

  if (fs::exists(dir / "partition_bins.csv")) {
    any = true;
    const auto bins = read_table(dir / "partition_bins.csv");
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : bins.rows) rows.push_back({r[0], r[2], r[3].empty() ? "max" : fixed(*parse_number(r[3])), fixed(*parse_number(r[4])), r[5]});
    md += "\n## Level partitions\n\n" + markdown_table({"variable", "label", "upper edge", "centroid", "teams"}, rows);
    if (fs::exists(dir / "partition_choice.csv")) {
      const auto choice = read_table(dir / "partition_choice.csv");
      std::vector<std::vector<std::string>> crow;
      for (const auto& r : choice.rows) crow.push_back({r[0], r[1].empty() ? "n/a" : r[1], r[2].empty() ? "n/a" : r[2], r[3]});
      md += "\n" + markdown_table({"variable", "elbow k", "silhouette k", "used k"}, crow);
    }
  }

  if (fs::exists(dir / "correlation_vg.csv")) {
    any = true;
    const auto corr = read_table(dir / "correlation_vg.csv");
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : corr.rows)
      if (r[5] == "yes") rows.push_back({r[0], r[1], fixed(*parse_number(r[2]), 3), fixed(*parse_number(r[3]), 4), r[4]});
    md += fmt::format("\n## Significant correlations with VG reduction (alpha {})\n\n", format_number(c.alpha));
    md += rows.empty() ? "None.\n" : markdown_table({"group", "metric", "rho", "p", "n"}, rows);
  }

  std::vector<fs::path> train_dirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && entry.path().filename().string().rfind("train_", 0) == 0) train_dirs.push_back(entry.path());
  std::sort(train_dirs.begin(), train_dirs.end());
  for (const auto& td : train_dirs) {
    if (!fs::exists(td / "eval.csv")) continue;
    any = true;
    md += fmt::format("\n## Classification: {}\n\n", td.filename().string().substr(6));
    const auto eval = read_table(td / "eval.csv");
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : eval.rows) {
      std::vector<std::string> row = {r[0]};
      for (std::size_t i = 1; i <= 8; ++i) row.push_back(fixed(*parse_number(r[i]), 3));
      row.push_back(r[9]);
      rows.push_back(std::move(row));
    }
    md += markdown_table({"Class", "TP", "FP", "Pre.", "Rec.", "F-M.", "MCC", "ROC", "PRC", "Support"}, rows);
    if (!eval.rows.empty() && !eval.rows.back()[10].empty())
      md += fmt::format("\nAccuracy {}%.\n", fixed(100.0 * *parse_number(eval.rows.back()[10])));
    if (fs::exists(td / "importance.csv")) {
      auto imp = read_table(td / "importance.csv");
      std::stable_sort(imp.rows.begin(), imp.rows.end(), [](const auto& a, const auto& b) {
        return *parse_number(a[1]) > *parse_number(b[1]);
      });
      std::vector<std::vector<std::string>> top;
      for (std::size_t i = 0; i < imp.rows.size() && i < 5; ++i) top.push_back({imp.rows[i][0], fixed(*parse_number(imp.rows[i][1]), 3)});
      md += "\nTop features by permutation importance:\n\n" + markdown_table({"feature", "importance"}, top);
    }
  }

  if (!any) throw InputError(fmt::format("no stage artifacts found in {}", dir.string()));
  w.put("summary.md", md);
}

void run_into(Stage stage, const PipelineConfig& c, Writer& w) {
  switch (stage) {
    case Stage::ingest: stage_ingest(c, resolve_sources(c), w); break;
    case Stage::discover: stage_discover(c, resolve_sources(c), w); break;
    case Stage::metrics: stage_metrics(c, resolve_sources(c), w); break;
    case Stage::partition: stage_partition(c, w); break;
    case Stage::correlate: stage_correlate(c, w); break;
    case Stage::train: stage_train(c, w); break;
    case Stage::synth: stage_synth(c, w); break;
    case Stage::report: stage_report(c, w); break;
    case Stage::pipeline: {
      auto src = resolve_sources(c);
      stage_ingest(c, src, w);
      src.events = {c.out / kEvents};
      stage_discover(c, src, w);
      stage_metrics(c, src, w);
      PipelineConfig downstream = c;
      downstream.inputs.clear();
      stage_partition(downstream, w);
      stage_correlate(downstream, w);
      if (c.target != Target::practice || src.labels) stage_train(downstream, w);
      stage_report(downstream, w);
      break;
    }
  }
}

}  // namespace

Stage parse_stage(std::string_view tag) {
  static const std::pair<std::string_view, Stage> table[] = {
      {"ingest", Stage::ingest},       {"discover", Stage::discover}, {"metrics", Stage::metrics},
      {"partition", Stage::partition}, {"correlate", Stage::correlate}, {"train", Stage::train},
      {"synth", Stage::synth},         {"report", Stage::report},     {"pipeline", Stage::pipeline},
  };
  for (const auto& [name, s] : table)
    if (name == tag) return s;
  throw ConfigError(fmt::format("unknown stage '{}'", tag));
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::ingest: return "ingest";
    case Stage::discover: return "discover";
    case Stage::metrics: return "metrics";
    case Stage::partition: return "partition";
    case Stage::correlate: return "correlate";
    case Stage::train: return "train";
    case Stage::synth: return "synth";
    case Stage::report: return "report";
    case Stage::pipeline: return "pipeline";
  }
  return "unknown";
}

Target parse_target(std::string_view tag) {
  if (tag == "practice") return Target::practice;
  if (tag == "vg_level" || tag == "vg-level") return Target::vg_level;
  if (tag == "pcc_level" || tag == "pcc-level") return Target::pcc_level;
  throw ConfigError(fmt::format("unknown target '{}' (practice, vg_level, pcc_level)", tag));
}

std::string_view to_string(Target target) {
  switch (target) {
    case Target::practice: return "practice";
    case Target::vg_level: return "vg_level";
    case Target::pcc_level: return "pcc_level";
  }
  return "unknown";
}

void PipelineConfig::validate(Stage stage) const {
  if (level < 0 || level > kMaxLevel) throw ConfigError(fmt::format("--level must be 0, 1 or 2, got {}", level));
  if (!(filter_activities > 0.0 && filter_activities <= 1.0))
    throw ConfigError("--filter-activities must be in (0, 1]");
  if (!(filter_paths > 0.0 && filter_paths <= 1.0)) throw ConfigError("--filter-paths must be in (0, 1]");
  if (k < 1 || pcc_k < 1) throw ConfigError("--k and --pcc-k must be at least 1");
  if (k_max < 2) throw ConfigError("--k-max must be at least 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("--alpha must be in (0, 1)");
  if (folds < 2) throw ConfigError("--folds must be at least 2");
  if (repeats < 1) throw ConfigError("--repeats must be at least 1");
  if (out.empty()) throw ConfigError("--out is required");

  const bool stochastic = stage == Stage::partition || stage == Stage::train || stage == Stage::synth ||
                          stage == Stage::pipeline;
  if (stochastic && !seed) throw ConfigError(fmt::format("--seed is required for {}", to_string(stage)));

  const bool needs_events = stage == Stage::ingest || stage == Stage::discover || stage == Stage::metrics ||
                            stage == Stage::pipeline;
  if (needs_events && inputs.empty()) throw ConfigError(fmt::format("--input is required for {}", to_string(stage)));
  for (const auto& p : inputs)
    if (!fs::exists(p)) throw InputError(fmt::format("input {} does not exist", p.string()));
  for (const auto* opt : {&products, &labels, &catalog, &scenario})
    if (*opt && !fs::exists(**opt)) throw InputError(fmt::format("input {} does not exist", (*opt)->string()));
}

std::string PipelineConfig::to_ini() const {
  // Unset options are written commented out so the file reads back through --config.
  std::string text;
  const auto line = [&text](std::string_view key, const std::string& value) { text += fmt::format("{} = {}\n", key, value); };
  const auto quoted = [](const fs::path& p) { return fmt::format("\"{}\"", p.generic_string()); };
  const auto path_line = [&](std::string_view key, const std::optional<fs::path>& p) {
    if (p) line(key, quoted(*p));
    else text += fmt::format("# {} =\n", key);
  };
  if (inputs.empty()) {
    text += "# input =\n";
  } else {
    std::string joined;
    for (const auto& p : inputs) joined += (joined.empty() ? "" : ", ") + quoted(p);
    line("input", "[" + joined + "]");
  }
  line("out", quoted(out));
  path_line("products", products);
  path_line("labels", labels);
  path_line("catalog", catalog);
  path_line("scenario", scenario);
  line("level", std::to_string(level));
  line("filter-activities", format_number(filter_activities));
  line("filter-paths", format_number(filter_paths));
  line("k", std::to_string(k));
  line("pcc-k", std::to_string(pcc_k));
  line("k-max", std::to_string(k_max));
  line("alpha", format_number(alpha));
  line("p-method", p_method == PValueMethod::exact_permutation ? "exact" : p_method == PValueMethod::t_approx ? "t" : "auto");
  line("folds", std::to_string(folds));
  if (seed) line("seed", std::to_string(*seed));
  else text += "# seed =\n";
  line("features", features == FeatureSet::standard ? "standard" : "extended");
  line("family", std::string(to_string(family)));
  line("target", std::string(to_string(target)));
  line("no-grid", grid ? "false" : "true");
  line("repeats", std::to_string(repeats));
  line("select", select ? (*select == Direction::forward ? "forward" : "backward") : "none");
  line("strict-hash", strict_hash ? "true" : "false");
  return text;
}

StageResult run_stage(Stage stage, const PipelineConfig& config) {
  config.validate(stage);
  Writer w(config.out);
  try {
    w.put(fmt::format("config_{}.ini", to_string(stage)), fmt::format("# stage = {}\n", to_string(stage)) + config.to_ini());
    run_into(stage, config, w);
  } catch (...) {
    w.rollback();
    throw;
  }
  return StageResult{w.written()};
}

}  // namespace devmine
