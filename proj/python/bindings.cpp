#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "devmine/discovery.hpp"
#include "devmine/error.hpp"
#include "devmine/eventlog.hpp"
#include "devmine/learn.hpp"
#include "devmine/metrics.hpp"
#include "devmine/pipeline.hpp"
#include "devmine/stats.hpp"
#include "devmine/synth.hpp"

namespace py = pybind11;
using namespace devmine;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix m(0, rows.empty() ? 0 : rows.front().size());
  for (const auto& r : rows) {
    if (r.size() != m.cols()) throw ConfigError("ragged matrix");
    m.push_row(r);
  }
  return m;
}

std::vector<std::vector<double>> from_matrix(const Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

py::dict class_metrics(const ClassMetrics& c) {
  py::dict d;
  d["name"] = c.name;
  d["support"] = c.support;
  d["tp_rate"] = c.tp_rate;
  d["fp_rate"] = c.fp_rate;
  d["precision"] = c.precision;
  d["recall"] = c.recall;
  d["f_measure"] = c.f_measure;
  d["mcc"] = c.mcc;
  d["roc_auc"] = c.roc_auc;
  d["prc_auc"] = c.prc_auc;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  py::list classes;
  for (const auto& c : r.classes) classes.append(class_metrics(c));
  d["classes"] = classes;
  d["weighted"] = class_metrics(r.weighted);
  d["accuracy"] = r.accuracy;
  d["confusion"] = from_matrix(r.confusion);
  d["csv"] = r.to_csv();
  return d;
}

ClassifierSpec make_spec(const std::string& family, py::kwargs kw) {
  ClassifierSpec s;
  s.family = parse_family(family);
  if (kw.contains("trees")) s.trees = kw["trees"].cast<int>();
  if (kw.contains("features_per_split")) s.features_per_split = kw["features_per_split"].cast<int>();
  if (kw.contains("max_depth")) s.max_depth = kw["max_depth"].cast<int>();
  if (kw.contains("min_leaf")) s.min_leaf = kw["min_leaf"].cast<int>();
  if (kw.contains("bootstrap")) s.bootstrap = kw["bootstrap"].cast<bool>();
  if (kw.contains("ridge")) s.ridge = kw["ridge"].cast<double>();
  if (kw.contains("neighbours")) s.neighbours = kw["neighbours"].cast<int>();
  s.validate();
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Process mining and refactoring-practice analysis over IDE event logs";

  auto base = py::register_exception<Error>(m, "DevmineError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<SchemaError>(m, "SchemaError", base);
  py::register_exception<DataError>(m, "DataError", base);

  // ---- eventlog
  py::class_<RawEvent>(m, "RawEvent")
      .def("field", [](const RawEvent& e, const std::string& name) { return field_value(e, name); })
      .def_readwrite("team", &RawEvent::team)
      .def_readwrite("session", &RawEvent::session)
      .def_readwrite("username", &RawEvent::username)
      .def_readwrite("filename", &RawEvent::filename)
      .def_readwrite("category_name", &RawEvent::category_name)
      .def_readwrite("command_name", &RawEvent::command_name)
      .def_readwrite("hash", &RawEvent::hash)
      .def("__repr__", [](const RawEvent& e) {
        return "<RawEvent " + e.team + "/" + e.session + " " + e.category_name + "/" + e.command_name + ">";
      });

  m.def(
      "parse_events",
      [](const std::string& text, const std::string& format) {
        auto r = parse_events(text, parse_event_format(format));
        py::dict report, reasons;
        report["parsed"] = r.report.parsed;
        report["accepted"] = r.report.accepted;
        report["rejected"] = r.report.rejected;
        report["duplicates_removed"] = r.report.duplicates_removed;
        report["hash_failures"] = r.report.hash_failures;
        for (const auto& [k, v] : r.report.rejection_reasons) reasons[py::str(k)] = v;
        report["rejection_reasons"] = reasons;
        return py::make_tuple(r.events, report);
      },
      py::arg("text"), py::arg("format") = "json-lines");
  m.def("verify_event_hash", [](const RawEvent& e) { return verify_event_hash(e); });
  m.def("compute_event_hash", [](const RawEvent& e) { return compute_event_hash(e); });
  m.def("deduplicate", &deduplicate);
  m.def("events_to_json_lines", &events_to_json_lines);

  py::class_<EventLog>(m, "EventLog")
      .def_property_readonly("event_count", &EventLog::event_count)
      .def_property_readonly("case_ids",
                             [](const EventLog& log) {
                               std::vector<std::string> ids;
                               for (const auto& t : log.traces) ids.push_back(t.case_id);
                               return ids;
                             })
      .def("trace_labels",
           [](const EventLog& log, const std::string& case_id, int level) {
             for (const auto& t : log.traces) {
               if (t.case_id != case_id) continue;
               std::vector<std::string> out;
               for (const auto& e : t.events) out.push_back(e.label(level));
               return out;
             }
             throw ConfigError("unknown case " + case_id);
           })
      .def("teams", [](const EventLog& log) { return log_teams(log); })
      .def("team", [](const EventLog& log, const std::string& team) { return team_log(log, team); });
  m.def("build_log", &build_log);

  // ---- discovery and metrics
  py::class_<TransitionSystem>(m, "TransitionSystem")
      .def_readonly("level", &TransitionSystem::level)
      .def_property_readonly("nodes",
                             [](const TransitionSystem& ts) {
                               std::vector<std::pair<std::string, std::uint64_t>> out;
                               for (const auto& n : ts.nodes) out.emplace_back(n.label, n.frequency);
                               return out;
                             })
      .def_property_readonly("arcs",
                             [](const TransitionSystem& ts) {
                               std::vector<std::tuple<std::string, std::string, std::uint64_t>> out;
                               for (const auto& a : ts.arcs)
                                 out.emplace_back(ts.nodes[a.from].label, ts.nodes[a.to].label, a.frequency);
                               return out;
                             })
      .def("arc_frequency", &TransitionSystem::arc_frequency);

  py::class_<ProcessModel>(m, "ProcessModel")
      .def_readonly("max_level", &ProcessModel::max_level)
      .def_readonly("source_digest", &ProcessModel::source_digest)
      .def("level", [](const ProcessModel& pm, int level) { return flatten_level(pm, level); }, py::arg("level"));

  m.def("discover_model", &discover_model, py::arg("log"), py::arg("max_level") = kMaxLevel);
  m.def("directly_follows", &directly_follows, py::arg("log"), py::arg("level"));
  m.def("filter_model", &filter_model, py::arg("ts"), py::arg("activity_fraction"), py::arg("path_fraction"));
  m.def(
      "export_dot", [](const TransitionSystem& ts, bool frequencies, const std::string& name) {
        return export_dot(ts, frequencies ? DotOverlay::absolute_frequency : DotOverlay::none, name);
      },
      py::arg("ts"), py::arg("frequencies") = true, py::arg("name") = "process");
  m.def("compute_pcc", &compute_pcc);
  m.def("process_metrics", [](const EventLog& log, const ProcessModel& model) {
    const auto rec = compute_process_metrics(log, model);
    const auto values = rec.values();
    py::dict d;
    for (std::size_t i = 0; i < values.size(); ++i) d[py::str(process_metric_names()[i])] = values[i];
    return d;
  });

  // ---- stats
  m.def("spearman_rho", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman_rho(x, y); });
  m.def(
      "spearman",
      [](const std::vector<double>& x, const std::vector<double>& y, double alpha, const std::string& method) {
        const auto r = spearman(x, y, alpha, parse_p_value_method(method));
        py::dict d;
        d["rho"] = r.rho;
        d["p_value"] = r.p_value;
        d["n"] = r.n;
        d["significant"] = r.significant;
        d["finite_sample_warning"] = r.finite_sample_warning;
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("alpha") = 0.05, py::arg("method") = "auto");
  m.def(
      "spearman_p_value",
      [](double rho, std::size_t n, const std::string& method) {
        return spearman_p_value(rho, n, parse_p_value_method(method)).value;
      },
      py::arg("rho"), py::arg("n"), py::arg("method") = "auto");
  m.def(
      "kmeans",
      [](const std::vector<std::vector<double>>& points, int k, std::uint64_t seed, int restarts) {
        const auto c = kmeans_best_of(to_matrix(points), k, seed, restarts);
        py::dict d;
        d["assignment"] = c.assignment;
        d["centroids"] = from_matrix(c.centroids);
        d["distortion"] = c.distortion;
        return d;
      },
      py::arg("points"), py::arg("k"), py::arg("seed"), py::arg("restarts") = 10);
  m.def("silhouette", [](const std::vector<std::vector<double>>& points, const std::vector<int>& assignment) {
    return silhouette_score(to_matrix(points), assignment).mean;
  });
  m.def("elbow_k", [](const std::vector<std::vector<double>>& points, const std::vector<int>& ks, std::uint64_t seed) {
    return elbow_select(to_matrix(points), ks, seed).chosen_k;
  });
  m.def(
      "level_partition",
      [](const std::vector<double>& values, int k, std::vector<std::string> labels, std::uint64_t seed) {
        if (labels.empty()) labels = default_level_labels(k);
        const auto p = level_partition(values, k, labels, seed);
        std::vector<std::string> assigned;
        for (double v : values) assigned.push_back(p.label_of(v));
        py::dict d;
        d["labels"] = p.labels;
        d["upper_edges"] = p.upper_edges;
        d["centroids"] = p.centroids;
        d["assigned"] = assigned;
        return d;
      },
      py::arg("values"), py::arg("k"), py::arg("labels") = std::vector<std::string>{}, py::arg("seed") = 0);

  // ---- learn
  m.def("roc_auc", [](const std::vector<double>& scores, const std::vector<int>& labels, int positive) {
    return roc_auc(scores, labels, positive);
  });
  m.def("evaluate", [](const std::vector<std::vector<double>>& proba, const std::vector<int>& labels,
                       const std::vector<std::string>& classes) {
    return report_dict(evaluate(to_matrix(proba), labels, classes));
  });

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_readonly("feature_names", &TrainedModel::feature_names)
      .def_readonly("class_names", &TrainedModel::class_names)
      .def_property_readonly("spec", [](const TrainedModel& t) { return t.spec.describe(); })
      .def("predict_proba",
           [](const TrainedModel& t, const std::vector<std::vector<double>>& X) {
             return from_matrix(t.predict_proba(to_matrix(X)));
           })
      .def("predict",
           [](const TrainedModel& t, const std::vector<std::vector<double>>& X) {
             std::vector<std::string> out;
             for (int c : t.predict(to_matrix(X))) out.push_back(t.class_names[c]);
             return out;
           })
      .def("to_json", &TrainedModel::to_json)
      .def_static("from_json", [](const std::string& text) { return TrainedModel::from_json(text); });

  m.def(
      "train",
      [](const std::vector<std::string>& features, const std::vector<std::vector<double>>& X,
         const std::vector<std::string>& labels, const std::string& family, std::uint64_t seed, py::kwargs kw) {
        return train(make_spec(family, kw), Dataset::from_labels(features, to_matrix(X), labels), seed);
      },
      py::arg("features"), py::arg("X"), py::arg("labels"), py::arg("family") = "forest", py::arg("seed") = 0);
  m.def(
      "cross_validate",
      [](const std::vector<std::string>& features, const std::vector<std::vector<double>>& X,
         const std::vector<std::string>& labels, const std::string& family, int folds, std::uint64_t seed,
         py::kwargs kw) {
        const auto cv = cross_validate(make_spec(family, kw), Dataset::from_labels(features, to_matrix(X), labels), folds, seed);
        auto d = report_dict(cv.report);
        d["probabilities"] = from_matrix(cv.probabilities);
        return d;
      },
      py::arg("features"), py::arg("X"), py::arg("labels"), py::arg("family") = "forest", py::arg("folds") = 10,
      py::arg("seed") = 0);
  m.def(
      "permutation_importance",
      [](const TrainedModel& model, const std::vector<std::vector<double>>& X, const std::vector<std::string>& labels,
         int repeats, std::uint64_t seed) {
        const auto imp = permutation_importance(model, Dataset::from_labels(model.feature_names, to_matrix(X), labels),
                                                repeats, seed);
        py::dict d;
        for (std::size_t i = 0; i < imp.names.size(); ++i) d[py::str(imp.names[i])] = imp.values[i];
        return d;
      },
      py::arg("model"), py::arg("X"), py::arg("labels"), py::arg("repeats") = 10, py::arg("seed") = 0);
  m.def(
      "cv_permutation_importance",
      [](const std::vector<std::string>& features, const std::vector<std::vector<double>>& X,
         const std::vector<std::string>& labels, const std::string& family, int folds, int repeats,
         std::uint64_t seed, py::kwargs kw) {
        const auto imp = cv_permutation_importance(make_spec(family, kw),
                                                   Dataset::from_labels(features, to_matrix(X), labels), folds,
                                                   repeats, seed);
        py::dict d;
        for (std::size_t i = 0; i < imp.names.size(); ++i) d[py::str(imp.names[i])] = imp.values[i];
        return d;
      },
      py::arg("features"), py::arg("X"), py::arg("labels"), py::arg("family") = "forest", py::arg("folds") = 10,
      py::arg("repeats") = 10, py::arg("seed") = 0);

  // ---- synth and pipeline
  m.def(
      "generate",
      [](std::uint64_t seed, const std::string& config_json) {
        auto cfg = config_json.empty() ? ScenarioConfig::defaults() : ScenarioConfig::from_json(config_json);
        cfg.seed = seed;
        cfg.validate();
        const auto s = generate(cfg);
        py::dict d;
        d["events"] = s.events;
        d["events_jsonl"] = events_to_json_lines(s.events);
        d["products_csv"] = write_product_snapshots(s.snapshots);
        d["labels_csv"] = s.labels_csv();
        d["truth_csv"] = s.truth.to_csv();
        return d;
      },
      py::arg("seed") = 42, py::arg("config_json") = "");

  m.def(
      "run_stage",
      [](const std::string& stage, std::vector<std::filesystem::path> inputs, const std::filesystem::path& out,
         std::optional<std::uint64_t> seed, py::kwargs kw) {
        PipelineConfig c;
        c.inputs = std::move(inputs);
        c.out = out;
        c.seed = seed;
        if (kw.contains("products")) c.products = kw["products"].cast<std::filesystem::path>();
        if (kw.contains("labels")) c.labels = kw["labels"].cast<std::filesystem::path>();
        if (kw.contains("level")) c.level = kw["level"].cast<int>();
        if (kw.contains("filter_activities")) c.filter_activities = kw["filter_activities"].cast<double>();
        if (kw.contains("filter_paths")) c.filter_paths = kw["filter_paths"].cast<double>();
        if (kw.contains("k")) c.k = kw["k"].cast<int>();
        if (kw.contains("folds")) c.folds = kw["folds"].cast<int>();
        if (kw.contains("alpha")) c.alpha = kw["alpha"].cast<double>();
        if (kw.contains("family")) c.family = parse_family(kw["family"].cast<std::string>());
        if (kw.contains("features")) c.features = parse_feature_set(kw["features"].cast<std::string>());
        if (kw.contains("target")) c.target = parse_target(kw["target"].cast<std::string>());
        if (kw.contains("grid")) c.grid = kw["grid"].cast<bool>();
        return run_stage(parse_stage(stage), c).artifacts;
      },
      py::arg("stage"), py::arg("inputs") = std::vector<std::filesystem::path>{}, py::arg("out") = "out",
      py::arg("seed") = py::none());
}
