#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "devmine/error.hpp"
#include "devmine/pipeline.hpp"

namespace {

int fail(std::string_view code, std::string_view message, int status) {
  fmt::print(stderr, "error code={}: {}\n", code, message);
  return status;
}

int exit_status(devmine::ErrorCode code) { return code == devmine::ErrorCode::data ? 1 : 2; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mine process models and metrics from IDE event logs and classify refactoring practice."};
  app.name("devmine");
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI file; flags given on the command line win");

  std::vector<std::string> inputs;
  std::string out = "out", products, labels, catalog, scenario;
  std::string features = "standard", family = "forest", target = "practice", p_method = "auto", select = "none";
  std::uint64_t seed = 0;
  bool no_grid = false;
  devmine::PipelineConfig cfg;

  app.add_option("--input", inputs, "Event files (JSON lines or .csv) or a directory of earlier artifacts");
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--products", products, "Product metric snapshots CSV (team, moment, 23 metrics)");
  app.add_option("--labels", labels, "team,practice CSV");
  app.add_option("--catalog", catalog, "Command catalog, one Category/Command label per line");
  app.add_option("--scenario", scenario, "Synthetic scenario JSON (synth only)");
  app.add_option("--level", cfg.level, "Discovery level: 0 file, 1 category, 2 command")->capture_default_str();
  app.add_option("--filter-activities", cfg.filter_activities, "Fraction of most frequent activities kept in DOT output")
      ->capture_default_str();
  app.add_option("--filter-paths", cfg.filter_paths, "Fraction of most frequent arcs kept in DOT output")
      ->capture_default_str();
  app.add_option("--k", cfg.k, "Levels for the VG reduction partition")->capture_default_str();
  app.add_option("--pcc-k", cfg.pcc_k, "Levels for the PCC partition")->capture_default_str();
  app.add_option("--k-max", cfg.k_max, "Largest k in the elbow and silhouette sweep")->capture_default_str();
  app.add_option("--alpha", cfg.alpha, "Significance level for correlations")->capture_default_str();
  app.add_option("--p-method", p_method, "Spearman p-value: exact, t or auto")->capture_default_str();
  app.add_option("--folds", cfg.folds, "Cross-validation folds")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Master seed; required by partition, train, synth and pipeline");
  app.add_option("--features", features, "standard or extended")->capture_default_str();
  app.add_option("--family", family, "tree, forest, bagging, logistic or knn")->capture_default_str();
  app.add_option("--target", target, "practice, vg_level or pcc_level")->capture_default_str();
  app.add_flag("--no-grid", no_grid, "Train the family's default spec instead of searching its grid");
  app.add_option("--repeats", cfg.repeats, "Permutation-importance shuffles per feature")->capture_default_str();
  app.add_option("--select", select, "Greedy feature selection: none, forward or backward")->capture_default_str();
  app.add_flag("--strict-hash", cfg.strict_hash, "Reject events whose hash does not verify");

  const std::vector<std::pair<const char*, const char*>> stages = {
      {"ingest", "Parse, verify and deduplicate events into events.jsonl"},
      {"discover", "Discover transition systems and export DOT/JSON models"},
      {"metrics", "Compute per-team process metrics, command counts, deltas and the feature table"},
      {"partition", "Cluster PCC and VG reduction into ordinal levels"},
      {"correlate", "Spearman correlations between metrics and VG reduction"},
      {"train", "Grid search, cross-validate and fit a classifier"},
      {"synth", "Generate a synthetic AR/MR scenario"},
      {"report", "Summarise the artifacts of earlier stages"},
      {"pipeline", "Run ingest through report in one go"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("config", e.what(), 2);
  }

  try {
    const auto stage = devmine::parse_stage(app.get_subcommands().front()->get_name());
    for (const auto& in : inputs) cfg.inputs.emplace_back(in);
    cfg.out = out;
    if (!products.empty()) cfg.products = products;
    if (!labels.empty()) cfg.labels = labels;
    if (!catalog.empty()) cfg.catalog = catalog;
    if (!scenario.empty()) cfg.scenario = scenario;
    if (seed_opt->count() > 0) cfg.seed = seed;
    cfg.features = devmine::parse_feature_set(features);
    cfg.family = devmine::parse_family(family);
    cfg.target = devmine::parse_target(target);
    cfg.p_method = devmine::parse_p_value_method(p_method);
    cfg.grid = !no_grid;
    if (select != "none") cfg.select = devmine::parse_direction(select);

    const auto result = devmine::run_stage(stage, cfg);
    for (const auto& a : result.artifacts) fmt::print("{}\n", (cfg.out / a).generic_string());
    return 0;
  } catch (const devmine::Error& e) {
    return fail(devmine::to_string(e.code()), e.what(), exit_status(e.code()));
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
}
