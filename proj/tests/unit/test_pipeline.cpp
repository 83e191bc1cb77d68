#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "devmine/error.hpp"
#include "devmine/pipeline.hpp"

using namespace devmine;
namespace fs = std::filesystem;

namespace {

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() /
           ("devmine_pipeline_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "scenario.json") << R"({"practices": [{"name": "AR", "teams": 8}, {"name": "MR", "teams": 8}]})";
  }
  void TearDown() override { fs::remove_all(root); }

  PipelineConfig synth_config(const fs::path& out) const {
    PipelineConfig c;
    c.out = out;
    c.seed = 5;
    c.scenario = root / "scenario.json";
    return c;
  }

  fs::path root;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST(PipelineTags, ParseAndRender) {
  EXPECT_EQ(parse_stage("correlate"), Stage::correlate);
  EXPECT_EQ(to_string(Stage::pipeline), "pipeline");
  EXPECT_THROW(parse_stage("deploy"), ConfigError);
  EXPECT_EQ(parse_target("vg_level"), Target::vg_level);
  EXPECT_THROW(parse_target("mood"), ConfigError);
}

TEST_F(PipelineTest, SynthWritesItsArtifacts) {
  const auto r = run_stage(Stage::synth, synth_config(root / "data"));
  for (const char* name : {"events.jsonl", "products.csv", "labels.csv", "truth.csv", "scenario.json", "config_synth.ini"})
    EXPECT_TRUE(fs::exists(root / "data" / name)) << name;
  EXPECT_FALSE(r.artifacts.empty());
}

TEST_F(PipelineTest, StochasticStagesRequireASeed) {
  auto c = synth_config(root / "data");
  c.seed.reset();
  EXPECT_THROW(run_stage(Stage::synth, c), ConfigError);
  EXPECT_FALSE(fs::exists(root / "data" / "events.jsonl"));
}

TEST_F(PipelineTest, MissingInputWritesNothing) {
  PipelineConfig c;
  c.inputs = {root / "absent.jsonl"};
  c.out = root / "out";
  EXPECT_THROW(run_stage(Stage::ingest, c), InputError);
  EXPECT_TRUE(!fs::exists(c.out) || fs::is_empty(c.out));
}

TEST_F(PipelineTest, OutOfRangeConfigIsRejected) {
  PipelineConfig c;
  c.inputs = {root / "scenario.json"};
  c.out = root / "out";
  c.level = 7;
  EXPECT_THROW(run_stage(Stage::discover, c), ConfigError);
  c.level = 2;
  c.filter_paths = 0.0;
  EXPECT_THROW(run_stage(Stage::discover, c), ConfigError);
}

TEST_F(PipelineTest, FailedStageRollsBackItsFiles) {
  run_stage(Stage::synth, synth_config(root / "data"));
  PipelineConfig c;
  c.inputs = {root / "data"};
  c.out = root / "out";
  c.seed = 1;
  c.folds = 12;  // more folds than rows of either class
  EXPECT_THROW(run_stage(Stage::pipeline, c), DataError);
  EXPECT_TRUE(!fs::exists(c.out) || fs::is_empty(c.out));
}

TEST_F(PipelineTest, FullRunIsByteIdentical) {
  run_stage(Stage::synth, synth_config(root / "data"));
  auto run = [&](const fs::path& out) {
    PipelineConfig c;
    c.inputs = {root / "data"};
    c.out = out;
    c.seed = 3;
    c.folds = 4;
    c.repeats = 3;
    c.filter_activities = 0.5;
    c.filter_paths = 0.5;
    return run_stage(Stage::pipeline, c);
  };
  const auto a = run(root / "a");
  const auto b = run(root / "b");
  EXPECT_EQ(a.artifacts, b.artifacts);
  auto ta = tree_contents(root / "a");
  auto tb = tree_contents(root / "b");
  // the config echo names the output directory
  for (auto* t : {&ta, &tb})
    for (auto it = t->begin(); it != t->end();)
      it = it->first.rfind("config_", 0) == 0 ? t->erase(it) : std::next(it);
  EXPECT_EQ(ta, tb);

  for (const char* name : {"events.jsonl", "ingest_report.txt", "model/process_L2.dot", "model/process_L2_filtered.dot",
                           "process_metrics.csv", "deltas.csv", "features.csv", "levels.csv", "correlation_vg.csv",
                           "train_practice/eval.csv", "train_practice/model.json", "train_practice/importance.csv",
                           "summary.md"})
    EXPECT_TRUE(ta.count(name)) << name;
  EXPECT_NE(ta["summary.md"].find("Mean PCC"), std::string::npos);
  EXPECT_LT(ta["model/process_L2_filtered.dot"].size(), ta["model/process_L2.dot"].size());
}

TEST_F(PipelineTest, StagesChainThroughTheOutputDirectory) {
  run_stage(Stage::synth, synth_config(root / "data"));
  PipelineConfig c;
  c.inputs = {root / "data"};
  c.out = root / "out";
  c.seed = 2;
  run_stage(Stage::ingest, c);
  run_stage(Stage::metrics, c);
  c.inputs = {c.out};
  run_stage(Stage::partition, c);
  EXPECT_TRUE(fs::exists(c.out / "levels.csv"));
  const auto text = slurp(c.out / "levels.csv");
  EXPECT_EQ(text.rfind("team,PCC,PCC_LEVEL", 0), 0u);
  EXPECT_TRUE(fs::exists(c.out / "config_partition.ini"));
  EXPECT_NE(slurp(c.out / "config_partition.ini").find("stage = partition"), std::string::npos);
}
