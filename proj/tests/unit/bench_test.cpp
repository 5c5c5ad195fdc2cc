#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rashomon/bench/pipeline.hpp"
#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"
#include "rashomon/symreg/tree.hpp"

using namespace rashomon;
using namespace rashomon::bench;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rashomon_bench_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny() {
  RunConfig c = RunConfig::parse(R"(
seed = 3
[data]
n_samples = 240
[vae]
epochs = 1
[heads]
seeds = 1
epochs = 3
scheme1_epochs = 1
[search]
warmup_epochs = 1
trials = 1
[symreg]
seeds = 1
train_rows = 100
population = 32
islands = 2
generations = 2
[attack]
triplets = 1
)");
  return c;
}

nlohmann::json manifest(const fs::path& out, const std::string& id) {
  return nlohmann::json::parse(io::read_file(out / "manifests" / (id + ".json")));
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

}  // namespace

TEST(RunConfig, CanonicalTextRoundTrips) {
  RunConfig c;
  c.seed = 99;
  c.vae.hidden = {40, 20};
  c.attack.latent_epsilons = {0.0, 0.5};
  c.symreg.gp.tournament_p = 0.75;
  const auto text = c.to_text();
  const auto back = RunConfig::parse(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.vae.hidden, (std::vector<std::size_t>{40, 20}));
  EXPECT_EQ(back.sha256(), c.sha256());
}

TEST(RunConfig, DefaultsSurviveEmptyFile) {
  EXPECT_EQ(RunConfig::parse("# nothing\n").to_text(), RunConfig{}.to_text());
}

TEST(RunConfig, UnknownKeyNamesLine) {
  try {
    RunConfig::parse("seed = 1\n[heads]\nseedz = 3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("seedz"), std::string::npos);
  }
}

TEST(RunConfig, MalformedValuesRejected) {
  EXPECT_THROW(RunConfig::parse("[heads]\nepochs = ten\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[nowhere]\nx = 1\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[attack]\nlatent_epsilons = [0, 1\n"), ConfigError);
}

TEST(RunConfig, ValidateChecksRanges) {
  RunConfig c;
  c.heads.seeds = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.attack.latent_epsilons = {0.5, 0.1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.heads.sparse_weight_decay = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(RunConfig, JobsDoNotChangeHash) {
  RunConfig a, b;
  b.jobs = 4;
  EXPECT_EQ(a.sha256(), b.sha256());
  b.seed = 2;
  EXPECT_NE(a.sha256(), b.sha256());
}

TEST(Stages, Names) {
  for (auto s : {Stage::GenData, Stage::TrainVae, Stage::TrainHead, Stage::Symreg, Stage::Attack, Stage::Analyze,
                 Stage::Report})
    EXPECT_EQ(parse_stage(stage_name(s)), s);
  EXPECT_THROW(parse_stage("train"), ConfigError);
  StageOptions o;
  o.scheme = 3;
  EXPECT_EQ(manifest_id(Stage::TrainHead, o), "train-head-3");
  o.restrict_dims = "unselected";
  EXPECT_EQ(manifest_id(Stage::Attack, o), "attack-latent-restricted");
}

TEST(Stages, GenDataIsReproducible) {
  const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  run_stage(Stage::GenData, tiny(), a);
  run_stage(Stage::GenData, tiny(), b);
  EXPECT_EQ(manifest(a, "gen-data").at("outputs"), manifest(b, "gen-data").at("outputs"));
  EXPECT_EQ(manifest(a, "gen-data").at("outputs").size(), 3u);
}

TEST(Stages, ReportWithoutHeadsNamesStage) {
  const auto out = fresh_dir("dep");
  run_stage(Stage::GenData, tiny(), out);
  run_stage(Stage::TrainVae, tiny(), out);
  try {
    run_stage(Stage::Report, tiny(), out);
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("train-head"), std::string::npos) << e.what();
  }
  EXPECT_THROW(run_stage(Stage::Symreg, tiny(), out), DependencyError);
}

TEST(Stages, ModifiedArtifactIsDetected) {
  const auto out = fresh_dir("tamper");
  run_stage(Stage::GenData, tiny(), out);
  std::ofstream(out / "data" / "factors.csv", std::ios::app) << "garbage\n";
  try {
    run_stage(Stage::TrainVae, tiny(), out);
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("gen-data"), std::string::npos) << e.what();
  }
}

TEST(Stages, ManifestRecordsInputHashes) {
  const auto out = fresh_dir("inputs");
  run_stage(Stage::GenData, tiny(), out);
  run_stage(Stage::TrainVae, tiny(), out);
  const auto m = manifest(out, "train-vae");
  EXPECT_EQ(m.at("inputs"), manifest(out, "gen-data").at("outputs"));
  EXPECT_EQ(m.at("config_sha256"), tiny().sha256());
  for (const auto& [rel, sha] : m.at("outputs").items())
    EXPECT_EQ(io::sha256_hex(io::read_file(out / rel)), sha.get<std::string>());
}

TEST(Stages, BadOptionsAreConfigErrors) {
  const auto out = fresh_dir("opts");
  StageOptions o;
  o.scheme = 5;
  EXPECT_THROW(run_stage(Stage::TrainHead, tiny(), out, o), ConfigError);
  StageOptions img;
  img.space = adv::Space::Image;
  img.restrict_dims = "0";
  EXPECT_THROW(run_stage(Stage::Attack, tiny(), out, img), ConfigError);
}

TEST(Stages, HeadSeedsIndependentOfJobs) {
  const auto a = fresh_dir("jobs_a"), b = fresh_dir("jobs_b");
  RunConfig c1 = tiny();
  c1.heads.seeds = 3;
  RunConfig c2 = c1;
  c2.jobs = 3;
  StageOptions o;
  o.scheme = 2;
  for (const auto& [dir, cfg] : {std::pair{a, c1}, std::pair{b, c2}}) {
    run_stage(Stage::GenData, cfg, dir);
    run_stage(Stage::TrainVae, cfg, dir);
    run_stage(Stage::TrainHead, cfg, dir, o);
  }
  EXPECT_EQ(manifest(a, "train-head-2").at("outputs"), manifest(b, "train-head-2").at("outputs"));
}

// One small end-to-end run with a 32-dim latent, so the dense heads have the
// reference [32,16,16,16,1] widths.
class TinyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = tiny();
    cfg_.vae.latent_dim = 32;
    out_ = fresh_dir("pipeline");
    run_all(cfg_, out_);
  }
  static RunConfig cfg_;
  static fs::path out_;
};
RunConfig TinyPipeline::cfg_;
fs::path TinyPipeline::out_;

TEST_F(TinyPipeline, ReportHasFourRowsAndReferenceSizes) {
  const auto rows = csv_rows(io::read_file(out_ / "report" / "rashomon.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0][0], "scheme");
  EXPECT_EQ(rows[1][6], "9697");
  EXPECT_EQ(rows[2][6], "8641");
  EXPECT_EQ(rows[1][4], "1040");
  EXPECT_EQ(rows[2][4], "1040");
  EXPECT_EQ(rows[4][4], "NA");
}

TEST_F(TinyPipeline, SingleSeedHasZeroSd) {
  const auto rows = csv_rows(io::read_file(out_ / "report" / "rashomon.csv"));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    EXPECT_EQ(rows[r][3], "1");
    EXPECT_EQ(rows[r][7], "0");
    EXPECT_EQ(rows[r][9], "0");
  }
}

TEST_F(TinyPipeline, SchemeFourSizeComesFromTree) {
  const Workspace ws(out_);
  const auto best = ws.best_expression(symreg::LossMode::Hinge, cfg_);
  EXPECT_EQ(best.expression_size, symreg::expression_size(best.tree));
  const auto rows = csv_rows(io::read_file(out_ / "report" / "rashomon.csv"));
  EXPECT_EQ(std::stod(rows[4][6]), static_cast<double>(best.expression_size));
  EXPECT_NE(io::read_file(out_ / "report" / "report.txt").find(best.expression), std::string::npos);
}

TEST_F(TinyPipeline, RerunGivesIdenticalReport) {
  const auto again = fresh_dir("pipeline_again");
  run_all(cfg_, again);
  for (const char* f : {"report/rashomon.csv", "report/report.txt", "attack/latent/curve.csv"})
    EXPECT_EQ(io::read_file(out_ / f), io::read_file(again / f)) << f;
}

TEST_F(TinyPipeline, SplitsArePartitions) {
  const Workspace ws(out_);
  const auto lat = ws.latent_splits(cfg_);
  const auto img = ws.image_splits(cfg_);
  EXPECT_EQ(lat.train_ids, img.train_ids);
  EXPECT_EQ(lat.test_ids, img.test_ids);
  std::vector<std::size_t> all = lat.train_ids;
  all.insert(all.end(), lat.val_ids.begin(), lat.val_ids.end());
  all.insert(all.end(), lat.test_ids.begin(), lat.test_ids.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(all.size(), cfg_.data.n_samples);
}
