#include "mine/pipeline/pipeline.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mine/core/error.hpp"
#include "mine/data/corpus.hpp"
#include "support/tempdir.hpp"

using namespace mine;
using namespace mine::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Small enough for every stage to finish in seconds.
json tiny_patch(std::size_t reviews = 40) {
  return {{"corpus", {{"synthetic", {{"num_reviews", reviews}}}}},
          {"matcher",
           {{"pretrain_reviews", 40},
            {"pretrain", {{"steps", 30}, {"batch_size", 8}}},
            {"finetune", {{"steps", 10}, {"batch_size", 8}}},
            {"model", {{"image_layers", 0}, {"embed_dim", 16}}}}},
          {"annotation", {{"k", 4}}},
          {"mine",
           {{"model", {{"d_model", 16}, {"n_heads", 2}, {"n_layers", 1}, {"ffn_hidden", 32}}},
            {"train", {{"epochs", 1}}}}},
          {"decode", {{"method", "greedy"}}}};
}

PipelineConfig tiny_config(std::size_t reviews = 40) { return PipelineConfig::from_json(tiny_patch(reviews)); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Cli {
  int code;
  std::string out, err;
};

Cli run_cli(const TempDir& dir, const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" MINE_CLI_PATH "' -q " + args + " >'" + (dir / "stdout").string() + "' 2>'" +
                          (dir / "stderr").string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(dir / "stdout"), slurp(dir / "stderr")};
}

}  // namespace

TEST(Config, RoundTripAndHash) {
  PipelineConfig c = tiny_config();
  const json j = c.to_json();
  EXPECT_EQ(PipelineConfig::from_json(j).to_json(), j);

  PipelineConfig moved = c;
  moved.workdir = "/elsewhere";
  EXPECT_EQ(moved.hash(), c.hash());
  PipelineConfig reseeded = c;
  reseeded.set_seed(8);
  EXPECT_NE(reseeded.hash(), c.hash());
  EXPECT_EQ(reseeded.corpus.synthetic.seed, 8u);
  EXPECT_EQ(reseeded.matcher.pretrain_seed, 1008u);
  EXPECT_EQ(reseeded.matcher.finetune.seed, 8u);
  EXPECT_EQ(reseeded.mine.train.seed, 8u);

  // A seed given in the file reaches every stage default.
  const PipelineConfig seeded = PipelineConfig::from_json({{"seed", 11}});
  EXPECT_EQ(seeded.corpus.synthetic.seed, 11u);
  EXPECT_EQ(seeded.mine.train.seed, 11u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  try {
    PipelineConfig::from_json({{"corpus", {{"bogus", 1}}}});
    FAIL() << "unknown key accepted";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("corpus.bogus"), std::string::npos);
  }
  EXPECT_THROW(PipelineConfig::from_json({{"calibration", {{"policy", "best"}}}}).validate(), std::exception);
  EXPECT_THROW(PipelineConfig::from_json({{"prompt_kind", "xyz"}}).validate(), std::exception);
  EXPECT_THROW(PipelineConfig::from_json({{"corpus", {{"test_fraction", 1.5}}}}).validate(), std::exception);
  EXPECT_THROW(PipelineConfig::from_json({{"decode", {{"method", "sampling"}}}}).validate(), std::exception);
  EXPECT_NO_THROW(PipelineConfig{}.validate());
}

TEST(Pipeline, EmptyCorpusYieldsEmptyArtifacts) {
  TempDir dir;
  Pipeline p(tiny_config(0), dir.path());
  for (const char* stage : {"synth", "extract", "pretrain-matcher", "pair", "score"}) {
    SCOPED_TRACE(stage);
    EXPECT_NO_THROW(p.run_stage(stage));
  }
  EXPECT_TRUE(data::load_verbatims(dir / "verbatims.jsonl").empty());
  EXPECT_TRUE(data::load_pairs(dir / "pairs.jsonl").empty());
  EXPECT_TRUE(data::load_pairs(dir / "scored_pairs.base.jsonl").empty());
  EXPECT_TRUE(fs::exists(dir / "manifests" / "score.base.manifest.json"));
}

TEST(Pipeline, StageOrderIsEnforcedByInputs) {
  TempDir dir;
  Pipeline p(tiny_config(), dir.path());
  EXPECT_THROW(p.run_stage("extract"), std::exception);
  EXPECT_THROW(p.run_stage("no-such-stage"), ContractError);
}

// One in-process run and one through the CLI from the same config: every
// manifest (paths, hashes, summaries) must match byte for byte.
TEST(Pipeline, RunsAreReproducibleAcrossProcesses) {
  TempDir a, b;
  Pipeline p(tiny_config(), a.path());
  const json report = p.run_all();
  EXPECT_TRUE(report.contains("model"));
  EXPECT_TRUE(report.contains("random_baseline"));
  for (const char* f : {"split.json", "verbatims.jsonl", "pairs.jsonl", "sample.json", "annotations.jsonl",
                        "threshold.base.json", "threshold.finetuned.json", "train_pairs.jsonl", "predictions.jsonl",
                        "eval_report.json", "eval.csv", "curves/base.csv", "curves/finetuned.csv"})
    EXPECT_TRUE(fs::exists(a / f)) << f;

  {
    std::ofstream cfg(b / "tiny.json");
    cfg << tiny_patch().dump();
  }
  const Cli cli = run_cli(b, "--config '" + (b / "tiny.json").string() + "' --workdir '" + (b / "w").string() + "' run");
  ASSERT_EQ(cli.code, 0) << cli.err;
  EXPECT_EQ(json::parse(cli.out), report);

  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a / "manifests")) {
    const fs::path other = b / "w" / "manifests" / e.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path().filename();
    ++compared;
  }
  EXPECT_EQ(compared, 17u);

  // An unattainable explicit policy is an error, not a silent fallback.
  const Cli strict = run_cli(b, "--workdir '" + (b / "w").string() + "' --policy precision_floor:1.01 calibrate");
  EXPECT_EQ(strict.code, 3);
  const json err = json::parse(strict.err);
  EXPECT_EQ(err["error"]["type"], "contract");
  EXPECT_NE(err["error"]["message"].get<std::string>().find("max precision"), std::string::npos);

  // A fixed threshold overrides the calibrated one for build-train.
  const Cli fixed = run_cli(b, "--config '" + (b / "tiny.json").string() + "' --workdir '" + (b / "w").string() +
                                   "' --threshold 0.99 build-train");
  ASSERT_EQ(fixed.code, 0) << fixed.err;
  for (const auto& pr : data::load_pairs(b / "w" / "labeled_pairs.jsonl"))
    EXPECT_EQ(pr.label == data::PairLabel::kPositive, pr.score >= 0.99);
}

TEST(Cli, EnvironmentAndErrors) {
  TempDir dir;
  const std::string work = (dir / "w").string();
  {
    std::ofstream cfg(dir / "tiny.json");
    cfg << tiny_patch(6).dump();
  }
  const Cli synth = run_cli(dir, "--config '" + (dir / "tiny.json").string() + "' synth",
                            "MINE_SEED=13 MINE_WORKDIR='" + work + "'");
  ASSERT_EQ(synth.code, 0) << synth.err;
  EXPECT_EQ(json::parse(synth.out)["seed"], 13);
  EXPECT_EQ(read_json(fs::path(work) / "config.json")["corpus"]["synthetic"]["seed"], 13);

  // The flag wins over the environment.
  const Cli flag = run_cli(dir, "--seed 5 synth", "MINE_SEED=13 MINE_WORKDIR='" + work + "'");
  ASSERT_EQ(flag.code, 0) << flag.err;
  EXPECT_EQ(json::parse(flag.out)["seed"], 5);

  const Cli usage = run_cli(dir, "--workdir '" + work + "' frobnicate");
  EXPECT_EQ(usage.code, 2);

  const Cli bad_name = run_cli(dir, "--workdir '" + work + "' --decode sampling synth");
  EXPECT_EQ(bad_name.code, 4);
  EXPECT_EQ(json::parse(bad_name.err)["error"]["type"], "parse");

  const Cli bad_range = run_cli(dir, "--workdir '" + work + "' --decode nucleus --top-p 1.5 synth");
  EXPECT_EQ(bad_range.code, 3);
  EXPECT_EQ(json::parse(bad_range.err)["error"]["type"], "contract");

  const Cli stale = run_cli(dir, "--workdir '" + work + "' --matcher other score");
  EXPECT_NE(stale.code, 0);
  EXPECT_TRUE(json::parse(stale.err).contains("error"));
}
