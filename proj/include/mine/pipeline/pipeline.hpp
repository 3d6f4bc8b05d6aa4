#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mine/calibration/calibration.hpp"
#include "mine/data/corpus.hpp"
#include "mine/pipeline/config.hpp"

// Stage-by-stage orchestration over a single working directory. Every stage
// reads its inputs from the workdir, writes its artifacts there and records
// manifests/<stage>.manifest.json with the config hash, the seed and the
// SHA-256 of every input and output file.
//
// Workdir layout:
//   corpus/          corpus.jsonl, gold.jsonl, images/ (synth only)
//   split.json       train/test review ids
//   verbatims.jsonl
//   matcher/base, matcher/finetuned
//   pairs.jsonl      candidate (verbatim, image) pairs of the train split
//   scored_pairs.<m>.jsonl, clusters.json, sample.json, annotations.jsonl
//   curve.<m>.csv|json, threshold.<m>.json
//   labeled_pairs.jsonl, train_pairs.jsonl
//   mine/, mine_trace.json
//   predictions.jsonl, eval_report.json, eval.csv, curves/
namespace mine::pipeline {

// Overrides taken from the command line for a single invocation.
struct RunOptions {
  std::optional<double> threshold;   // build-train: label at this threshold
  std::optional<std::string> policy;  // calibrate: no fallback when set
  std::string matcher;               // score/calibrate: "base" or "finetuned"
  std::function<void(const std::string&)> log;
};

const std::vector<std::string>& stage_names();

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path workdir, RunOptions options = {});

  // Runs one stage by CLI name and returns its manifest. Unknown names are a
  // ContractError.
  nlohmann::json run_stage(const std::string& name);
  // Every stage in order, including the second scoring/calibration round
  // with the fine-tuned matcher. Returns the eval report.
  nlohmann::json run_all();

  nlohmann::json synth();
  nlohmann::json extract();
  nlohmann::json pretrain_matcher();
  nlohmann::json pair();
  nlohmann::json score(const std::string& matcher);
  nlohmann::json cluster();
  nlohmann::json stratify();
  nlohmann::json simulate_annotators();
  nlohmann::json calibrate(const std::string& matcher);
  nlohmann::json finetune_matcher();
  nlohmann::json build_train();
  nlohmann::json train_mine();
  nlohmann::json infer();
  nlohmann::json eval();
  nlohmann::json curves();

  const PipelineConfig& config() const { return config_; }
  const std::filesystem::path& workdir() const { return workdir_; }
  std::filesystem::path corpus_dir() const;
  std::filesystem::path path(const std::string& relative) const { return workdir_ / relative; }

 private:
  void log(const std::string& message) const;
  nlohmann::json finish(const std::string& stage, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs, nlohmann::json summary) const;
  std::string resolve_matcher(const std::string& matcher) const;

  PipelineConfig config_;
  std::filesystem::path workdir_;
  RunOptions options_;
};

// Scores of the pairs whose annotations resolve to a label. Pairs with an
// image error are skipped.
std::vector<calibration::LabeledScore> resolved_scores(const std::vector<data::PairRecord>& pairs,
                                                       const std::vector<calibration::AnnotationRecord>& log);

// Writes j with a trailing newline; the parent directory is created.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace mine::pipeline
