#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "mine/data/synthetic.hpp"
#include "mine/matcher/dual_encoder.hpp"
#include "mine/model/mine_model.hpp"

namespace mine::pipeline {

inline constexpr int kPipelineFormatVersion = 1;

// The generator's defaults with 600 reviews: enough weakly labeled pairs for
// the generator to learn from.
inline data::SyntheticSpec default_synthetic() {
  data::SyntheticSpec s;
  s.num_reviews = 600;
  return s;
}

struct CorpusConfig {
  // Existing corpus directory (corpus.jsonl, optional gold.jsonl, images
  // relative to it). Empty: synth generates one from `synthetic`.
  std::string path;
  data::SyntheticSpec synthetic = default_synthetic();
  double test_fraction = 0.25;
};

struct ExtractConfig {
  std::string lexicon;       // empty: shipped lexicon
  std::string conjunctions;  // empty: shipped conjunctions
  // host:port/path of an external sentiment classifier; empty: lexicon
  std::string sentiment_url;
};

struct MatcherConfig {
  matcher::DualEncoderConfig model;
  // Stand-in for pretrained weights: a contrastive pass over (image, review
  // text) pairs of a separate synthetic corpus.
  std::size_t pretrain_reviews = 2000;
  std::uint64_t pretrain_seed = 1007;  // seed + 1000
  matcher::FinetuneConfig pretrain{2000, 32, 3e-3, 1e-5, 0.05, 7};
  matcher::FinetuneConfig finetune{300, 32, 5e-4, 1e-5, 0.05, 7};
  double link_threshold = 0.9;  // verbatim clustering
  // Matcher whose scores label the training pairs: "base" or "finetuned".
  std::string label_with = "finetuned";
};

struct AnnotationConfig {
  std::size_t k = 8;  // per-cluster sample budget
  std::size_t annotators = 2;
  double error_rate = 0.05;
};

struct CalibrationConfig {
  double grid_lo = -0.2, grid_hi = 0.9, grid_step = 0.01;
  std::string policy = "precision_floor:0.9";
  // Used when the configured policy cannot be met; an explicit --policy
  // on the command line disables it.
  std::string fallback = "max_f1";
};

struct MineStageConfig {
  model::MineConfig model;
  model::TrainConfig train{40, 8, 1e-3, 1e-5, 0.05, 7};
};

struct DecodeStageConfig {
  std::string method = "beam";
  std::size_t beam_size = 10;
  std::size_t top_k = 50;
  double top_p = 0.95;
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  std::string workdir = "work";
  CorpusConfig corpus;
  ExtractConfig extract;
  MatcherConfig matcher;
  AnnotationConfig annotation;
  CalibrationConfig calibration;
  std::string prompt_kind = "mse";
  MineStageConfig mine;
  DecodeStageConfig decode;
  std::string eval_policy = "exact";

  nlohmann::json to_json() const;
  // Keys missing from j keep their defaults; unknown keys are a ParseError.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  // Checks cross-field constraints; ContractError on the first violation.
  void validate() const;
  // SHA-256 of the canonical JSON dump (workdir excluded, so a run moved
  // elsewhere keeps its hash).
  std::string hash() const;
  // Propagates the master seed into every stage seed.
  void set_seed(std::uint64_t s);
};

}  // namespace mine::pipeline
