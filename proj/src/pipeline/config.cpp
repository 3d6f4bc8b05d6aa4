#include "mine/pipeline/config.hpp"

#include <fstream>
#include <sstream>

#include "mine/calibration/calibration.hpp"
#include "mine/core/error.hpp"
#include "mine/core/hash.hpp"
#include "mine/decoding/decoding.hpp"
#include "mine/evaluation/evaluation.hpp"
#include "mine/prompt/codec.hpp"

namespace mine::pipeline {

using nlohmann::json;

namespace {

json synthetic_to_json(const data::SyntheticSpec& s) {
  return {{"num_reviews", s.num_reviews},
          {"num_categories", s.num_categories},
          {"seed", s.seed},
          {"image_size", s.image_size},
          {"positive_fraction", s.positive_fraction},
          {"two_image_prob", s.two_image_prob},
          {"distractor_prob", s.distractor_prob},
          {"negative_prob", s.negative_prob}};
}

data::SyntheticSpec synthetic_from_json(const json& j) {
  data::SyntheticSpec s;
  s.num_reviews = j.at("num_reviews");
  s.num_categories = j.at("num_categories");
  s.seed = j.at("seed");
  s.image_size = j.at("image_size");
  s.positive_fraction = j.at("positive_fraction");
  s.two_image_prob = j.at("two_image_prob");
  s.distractor_prob = j.at("distractor_prob");
  s.negative_prob = j.at("negative_prob");
  return s;
}

json finetune_to_json(const matcher::FinetuneConfig& c) {
  return {{"steps", c.steps}, {"batch_size", c.batch_size}, {"lr", c.lr},
          {"lr_min", c.lr_min}, {"weight_decay", c.weight_decay}, {"seed", c.seed}};
}

matcher::FinetuneConfig finetune_from_json(const json& j) {
  matcher::FinetuneConfig c;
  c.steps = j.at("steps");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.lr_min = j.at("lr_min");
  c.weight_decay = j.at("weight_decay");
  c.seed = j.at("seed");
  return c;
}

json train_to_json(const model::TrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr},
          {"lr_min", c.lr_min}, {"weight_decay", c.weight_decay}, {"seed", c.seed}};
}

model::TrainConfig train_from_json(const json& j) {
  model::TrainConfig c;
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.lr = j.at("lr");
  c.lr_min = j.at("lr_min");
  c.weight_decay = j.at("weight_decay");
  c.seed = j.at("seed");
  return c;
}

// Every key of `given` must exist in `known` (objects compared recursively).
void reject_unknown(const json& given, const json& known, const std::string& prefix) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!known.contains(key)) throw ParseError("unknown config key '" + path + "'");
    if (value.is_object()) reject_unknown(value, known.at(key), path);
  }
}

}  // namespace

json PipelineConfig::to_json() const {
  return {
      {"format_version", kPipelineFormatVersion},
      {"seed", seed},
      {"workdir", workdir},
      {"corpus", {{"path", corpus.path},
                  {"synthetic", synthetic_to_json(corpus.synthetic)},
                  {"test_fraction", corpus.test_fraction}}},
      {"extract", {{"lexicon", extract.lexicon},
                   {"conjunctions", extract.conjunctions},
                   {"sentiment_url", extract.sentiment_url}}},
      {"matcher", {{"model", matcher.model.to_json()},
                   {"pretrain_reviews", matcher.pretrain_reviews},
                   {"pretrain_seed", matcher.pretrain_seed},
                   {"pretrain", finetune_to_json(matcher.pretrain)},
                   {"finetune", finetune_to_json(matcher.finetune)},
                   {"link_threshold", matcher.link_threshold},
                   {"label_with", matcher.label_with}}},
      {"annotation", {{"k", annotation.k},
                      {"annotators", annotation.annotators},
                      {"error_rate", annotation.error_rate}}},
      {"calibration", {{"grid", {calibration.grid_lo, calibration.grid_hi, calibration.grid_step}},
                       {"policy", calibration.policy},
                       {"fallback", calibration.fallback}}},
      {"prompt_kind", prompt_kind},
      {"mine", {{"model", mine.model.to_json()}, {"train", train_to_json(mine.train)}}},
      {"decode", {{"method", decode.method},
                  {"beam_size", decode.beam_size},
                  {"top_k", decode.top_k},
                  {"top_p", decode.top_p}}},
      {"eval_policy", eval_policy},
  };
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  PipelineConfig defaults;
  if (j.contains("seed")) defaults.set_seed(j.at("seed").get<std::uint64_t>());
  json full = defaults.to_json();
  reject_unknown(j, full, "");
  full.merge_patch(j);
  if (full.at("format_version") != kPipelineFormatVersion)
    throw ParseError("unsupported config format_version " + full.at("format_version").dump());

  try {
    PipelineConfig c;
    c.seed = full.at("seed");
    c.workdir = full.at("workdir");
    const json& co = full.at("corpus");
    c.corpus.path = co.at("path");
    c.corpus.synthetic = synthetic_from_json(co.at("synthetic"));
    c.corpus.test_fraction = co.at("test_fraction");
    const json& ex = full.at("extract");
    c.extract.lexicon = ex.at("lexicon");
    c.extract.conjunctions = ex.at("conjunctions");
    c.extract.sentiment_url = ex.at("sentiment_url");
    const json& m = full.at("matcher");
    c.matcher.model = matcher::DualEncoderConfig::from_json(m.at("model"));
    c.matcher.pretrain_reviews = m.at("pretrain_reviews");
    c.matcher.pretrain_seed = m.at("pretrain_seed");
    c.matcher.pretrain = finetune_from_json(m.at("pretrain"));
    c.matcher.finetune = finetune_from_json(m.at("finetune"));
    c.matcher.link_threshold = m.at("link_threshold");
    c.matcher.label_with = m.at("label_with");
    const json& a = full.at("annotation");
    c.annotation.k = a.at("k");
    c.annotation.annotators = a.at("annotators");
    c.annotation.error_rate = a.at("error_rate");
    const json& cal = full.at("calibration");
    const json& grid = cal.at("grid");
    if (!grid.is_array() || grid.size() != 3) throw ParseError("calibration.grid must be [lo, hi, step]");
    c.calibration.grid_lo = grid[0];
    c.calibration.grid_hi = grid[1];
    c.calibration.grid_step = grid[2];
    c.calibration.policy = cal.at("policy");
    c.calibration.fallback = cal.at("fallback");
    c.prompt_kind = full.at("prompt_kind");
    c.mine.model = model::MineConfig::from_json(full.at("mine").at("model"));
    c.mine.train = train_from_json(full.at("mine").at("train"));
    const json& d = full.at("decode");
    c.decode.method = d.at("method");
    c.decode.beam_size = d.at("beam_size");
    c.decode.top_k = d.at("top_k");
    c.decode.top_p = d.at("top_p");
    c.eval_policy = full.at("eval_policy");
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void PipelineConfig::validate() const {
  if (!(corpus.test_fraction >= 0.0 && corpus.test_fraction < 1.0))
    throw ContractError("corpus.test_fraction must lie in [0, 1)");
  if (matcher.label_with != "base" && matcher.label_with != "finetuned")
    throw ContractError("matcher.label_with must be 'base' or 'finetuned'");
  if (annotation.annotators < 2) throw ContractError("annotation.annotators must be at least 2");
  if (!(annotation.error_rate >= 0.0 && annotation.error_rate <= 1.0))
    throw ContractError("annotation.error_rate must lie in [0, 1]");
  if (!(calibration.grid_step > 0.0) || calibration.grid_hi < calibration.grid_lo)
    throw ContractError("calibration.grid must satisfy lo <= hi and step > 0");
  calibration::SelectionPolicy::parse(calibration.policy);
  if (!calibration.fallback.empty()) calibration::SelectionPolicy::parse(calibration.fallback);
  prompt::parse_kind(prompt_kind);
  evaluation::MatchPolicy::parse(eval_policy).validate();
  decoding::parse_method(decode.method);
  if (decode.beam_size == 0) throw ContractError("decode.beam_size must be at least 1");
  if (decode.top_k == 0) throw ContractError("decode.top_k must be at least 1");
  if (!(decode.top_p > 0.0 && decode.top_p <= 1.0)) throw ContractError("decode.top_p must lie in (0, 1]");
  mine.model.validate();
}

std::string PipelineConfig::hash() const {
  json j = to_json();
  j.erase("workdir");
  return sha256_hex(j.dump());
}

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  corpus.synthetic.seed = s;
  matcher.pretrain_seed = s + 1000;
  matcher.pretrain.seed = s;
  matcher.finetune.seed = s;
  mine.train.seed = s;
}

}  // namespace mine::pipeline
