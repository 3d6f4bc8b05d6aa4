#include "mine/pipeline/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "mine/calibration/calibration.hpp"
#include "mine/core/checkpoint.hpp"
#include "mine/core/error.hpp"
#include "mine/core/hash.hpp"
#include "mine/core/rng.hpp"
#include "mine/data/corpus.hpp"
#include "mine/data/image.hpp"
#include "mine/data/synthetic.hpp"
#include "mine/data/tokenizer.hpp"
#include "mine/decoding/decoding.hpp"
#include "mine/evaluation/evaluation.hpp"
#include "mine/matcher/dual_encoder.hpp"
#include "mine/model/mine_model.hpp"
#include "mine/prompt/codec.hpp"
#include "mine/verbatim/sentiment.hpp"
#include "mine/verbatim/text.hpp"

namespace mine::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Salts for the child streams of the master seed.
enum : std::uint64_t { kSaltSplit = 1, kSaltStratify, kSaltAnnotators, kSaltBaseline, kSaltDecode };

Rng stream(std::uint64_t seed, std::uint64_t salt) { return Rng(seed).fork(salt); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  out << content;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  write_file(path, out);
}

std::vector<std::string> files_under(const fs::path& root, const std::string& relative) {
  const fs::path p = root / relative;
  if (!fs::is_directory(p)) return {relative};
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root).generic_string());
  std::sort(files.begin(), files.end());
  return files;
}

int declared_version(const fs::path& path) {
  if (path.extension() != ".json") return kPipelineFormatVersion;
  try {
    const json j = json::parse(read_file(path));
    if (j.is_object() && j.contains("format_version") && j.at("format_version").is_number_integer())
      return j.at("format_version").get<int>();
  } catch (const json::exception&) {
  }
  return kPipelineFormatVersion;
}

std::unique_ptr<verbatim::SentimentClassifier> make_classifier(const ExtractConfig& cfg) {
  if (!cfg.sentiment_url.empty()) {
    std::string url = cfg.sentiment_url;
    if (const auto scheme = url.find("://"); scheme != std::string::npos) url = url.substr(scheme + 3);
    const auto slash = url.find('/');
    const std::string hostport = url.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/classify" : url.substr(slash);
    const auto colon = hostport.rfind(':');
    if (colon == std::string::npos) throw ContractError("sentiment_url needs host:port, got " + cfg.sentiment_url);
    return std::make_unique<verbatim::HttpSentimentClient>(hostport.substr(0, colon),
                                                           std::stoi(hostport.substr(colon + 1)), path);
  }
  if (!cfg.lexicon.empty())
    return std::make_unique<verbatim::LexiconClassifier>(verbatim::LexiconClassifier::load(cfg.lexicon));
  return std::make_unique<verbatim::LexiconClassifier>(verbatim::LexiconClassifier::defaults());
}

struct Split {
  std::vector<std::string> train, test;
};

Split load_split(const fs::path& path) {
  const json j = read_json(path);
  return {j.at("train").get<std::vector<std::string>>(), j.at("test").get<std::vector<std::string>>()};
}

std::vector<data::ReviewRecord> select_reviews(const std::vector<data::ReviewRecord>& all,
                                               const std::vector<std::string>& ids) {
  std::map<std::string, const data::ReviewRecord*> by_id;
  for (const auto& r : all) by_id[r.review_id] = &r;
  std::vector<data::ReviewRecord> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw IntegrityError("split.json names unknown review " + id);
    out.push_back(*it->second);
  }
  return out;
}

// Gold key: (review, image, normalized verbatim).
using GoldKey = std::tuple<std::string, std::string, std::string>;

std::map<GoldKey, bool> gold_index(const std::vector<data::GoldPair>& gold) {
  std::map<GoldKey, bool> idx;
  for (const auto& g : gold) {
    auto& v = idx[{g.review_id, g.image_path, evaluation::normalize(g.verbatim)}];
    v = v || g.relevant;
  }
  return idx;
}

json point_json(const calibration::CurvePoint& p) {
  return {{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1},
          {"coverage", p.coverage},   {"tp", p.tp},               {"fp", p.fp},         {"fn", p.fn}};
}

}  // namespace

std::vector<calibration::LabeledScore> resolved_scores(const std::vector<data::PairRecord>& scored,
                                                       const std::vector<calibration::AnnotationRecord>& log) {
  const auto res = calibration::resolve_annotations(calibration::latest_per_annotator(log));
  std::vector<calibration::LabeledScore> out;
  for (const auto& p : scored) {
    if (p.error) continue;
    auto it = res.labels.find(p.pair_id);
    if (it == res.labels.end()) continue;
    out.push_back({p.score, it->second == calibration::Relevance::kRelevant, p.category});
  }
  return out;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {
      "synth", "extract", "pretrain-matcher", "pair", "score", "cluster", "stratify", "simulate-annotators",
      "calibrate", "finetune-matcher", "build-train", "train-mine", "infer", "eval", "curves"};
  return names;
}

Pipeline::Pipeline(PipelineConfig config, fs::path workdir, RunOptions options)
    : config_(std::move(config)), workdir_(std::move(workdir)), options_(std::move(options)) {
  config_.validate();
}

void Pipeline::log(const std::string& message) const {
  if (options_.log) options_.log(message);
}

fs::path Pipeline::corpus_dir() const {
  return config_.corpus.path.empty() ? workdir_ / "corpus" : fs::path(config_.corpus.path);
}

std::string Pipeline::resolve_matcher(const std::string& matcher) const {
  const std::string m = matcher.empty() ? "base" : matcher;
  if (m != "base" && m != "finetuned") throw ContractError("matcher must be 'base' or 'finetuned', got " + m);
  return m;
}

json Pipeline::finish(const std::string& stage, const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs, json summary) const {
  auto describe = [&](const std::vector<std::string>& list, bool with_version) {
    json arr = json::array();
    for (const auto& rel : list) {
      for (const auto& file : files_under(workdir_, rel)) {
        const fs::path p = workdir_ / file;
        if (!fs::exists(p)) continue;
        json e = {{"path", file}, {"sha256", sha256_file(p)}};
        if (with_version) e["format_version"] = declared_version(p);
        arr.push_back(e);
      }
    }
    return arr;
  };
  json m = {{"format_version", kPipelineFormatVersion},
            {"stage", stage},
            {"config_sha256", config_.hash()},
            {"seed", config_.seed},
            {"inputs", describe(inputs, false)},
            {"outputs", describe(outputs, true)},
            {"summary", std::move(summary)}};
  write_json(workdir_ / "manifests" / (stage + ".manifest.json"), m);
  return m;
}

json Pipeline::run_stage(const std::string& name) {
  if (name == "synth") return synth();
  if (name == "extract") return extract();
  if (name == "pretrain-matcher") return pretrain_matcher();
  if (name == "pair") return pair();
  if (name == "score") return score(options_.matcher);
  if (name == "cluster") return cluster();
  if (name == "stratify") return stratify();
  if (name == "simulate-annotators") return simulate_annotators();
  if (name == "calibrate") return calibrate(options_.matcher);
  if (name == "finetune-matcher") return finetune_matcher();
  if (name == "build-train") return build_train();
  if (name == "train-mine") return train_mine();
  if (name == "infer") return infer();
  if (name == "eval") return eval();
  if (name == "curves") return curves();
  throw ContractError("unknown stage '" + name + "'");
}

json Pipeline::run_all() {
  synth();
  extract();
  pretrain_matcher();
  pair();
  score("base");
  cluster();
  stratify();
  simulate_annotators();
  calibrate("base");
  finetune_matcher();
  score("finetuned");
  calibrate("finetuned");
  build_train();
  train_mine();
  infer();
  const json report = eval();
  curves();
  return report;
}

// ---------------------------------------------------------------- stages

json Pipeline::synth() {
  std::vector<std::string> outputs = {"split.json"};
  if (config_.corpus.path.empty()) {
    log("synth: generating " + std::to_string(config_.corpus.synthetic.num_reviews) + " reviews");
    const auto corpus = data::generate_synthetic_corpus(config_.corpus.synthetic);
    fs::remove_all(workdir_ / "corpus");
    data::write_synthetic_corpus(corpus, workdir_ / "corpus");
    outputs.insert(outputs.begin(), "corpus");
  }
  const auto load = data::load_corpus(corpus_dir() / "corpus.jsonl");
  if (!load.ok())
    throw ParseError("corpus.jsonl:" + std::to_string(load.errors.front().line) + ": " +
                     load.errors.front().message + " (" + std::to_string(load.errors.size()) + " bad lines)");

  std::vector<std::size_t> order(load.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = stream(config_.seed, kSaltSplit);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(config_.corpus.test_fraction * order.size() + 0.5);
  std::vector<bool> is_test(order.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;
  json train = json::array(), test = json::array();
  for (std::size_t i = 0; i < load.records.size(); ++i)
    (is_test[i] ? test : train).push_back(load.records[i].review_id);
  write_json(workdir_ / "split.json", {{"format_version", kPipelineFormatVersion},
                                       {"test_fraction", config_.corpus.test_fraction},
                                       {"train", train},
                                       {"test", test}});
  return finish("synth", {}, outputs,
                {{"reviews", load.records.size()}, {"train", train.size()}, {"test", test.size()}});
}

json Pipeline::extract() {
  const auto reviews = data::load_corpus(corpus_dir() / "corpus.jsonl").records;
  const auto classifier = make_classifier(config_.extract);
  const auto seg = config_.extract.conjunctions.empty() ? verbatim::SegmentConfig::defaults()
                                                        : verbatim::SegmentConfig::load(config_.extract.conjunctions);
  std::vector<data::Verbatim> kept;
  std::vector<std::string> warnings;
  std::size_t segments = 0;
  for (const auto& r : reviews) {
    const auto parts = verbatim::segment(verbatim::preprocess_text(r.text), r.review_id, seg);
    segments += parts.size();
    auto f = verbatim::filter_actionable(parts, *classifier);
    for (auto& v : f.kept) kept.push_back(std::move(v));
    for (auto& w : f.warnings) warnings.push_back(std::move(w));
  }
  for (const auto& w : warnings) log("extract: " + w);
  data::save_verbatims(workdir_ / "verbatims.jsonl", kept);
  log("extract: " + std::to_string(kept.size()) + " actionable of " + std::to_string(segments) + " segments");
  return finish("extract", {"corpus/corpus.jsonl"}, {"verbatims.jsonl"},
                {{"reviews", reviews.size()}, {"segments", segments}, {"verbatims", kept.size()},
                 {"warnings", warnings.size()}});
}

json Pipeline::pretrain_matcher() {
  data::SyntheticSpec spec = config_.corpus.synthetic;
  spec.num_reviews = config_.matcher.pretrain_reviews;
  spec.seed = config_.matcher.pretrain_seed;
  log("pretrain-matcher: generating " + std::to_string(spec.num_reviews) + " reviews (seed " +
      std::to_string(spec.seed) + ")");
  const auto pre = data::generate_synthetic_corpus(spec);
  const auto reviews = data::load_corpus(corpus_dir() / "corpus.jsonl").records;

  std::vector<std::string> texts;
  for (const auto& r : pre.reviews) texts.push_back(verbatim::preprocess_text(r.text));
  const std::size_t n_pre = texts.size();
  for (const auto& r : reviews) texts.push_back(verbatim::preprocess_text(r.text));
  auto vocab = data::Vocabulary::build(texts);

  std::map<std::string, const data::ImageRaster*> images;
  for (const auto& im : pre.images) images[im.path] = &im.raster;
  std::vector<matcher::TrainingPair> pairs;
  for (std::size_t i = 0; i < n_pre; ++i)
    for (const auto& p : pre.reviews[i].image_paths) pairs.push_back({images.at(p), p, texts[i]});

  matcher::DualEncoder model(config_.matcher.model, std::move(vocab), config_.seed);
  json summary = {{"pairs", pairs.size()}, {"steps", 0}};
  if (!pairs.empty()) {
    log("pretrain-matcher: " + std::to_string(pairs.size()) + " pairs, " +
        std::to_string(config_.matcher.pretrain.steps) + " steps");
    const auto trace = matcher::finetune(model, pairs, config_.matcher.pretrain);
    summary["steps"] = trace.size();
    if (!trace.empty()) {
      summary["loss_first"] = trace.front();
      summary["loss_last"] = trace.back();
    }
  }
  summary["tau"] = model.tau().item();
  fs::remove_all(workdir_ / "matcher/base");
  model.save(workdir_ / "matcher/base");
  return finish("pretrain-matcher", {"corpus/corpus.jsonl"}, {"matcher/base"}, summary);
}

json Pipeline::pair() {
  const auto reviews = data::load_corpus(corpus_dir() / "corpus.jsonl").records;
  const Split split = load_split(workdir_ / "split.json");
  const auto verbatims = data::load_verbatims(workdir_ / "verbatims.jsonl");
  std::map<std::string, const data::ReviewRecord*> by_id;
  for (const auto& r : reviews) by_id[r.review_id] = &r;
  const std::set<std::string> train(split.train.begin(), split.train.end());

  std::vector<data::PairRecord> pairs;
  for (const auto& v : verbatims) {
    if (!train.count(v.review_id)) continue;
    const auto* r = by_id.at(v.review_id);
    for (std::size_t k = 0; k < r->image_paths.size(); ++k) {
      data::PairRecord p;
      p.pair_id = v.verbatim_id + "@" + std::to_string(k);
      p.verbatim_id = v.verbatim_id;
      p.review_id = v.review_id;
      p.verbatim = v.text;
      p.image_path = r->image_paths[k];
      p.category = r->category;
      pairs.push_back(std::move(p));
    }
  }
  data::save_pairs(workdir_ / "pairs.jsonl", pairs);
  return finish("pair", {"split.json", "verbatims.jsonl"}, {"pairs.jsonl"}, {{"pairs", pairs.size()}});
}

json Pipeline::score(const std::string& which) {
  const std::string m = resolve_matcher(which);
  const auto model = matcher::DualEncoder::load(workdir_ / "matcher" / m);
  const auto candidates = data::load_pairs(workdir_ / "pairs.jsonl");
  const auto reviews = data::load_corpus(corpus_dir() / "corpus.jsonl").records;
  const auto verbatims = data::load_verbatims(workdir_ / "verbatims.jsonl");

  std::set<std::string> wanted;
  for (const auto& p : candidates) wanted.insert(p.verbatim_id);
  std::vector<data::Verbatim> subset;
  for (const auto& v : verbatims)
    if (wanted.count(v.verbatim_id)) subset.push_back(v);
  const fs::path root = corpus_dir();
  auto scored = matcher::score_pairs(model, subset, reviews,
                                     [&](const std::string& p) { return data::read_ppm(root / p); });

  std::map<std::string, const data::PairRecord*> by_id;
  for (const auto& p : scored) by_id[p.pair_id] = &p;
  std::vector<data::PairRecord> out;
  std::size_t errors = 0;
  for (const auto& c : candidates) {
    auto it = by_id.find(c.pair_id);
    if (it == by_id.end()) throw IntegrityError("pairs.jsonl is stale: no score for " + c.pair_id);
    data::PairRecord p = *it->second;
    p.category = c.category;
    if (p.error) ++errors;
    out.push_back(std::move(p));
  }
  const std::string file = "scored_pairs." + m + ".jsonl";
  data::save_pairs(workdir_ / file, out);
  log("score: " + std::to_string(out.size()) + " pairs with the " + m + " matcher");
  return finish("score." + m, {"pairs.jsonl", "matcher/" + m}, {file},
                {{"matcher", m}, {"pairs", out.size()}, {"errors", errors}});
}

json Pipeline::cluster() {
  const auto model = matcher::DualEncoder::load(workdir_ / "matcher/base");
  const auto pairs = data::load_pairs(workdir_ / "pairs.jsonl");
  std::vector<std::string> ids, texts;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (!seen.insert(p.verbatim_id).second) continue;
    ids.push_back(p.verbatim_id);
    texts.push_back(p.verbatim);
  }
  json clusters = json::array();
  if (!texts.empty()) {
    const auto assignment = matcher::cluster_verbatims(texts, model, config_.matcher.link_threshold);
    for (const auto& members : assignment.members) {
      json c = json::array();
      for (auto i : members) c.push_back(ids[i]);
      clusters.push_back(c);
    }
  }
  write_json(workdir_ / "clusters.json", {{"format_version", kPipelineFormatVersion},
                                          {"link_threshold", config_.matcher.link_threshold},
                                          {"clusters", clusters}});
  return finish("cluster", {"pairs.jsonl", "matcher/base"}, {"clusters.json"},
                {{"verbatims", ids.size()}, {"clusters", clusters.size()}});
}

json Pipeline::stratify() {
  const auto pairs = data::load_pairs(workdir_ / "pairs.jsonl");
  const json clusters = read_json(workdir_ / "clusters.json").at("clusters");
  std::map<std::string, std::size_t> cluster_of_verbatim;
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (const auto& id : clusters[c]) cluster_of_verbatim[id.get<std::string>()] = c;

  std::vector<std::size_t> cluster_of;
  std::vector<std::string> category_of;
  std::set<std::string> categories;
  for (const auto& p : pairs) {
    auto it = cluster_of_verbatim.find(p.verbatim_id);
    if (it == cluster_of_verbatim.end()) throw IntegrityError("clusters.json misses verbatim " + p.verbatim_id);
    cluster_of.push_back(it->second);
    category_of.push_back(p.category);
    categories.insert(p.category);
  }
  std::vector<std::size_t> picked;
  if (!pairs.empty()) {
    Rng rng = stream(config_.seed, kSaltStratify);
    picked = calibration::stratified_sample(cluster_of, category_of, categories.size(), config_.annotation.k,
                                            rng.next_u64());
  }
  json ids = json::array();
  for (auto i : picked) ids.push_back(pairs[i].pair_id);
  write_json(workdir_ / "sample.json", {{"format_version", kPipelineFormatVersion},
                                        {"k", config_.annotation.k},
                                        {"num_categories", categories.size()},
                                        {"pair_ids", ids}});
  return finish("stratify", {"pairs.jsonl", "clusters.json"}, {"sample.json"},
                {{"sampled", ids.size()}, {"pairs", pairs.size()}});
}

json Pipeline::simulate_annotators() {
  const fs::path gold_path = corpus_dir() / "gold.jsonl";
  if (!fs::exists(gold_path))
    throw ContractError("simulate-annotators needs gold.jsonl in the corpus; label with annotate-serve instead");
  const auto gold = gold_index(data::load_gold(gold_path));
  const auto pairs = data::load_pairs(workdir_ / "pairs.jsonl");
  std::map<std::string, const data::PairRecord*> by_id;
  for (const auto& p : pairs) by_id[p.pair_id] = &p;
  const json sample = read_json(workdir_ / "sample.json").at("pair_ids");

  const fs::path log_path = workdir_ / "annotations.jsonl";
  fs::remove(log_path);
  calibration::AnnotationStore store(log_path);
  Rng rng = stream(config_.seed, kSaltAnnotators);
  std::vector<std::string> names;
  for (std::size_t a = 0; a < config_.annotation.annotators; ++a) names.push_back("sim-" + std::to_string(a + 1));
  std::size_t missing = 0, conflicts = 0;

  auto vote = [&](const std::string& pair_id, const std::string& who, bool truth) {
    calibration::AnnotationRecord r;
    r.pair_id = pair_id;
    r.annotator_id = who;
    const bool label = rng.bernoulli(config_.annotation.error_rate) ? !truth : truth;
    r.label = label ? calibration::Relevance::kRelevant : calibration::Relevance::kNotRelevant;
    r.timestamp = "simulated";
    store.append(r);
  };
  for (const auto& idj : sample) {
    const std::string id = idj.get<std::string>();
    const auto* p = by_id.at(id);
    auto g = gold.find({p->review_id, p->image_path, evaluation::normalize(p->verbatim)});
    if (g == gold.end()) ++missing;
    const bool truth = g != gold.end() && g->second;
    for (const auto& n : names) vote(id, n, truth);
  }
  // Ties go to one more annotator, as in the two-expert protocol.
  const auto res = calibration::resolve_annotations(store.current());
  for (const auto& id : res.unresolved) {
    const auto* p = by_id.at(id);
    auto g = gold.find({p->review_id, p->image_path, evaluation::normalize(p->verbatim)});
    vote(id, "sim-tiebreak", g != gold.end() && g->second);
    ++conflicts;
  }
  const auto table = calibration::agreement_table(store.current(), names[0], names[1]);
  json summary = {{"labels", store.log().size()}, {"pairs", sample.size()}, {"conflicts", conflicts},
                  {"gold_missing", missing}};
  if (table.total() > 0) summary["kappa"] = calibration::cohens_kappa(table);
  return finish("simulate-annotators", {"pairs.jsonl", "sample.json"}, {"annotations.jsonl"}, summary);
}

json Pipeline::calibrate(const std::string& which) {
  const std::string m = resolve_matcher(which);
  const auto scored = data::load_pairs(workdir_ / ("scored_pairs." + m + ".jsonl"));
  calibration::AnnotationStore store(workdir_ / "annotations.jsonl");
  const auto labeled = resolved_scores(scored, store.log());
  std::set<std::string> cats;
  for (const auto& p : scored) cats.insert(p.category);

  const auto grid = calibration::make_grid(config_.calibration.grid_lo, config_.calibration.grid_hi,
                                           config_.calibration.grid_step);
  const auto curve = calibration::sweep_thresholds(labeled, grid, cats.size());
  const std::string requested = options_.policy.value_or(config_.calibration.policy);
  const auto policy = calibration::SelectionPolicy::parse(requested);
  double threshold = 0.0;
  bool fallback_used = false;
  std::string applied = policy.to_string();
  try {
    threshold = calibration::select_threshold(curve, policy);
  } catch (const ContractError& e) {
    if (options_.policy || config_.calibration.fallback.empty()) throw;
    log("calibrate: " + std::string(e.what()) + "; falling back to " + config_.calibration.fallback);
    const auto fb = calibration::SelectionPolicy::parse(config_.calibration.fallback);
    threshold = calibration::select_threshold(curve, fb);
    applied = fb.to_string();
    fallback_used = true;
  }
  const auto at = std::find_if(curve.begin(), curve.end(), [&](const auto& p) { return p.threshold == threshold; });

  const std::string csv = "curve." + m + ".csv", js = "curve." + m + ".json", th = "threshold." + m + ".json";
  write_file(workdir_ / csv, calibration::curve_to_csv(curve));
  write_json(workdir_ / js, {{"format_version", kPipelineFormatVersion}, {"matcher", m}, {"labels", labeled.size()},
                             {"points", calibration::curve_to_json(curve)}});
  json t = {{"format_version", kPipelineFormatVersion},
            {"matcher", m},
            {"requested_policy", requested},
            {"policy", applied},
            {"fallback_used", fallback_used},
            {"threshold", threshold},
            {"labels", labeled.size()}};
  if (at != curve.end()) t["point"] = point_json(*at);
  write_json(workdir_ / th, t);
  log("calibrate: " + m + " threshold " + calibration::format_double(threshold) + " (" + applied + ")");
  return finish("calibrate." + m, {"scored_pairs." + m + ".jsonl", "annotations.jsonl"}, {csv, js, th}, t);
}

json Pipeline::finetune_matcher() {
  auto model = matcher::DualEncoder::load(workdir_ / "matcher/base");
  const double threshold = read_json(workdir_ / "threshold.base.json").at("threshold");
  const auto labeled = matcher::label_pairs(data::load_pairs(workdir_ / "scored_pairs.base.jsonl"), threshold);
  const fs::path root = corpus_dir();
  std::map<std::string, data::ImageRaster> images;
  std::vector<matcher::TrainingPair> positives;
  for (const auto& p : labeled) {
    if (p.label != data::PairLabel::kPositive) continue;
    auto it = images.find(p.image_path);
    if (it == images.end()) it = images.emplace(p.image_path, data::read_ppm(root / p.image_path)).first;
    positives.push_back({&it->second, p.image_path, p.verbatim});
  }
  json summary = {{"threshold", threshold}, {"positives", positives.size()}};
  std::set<std::string> distinct_images;
  for (const auto& p : positives) distinct_images.insert(p.image_key);
  if (distinct_images.size() >= 2) {
    log("finetune-matcher: " + std::to_string(positives.size()) + " weak positives");
    const auto trace = matcher::finetune(model, positives, config_.matcher.finetune);
    summary["steps"] = trace.size();
    if (!trace.empty()) {
      summary["loss_first"] = trace.front();
      summary["loss_last"] = trace.back();
    }
  } else {
    log("finetune-matcher: fewer than two positive images, keeping the base weights");
    summary["steps"] = 0;
  }
  fs::remove_all(workdir_ / "matcher/finetuned");
  model.save(workdir_ / "matcher/finetuned");
  return finish("finetune-matcher", {"matcher/base", "scored_pairs.base.jsonl", "threshold.base.json"},
                {"matcher/finetuned"}, summary);
}

json Pipeline::build_train() {
  const std::string m = config_.matcher.label_with;
  const auto kind = prompt::parse_kind(config_.prompt_kind);
  double threshold = 0.0;
  std::vector<std::string> inputs = {"scored_pairs." + m + ".jsonl", "split.json", "corpus/corpus.jsonl"};
  if (options_.threshold) {
    threshold = *options_.threshold;
  } else {
    threshold = read_json(workdir_ / ("threshold." + m + ".json")).at("threshold");
    inputs.push_back("threshold." + m + ".json");
  }
  const auto labeled = matcher::label_pairs(data::load_pairs(workdir_ / ("scored_pairs." + m + ".jsonl")), threshold);
  data::save_pairs(workdir_ / "labeled_pairs.jsonl", labeled);

  const auto reviews = data::load_corpus(corpus_dir() / "corpus.jsonl").records;
  const auto train = select_reviews(reviews, load_split(workdir_ / "split.json").train);
  // (review, image) -> pairs in source order
  std::map<std::pair<std::string, std::string>, std::vector<const data::PairRecord*>> by_image;
  for (const auto& p : labeled) by_image[{p.review_id, p.image_path}].push_back(&p);

  std::vector<json> rows;
  std::size_t positives = 0, empty = 0;
  for (const auto& r : train) {
    const std::string prompt = prompt::build_prompt(kind, verbatim::preprocess_text(r.text));
    for (const auto& image : r.image_paths) {
      std::vector<prompt::Entry> entries;
      bool unreadable = false;
      for (const auto* p : by_image[{r.review_id, image}]) {
        if (p->error) unreadable = true;
        const bool keep = kind == prompt::PromptKind::kCsecs || p->label == data::PairLabel::kPositive;
        if (!keep) continue;
        entries.push_back({p->verbatim, p->score});
        positives += p->label == data::PairLabel::kPositive;
      }
      if (unreadable) continue;
      empty += entries.empty();
      rows.push_back({{"prompt", prompt},
                      {"image_path", image},
                      {"target", prompt::serialize_target(kind, prompt::ordered(kind, entries))}});
    }
  }
  write_jsonl(workdir_ / "train_pairs.jsonl", rows);
  log("build-train: " + std::to_string(rows.size()) + " examples at threshold " +
      calibration::format_double(threshold));
  return finish("build-train", inputs, {"labeled_pairs.jsonl", "train_pairs.jsonl"},
                {{"matcher", m}, {"threshold", threshold}, {"examples", rows.size()}, {"positives", positives},
                 {"empty_targets", empty}, {"prompt_kind", config_.prompt_kind}});
}

json Pipeline::train_mine() {
  const auto rows = read_jsonl(workdir_ / "train_pairs.jsonl");
  if (rows.empty()) throw ContractError("train-mine: train_pairs.jsonl is empty");
  const auto kind = prompt::parse_kind(config_.prompt_kind);
  const auto reviews = data::load_corpus(corpus_dir() / "corpus.jsonl").records;

  // The tokenizer sees every review text (no labels) plus the targets.
  std::vector<std::string> texts;
  for (const auto& r : reviews) texts.push_back(prompt::build_prompt(kind, verbatim::preprocess_text(r.text)));
  for (const auto& row : rows) texts.push_back(row.at("target").get<std::string>());
  auto vocab = data::Vocabulary::build(texts);

  model::MineConfig mc = config_.mine.model;
  mc.vocab_size = vocab.size();
  model::MineModel model(mc, std::move(vocab), config_.seed);
  const fs::path root = corpus_dir();
  std::vector<model::MineExample> examples;
  for (const auto& row : rows)
    examples.push_back(model::make_example(model, row.at("prompt"), data::read_ppm(root / row.at("image_path").get<std::string>()),
                                           row.at("target")));
  log("train-mine: " + std::to_string(examples.size()) + " examples, " + std::to_string(config_.mine.train.epochs) +
      " epochs");
  const auto trace = model::train(model, examples, config_.mine.train, [&](std::size_t e, double loss) {
    if (e % 5 == 0 || e + 1 == config_.mine.train.epochs)
      log("train-mine: epoch " + std::to_string(e) + " loss " + calibration::format_double(loss));
    return true;
  });
  fs::remove_all(workdir_ / "mine");
  model.save(workdir_ / "mine");
  write_json(workdir_ / "mine_trace.json", {{"format_version", kPipelineFormatVersion},
                                            {"examples", examples.size()},
                                            {"truncated_prompts", model.truncated_count()},
                                            {"loss", trace}});
  return finish("train-mine", {"train_pairs.jsonl"}, {"mine", "mine_trace.json"},
                {{"examples", examples.size()}, {"epochs", trace.size()},
                 {"final_loss", trace.empty() ? 0.0 : trace.back()}});
}

json Pipeline::infer() {
  const auto model = model::MineModel::load(workdir_ / "mine");
  const auto kind = prompt::parse_kind(config_.prompt_kind);
  const auto reviews = data::load_corpus(corpus_dir() / "corpus.jsonl").records;
  const auto test = select_reviews(reviews, load_split(workdir_ / "split.json").test);
  decoding::DecodeConfig dc;
  dc.method = decoding::parse_method(config_.decode.method);
  dc.beam_size = config_.decode.beam_size;
  dc.k = config_.decode.top_k;
  dc.p = config_.decode.top_p;
  dc.max_len = model.config().max_text_len - 1;
  dc.validate(model.vocab().size());
  Rng seeds = stream(config_.seed, kSaltDecode);

  const fs::path root = corpus_dir();
  std::vector<json> rows;
  std::size_t warnings = 0, unterminated = 0;
  for (const auto& r : test) {
    const std::string prompt = prompt::build_prompt(kind, verbatim::preprocess_text(r.text));
    for (const auto& image : r.image_paths) {
      dc.seed = seeds.next_u64();
      const auto ex = model::make_example(model, prompt, data::read_ppm(root / image), "");
      Tensor z;
      {
        NoGradGuard guard;
        z = model.encode_grounded(ex.prompt, model.encode_patches(ex.patches));
      }
      const auto decoded = decoding::decode(decoding::mine_step(model, z), data::kEos, dc);
      const std::string output = data::detokenize(decoded.tokens, model.vocab());
      const auto parsed = prompt::parse_output(kind, output);
      json entries = json::array();
      for (const auto& e : parsed.entries) {
        json je = {{"text", e.text}};
        if (e.confidence) je["confidence"] = *e.confidence;
        entries.push_back(je);
      }
      warnings += parsed.warnings.size();
      unterminated += !decoded.terminated;
      rows.push_back({{"review_id", r.review_id},
                      {"image_path", image},
                      {"category", r.category},
                      {"output", output},
                      {"entries", entries},
                      {"warnings", parsed.warnings}});
    }
  }
  write_jsonl(workdir_ / "predictions.jsonl", rows);
  log("infer: " + std::to_string(rows.size()) + " test images decoded with " + decoding::method_name(dc.method));
  return finish("infer", {"mine", "split.json"}, {"predictions.jsonl"},
                {{"items", rows.size()}, {"parse_warnings", warnings}, {"unterminated", unterminated},
                 {"decode", decoding::method_name(dc.method)}});
}

json Pipeline::eval() {
  const fs::path gold_path = corpus_dir() / "gold.jsonl";
  if (!fs::exists(gold_path)) throw ContractError("eval needs gold.jsonl in the corpus");
  const auto gold = data::load_gold(gold_path);
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> relevant;
  for (const auto& g : gold)
    if (g.relevant) relevant[{g.review_id, g.image_path}].push_back(g.verbatim);
  const auto policy = evaluation::MatchPolicy::parse(config_.eval_policy);
  const auto reviews = data::load_corpus(corpus_dir() / "corpus.jsonl").records;
  std::map<std::string, const data::ReviewRecord*> by_id;
  for (const auto& r : reviews) by_id[r.review_id] = &r;
  std::map<std::string, std::vector<std::string>> verbatims_of;
  for (const auto& v : data::load_verbatims(workdir_ / "verbatims.jsonl")) verbatims_of[v.review_id].push_back(v.text);

  std::vector<evaluation::EvalItem> items, baseline;
  Rng rng = stream(config_.seed, kSaltBaseline);
  for (const auto& row : read_jsonl(workdir_ / "predictions.jsonl")) {
    evaluation::EvalItem it;
    it.review_id = row.at("review_id");
    it.image_path = row.at("image_path");
    it.category = row.at("category");
    it.source_text = verbatim::preprocess_text(by_id.at(it.review_id)->text);
    it.gold = relevant[{it.review_id, it.image_path}];
    evaluation::EvalItem b = it;
    for (const auto& e : row.at("entries")) it.predictions.push_back(e.at("text"));
    const auto& pool = verbatims_of[it.review_id];
    if (!pool.empty()) b.predictions.push_back(pool[rng.below(pool.size())]);
    items.push_back(std::move(it));
    baseline.push_back(std::move(b));
  }
  const auto report = evaluation::evaluate_run(items, policy);
  const auto base = evaluation::evaluate_run(baseline, policy);
  const std::string decode = config_.decode.method == "beam"
                                 ? "beam" + std::to_string(config_.decode.beam_size)
                                 : config_.decode.method;
  write_file(workdir_ / "eval.csv", evaluation::report_csv_header() +
                                        evaluation::report_csv_row("mine", config_.prompt_kind, decode, report) +
                                        evaluation::report_csv_row("random_verbatim", "-", "-", base));
  const json out = {{"format_version", kPipelineFormatVersion},
                    {"policy", policy.to_string()},
                    {"items", items.size()},
                    {"model", report.to_json()},
                    {"random_baseline", base.to_json()}};
  write_json(workdir_ / "eval_report.json", out);
  log("eval: F1 " + calibration::format_double(report.overall.f1) + " (random verbatim " +
      calibration::format_double(base.overall.f1) + ")");
  finish("eval", {"predictions.jsonl", "verbatims.jsonl"}, {"eval_report.json", "eval.csv"},
         {{"f1", report.overall.f1}, {"baseline_f1", base.overall.f1}});
  return out;
}

json Pipeline::curves() {
  const fs::path log_path = workdir_ / "annotations.jsonl";
  if (!fs::exists(log_path)) throw ContractError("curves needs annotations.jsonl");
  calibration::AnnotationStore store(log_path);
  const auto grid = calibration::make_grid(config_.calibration.grid_lo, config_.calibration.grid_hi,
                                           config_.calibration.grid_step);
  std::vector<std::string> inputs = {"annotations.jsonl"}, outputs;
  json summary = json::object();
  for (const std::string m : {"base", "finetuned"}) {
    const std::string scored_file = "scored_pairs." + m + ".jsonl";
    if (!fs::exists(workdir_ / scored_file)) continue;
    const auto scored = data::load_pairs(workdir_ / scored_file);
    std::set<std::string> cats;
    for (const auto& p : scored) cats.insert(p.category);
    const auto labeled = resolved_scores(scored, store.log());
    const auto curve = calibration::sweep_thresholds(labeled, grid, cats.size());
    write_file(workdir_ / "curves" / (m + ".csv"), calibration::curve_to_csv(curve));
    // The narrow 0.19..0.31 window where thresholds usually land.
    const auto window = calibration::sweep_thresholds(labeled, calibration::default_grid(), cats.size());
    write_file(workdir_ / "curves" / (m + ".window.csv"), calibration::curve_to_csv(window));
    inputs.push_back(scored_file);
    outputs.push_back("curves/" + m + ".csv");
    outputs.push_back("curves/" + m + ".window.csv");
    summary[m] = labeled.size();
  }
  return finish("curves", inputs, outputs, summary);
}

}  // namespace mine::pipeline
