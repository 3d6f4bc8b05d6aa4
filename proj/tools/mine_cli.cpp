// mine: command-line driver for the pipeline stages and the annotation
// service. Artifacts go under the workdir; errors leave a JSON object on
// stderr and a nonzero exit code.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mine/core/error.hpp"
#include "mine/data/corpus.hpp"
#include "mine/pipeline/pipeline.hpp"
#include "mine/pipeline/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mine;

namespace {

struct ErrorKind {
  const char* type;
  int code;
};

ErrorKind classify(const std::exception& e) {
  if (dynamic_cast<const ContractError*>(&e)) return {"contract", 3};
  if (dynamic_cast<const ParseError*>(&e)) return {"parse", 4};
  if (dynamic_cast<const IntegrityError*>(&e)) return {"integrity", 5};
  if (dynamic_cast<const NumericError*>(&e)) return {"numeric", 6};
  if (dynamic_cast<const ServiceError*>(&e)) return {"service", 7};
  if (dynamic_cast<const DimensionError*>(&e)) return {"dimension", 8};
  if (dynamic_cast<const IndexError*>(&e)) return {"index", 8};
  if (dynamic_cast<const json::exception*>(&e)) return {"parse", 4};
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return {"io", 9};
  return {"internal", 1};
}

int report_error(const std::string& type, const std::string& message, int code) {
  std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal insight extraction pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, workdir;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold, top_p;
  std::optional<std::size_t> beam_size, top_k;
  std::string policy, prompt_kind, matcher, decode_method;
  bool quiet = false;

  app.add_option("--config", config_path, "pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed")->envname("MINE_SEED");
  app.add_option("--workdir", workdir, "artifact directory")->envname("MINE_WORKDIR");
  app.add_option("--threshold", threshold, "build-train: label pairs at this threshold");
  app.add_option("--policy", policy, "calibrate: precision_floor:P | max_f1 | fixed:T (disables the fallback)");
  app.add_option("--matcher", matcher, "score/calibrate/annotate-serve: base | finetuned");
  app.add_option("--prompt-kind", prompt_kind, "csecs | msecs | mse")
      ->check(CLI::IsMember({"csecs", "msecs", "mse"}, CLI::ignore_case));
  app.add_option("--decode", decode_method, "greedy | beam | top_k | nucleus");
  app.add_option("--beam-size", beam_size, "beam width");
  app.add_option("--top-k", top_k, "top-k cutoff");
  app.add_option("--top-p", top_p, "nucleus mass");
  app.add_flag("-q,--quiet", quiet, "only warnings and errors on stderr");

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"synth", "generate the synthetic corpus and the train/test split"},
      {"extract", "segment reviews and keep actionable verbatims"},
      {"pretrain-matcher", "train the base dual encoder on a separate corpus"},
      {"pair", "enumerate (verbatim, image) pairs of the train split"},
      {"score", "cosine-score the pairs with a matcher"},
      {"cluster", "cluster verbatims for stratified sampling"},
      {"stratify", "draw the annotation sample"},
      {"simulate-annotators", "label the sample from generator gold with noisy annotators"},
      {"calibrate", "sweep thresholds over resolved labels and select one"},
      {"finetune-matcher", "fine-tune the matcher on weak positive pairs"},
      {"build-train", "label pairs at the threshold and write prompt/target pairs"},
      {"train-mine", "train the MINE model"},
      {"infer", "decode the test split"},
      {"eval", "score predictions against gold"},
      {"curves", "export threshold curves as CSV"},
  };
  for (const auto& [name, help] : stages) app.add_subcommand(name, help);
  app.add_subcommand("run", "every stage in order");

  std::string host = "127.0.0.1";
  int port = 8080;
  bool serve_all = false;
  auto* serve = app.add_subcommand("annotate-serve", "start the annotation and calibration HTTP service");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)");
  serve->add_flag("--all-pairs", serve_all, "serve every scored pair, not only the stratified sample");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return report_error("usage", e.what(), 2);
  }

  auto log = spdlog::stderr_color_mt("mine");
  log->set_pattern("[%H:%M:%S] %v");
  if (quiet) log->set_level(spdlog::level::warn);

  try {
    pipeline::PipelineConfig config =
        config_path.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::load(config_path);
    if (seed) config.set_seed(*seed);
    if (!workdir.empty()) config.workdir = workdir;
    if (!prompt_kind.empty()) config.prompt_kind = prompt_kind;
    if (!decode_method.empty()) config.decode.method = decode_method;
    if (beam_size) config.decode.beam_size = *beam_size;
    if (top_k) config.decode.top_k = *top_k;
    if (top_p) config.decode.top_p = *top_p;
    config.validate();

    pipeline::RunOptions options;
    options.threshold = threshold;
    if (!policy.empty()) options.policy = policy;
    options.matcher = matcher;
    options.log = [log](const std::string& m) { log->info(m); };
    const fs::path root = config.workdir;
    fs::create_directories(root);
    pipeline::write_json(root / "config.json", config.to_json());

    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "annotate-serve") {
      pipeline::Pipeline p(config, root, options);
      const std::string m = matcher.empty() ? "base" : matcher;
      auto pairs = data::load_pairs(root / ("scored_pairs." + m + ".jsonl"));
      if (!serve_all && fs::exists(root / "sample.json")) {
        std::set<std::string> keep;
        for (const auto& id : pipeline::read_json(root / "sample.json").at("pair_ids")) keep.insert(id);
        std::erase_if(pairs, [&](const data::PairRecord& r) { return !keep.count(r.pair_id); });
      }
      pipeline::ServiceConfig sc;
      sc.pairs = std::move(pairs);
      sc.annotation_log = root / "annotations.jsonl";
      sc.image_root = p.corpus_dir();
      sc.threshold_path = root / ("threshold." + m + ".json");
      sc.grid = calibration::make_grid(config.calibration.grid_lo, config.calibration.grid_hi,
                                       config.calibration.grid_step);
      pipeline::AnnotationService service(std::move(sc));
      const int bound = service.bind(host, port);
      log->info("annotate-serve: listening on http://{}:{}", host, bound);
      service.listen();
      return 0;
    }

    pipeline::Pipeline p(config, root, options);
    const json out = name == "run" ? p.run_all() : p.run_stage(name);
    std::cout << out.dump() << std::endl;
    return 0;
  } catch (const std::exception& e) {
    const auto kind = classify(e);
    return report_error(kind.type, e.what(), kind.code);
  }
}
