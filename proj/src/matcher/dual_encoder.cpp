#include "mine/matcher/dual_encoder.hpp"

#include <cmath>
#include <deque>
#include <map>
#include <set>
#include <unordered_set>

#include "mine/core/checkpoint.hpp"
#include "mine/core/error.hpp"
#include "mine/core/ops.hpp"
#include "mine/core/optim.hpp"
#include "mine/core/rng.hpp"

namespace mine::matcher {

using nlohmann::json;

json DualEncoderConfig::to_json() const {
  return {{"embed_dim", embed_dim},       {"heads", heads},          {"text_layers", text_layers},
          {"image_layers", image_layers}, {"ffn_hidden", ffn_hidden}, {"patch_size", patch_size},
          {"image_size", image_size},     {"max_text_len", max_text_len}, {"tau_init", tau_init},
          {"tau_min", tau_min},           {"learn_tau", learn_tau}};
}

DualEncoderConfig DualEncoderConfig::from_json(const json& j) {
  DualEncoderConfig c;
  c.embed_dim = j.at("embed_dim");
  c.heads = j.at("heads");
  c.text_layers = j.at("text_layers");
  c.image_layers = j.at("image_layers");
  c.ffn_hidden = j.at("ffn_hidden");
  c.patch_size = j.at("patch_size");
  c.image_size = j.at("image_size");
  c.max_text_len = j.at("max_text_len");
  c.tau_init = j.at("tau_init");
  c.tau_min = j.at("tau_min");
  c.learn_tau = j.at("learn_tau");
  return c;
}

DualEncoder::DualEncoder(DualEncoderConfig config, data::Vocabulary vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
  const std::size_t d = config_.embed_dim;
  if (config_.image_size % config_.patch_size != 0)
    throw ContractError("image_size must be divisible by patch_size");
  if (!(config_.tau_init >= config_.tau_min && config_.tau_min > 0.0))
    throw ContractError("tau_init must be >= tau_min > 0");
  Rng rng(seed);
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  token_embed_ = nn::normal_param({vocab_.size(), d}, emb_std, rng);
  text_pos_ = nn::normal_param({config_.max_text_len, d}, 0.02, rng);
  for (std::size_t l = 0; l < config_.text_layers; ++l)
    text_blocks_.emplace_back(d, config_.heads, config_.ffn_hidden, rng);
  text_norm_ = nn::LayerNorm(d);
  text_proj_ = nn::Linear(d, d, rng);
  const std::size_t patch_dim = config_.patch_size * config_.patch_size * 3;
  const std::size_t n_patches = (config_.image_size / config_.patch_size) * (config_.image_size / config_.patch_size);
  patch_embed_ = nn::Linear(patch_dim, d, rng);
  patch_pos_ = nn::normal_param({n_patches, d}, 0.02, rng);
  for (std::size_t l = 0; l < config_.image_layers; ++l)
    image_blocks_.emplace_back(d, config_.heads, config_.ffn_hidden, rng);
  image_norm_ = nn::LayerNorm(d);
  image_proj_ = nn::Linear(d, d, rng);
  log_tau_ = Tensor(Array::scalar(std::log(config_.tau_init)), config_.learn_tau);
}

Tensor DualEncoder::tau() const { return exp(log_tau_); }

void DualEncoder::clamp_tau() {
  double& lt = log_tau_.mutable_value()[0];
  lt = std::max(lt, std::log(config_.tau_min));
}

std::vector<Parameter> DualEncoder::parameters() const {
  nn::ParamList out;
  out.push_back({"text.token_embed", token_embed_});
  out.push_back({"text.pos", text_pos_});
  for (std::size_t l = 0; l < text_blocks_.size(); ++l) text_blocks_[l].collect("text.block" + std::to_string(l), out);
  text_norm_.collect("text.norm", out);
  text_proj_.collect("text.proj", out);
  patch_embed_.collect("image.patch_embed", out);
  out.push_back({"image.pos", patch_pos_});
  for (std::size_t l = 0; l < image_blocks_.size(); ++l)
    image_blocks_[l].collect("image.block" + std::to_string(l), out);
  image_norm_.collect("image.norm", out);
  image_proj_.collect("image.proj", out);
  if (config_.learn_tau) out.push_back({"log_tau", log_tau_});
  return out;
}

Tensor DualEncoder::encode_text(const std::string& text) const {
  auto ids = data::tokenize(text, vocab_);
  if (ids.empty()) throw ContractError("encode_text: empty text");
  if (ids.size() > config_.max_text_len) {
    ids.resize(config_.max_text_len);
    ++truncated_;
  }
  Tensor x = add(embedding(token_embed_, ids), slice_rows(text_pos_, 0, ids.size()));
  for (const auto& b : text_blocks_) x = b(x);
  return text_proj_(mean_rows(text_norm_(x)));
}

Tensor DualEncoder::encode_texts(std::span<const std::string> texts) const {
  if (texts.empty()) throw ContractError("encode_texts: no texts");
  std::vector<Tensor> rows;
  rows.reserve(texts.size());
  for (const auto& t : texts) rows.push_back(encode_text(t));
  return l2_normalize_rows(concat_rows(rows));
}

Tensor DualEncoder::encode_images(std::span<const data::ImageRaster> images) const {
  if (images.empty()) throw ContractError("encode_images: no images");
  std::vector<Tensor> rows;
  rows.reserve(images.size());
  for (const auto& raw : images) {
    const bool fits = raw.width == config_.image_size && raw.height == config_.image_size;
    const data::ImageRaster img = fits ? raw : data::resize_nearest(raw, config_.image_size, config_.image_size);
    Tensor x = add(patch_embed_(Tensor(data::patchify(img, config_.patch_size))), patch_pos_);
    for (const auto& b : image_blocks_) x = b(x);
    rows.push_back(image_proj_(mean_rows(image_norm_(x))));
  }
  return l2_normalize_rows(concat_rows(rows));
}

void DualEncoder::save(const std::filesystem::path& dir) const {
  json cfg = config_.to_json();
  cfg["kind"] = "dual_encoder";
  const auto params = parameters();
  std::vector<Parameter> all = params;
  if (!config_.learn_tau) all.push_back({"log_tau", log_tau_});
  save_checkpoint(dir, all, cfg);
  vocab_.save(dir / "vocab.json");
}

DualEncoder DualEncoder::load(const std::filesystem::path& dir) {
  const json cfg = read_checkpoint_config(dir);
  if (cfg.value("kind", "") != "dual_encoder") throw IntegrityError("checkpoint is not a dual encoder");
  DualEncoder model(DualEncoderConfig::from_json(cfg), data::Vocabulary::load(dir / "vocab.json"), 0);
  std::vector<Parameter> all = model.parameters();
  if (!model.config_.learn_tau) all.push_back({"log_tau", model.log_tau_});
  load_checkpoint_values(dir, all);
  return model;
}

Tensor similarity_logits(const Tensor& image_emb, const Tensor& text_emb, const Tensor& tau) {
  if (image_emb.cols() != text_emb.cols())
    throw DimensionError("similarity_logits: embedding dims differ, " + shape_str(image_emb.shape()) + " vs " +
                         shape_str(text_emb.shape()));
  if (tau.size() != 1 || !(tau.item() > 0.0)) throw ContractError("similarity_logits: tau must be a positive scalar");
  return div_scalar(matmul_nt(l2_normalize_rows(image_emb), l2_normalize_rows(text_emb)), tau);
}

Tensor symmetric_loss(const Tensor& logits, std::span<const std::size_t> labels) {
  const std::size_t n = logits.rows();
  if (logits.value().rank() != 2 || logits.cols() != n)
    throw ContractError("symmetric_loss: logits must be square, got " + shape_str(logits.shape()));
  if (labels.size() != n) throw ContractError("symmetric_loss: need one label per image");
  std::vector<std::size_t> inverse(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= n || inverse[labels[i]] != n) throw ContractError("symmetric_loss: labels are not a bijection");
    inverse[labels[i]] = i;
  }
  const Tensor image_axis = cross_entropy(logits, labels);
  const Tensor text_axis = cross_entropy(transpose(logits), inverse);
  return scale(add(image_axis, text_axis), 0.5);
}

Tensor symmetric_loss(const Tensor& logits) {
  std::vector<std::size_t> diag(logits.rows());
  for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = i;
  return symmetric_loss(logits, diag);
}

std::vector<double> finetune(DualEncoder& model, const std::vector<TrainingPair>& pairs,
                             const FinetuneConfig& config) {
  if (config.batch_size == 0) throw ContractError("finetune: batch_size must be positive");
  AdamW opt(model.parameters(), {0.9, 0.999, 1e-8, config.weight_decay});
  Rng rng(config.seed);
  std::deque<std::size_t> queue;
  std::vector<double> trace;
  trace.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    // Draw a batch with distinct images and texts, refilling the queue
    // with a fresh permutation when it runs low.
    std::vector<std::size_t> batch;
    std::unordered_set<std::string> keys, texts;
    std::deque<std::size_t> deferred;
    std::size_t refills = 0;
    while (batch.size() < config.batch_size && batch.size() < pairs.size()) {
      if (queue.empty()) {
        if (refills++ > 1) break;
        std::vector<std::size_t> perm(pairs.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        rng.shuffle(perm);
        queue.insert(queue.end(), perm.begin(), perm.end());
      }
      const std::size_t i = queue.front();
      queue.pop_front();
      if (keys.count(pairs[i].image_key) || texts.count(pairs[i].text)) {
        deferred.push_back(i);
        continue;
      }
      keys.insert(pairs[i].image_key);
      texts.insert(pairs[i].text);
      batch.push_back(i);
    }
    queue.insert(queue.begin(), deferred.begin(), deferred.end());
    if (batch.empty()) break;

    std::vector<data::ImageRaster> images;
    std::vector<std::string> batch_texts;
    for (std::size_t i : batch) {
      images.push_back(*pairs[i].image);
      batch_texts.push_back(pairs[i].text);
    }
    opt.zero_grad();
    const Tensor loss =
        symmetric_loss(similarity_logits(model.encode_images(images), model.encode_texts(batch_texts), model.tau()));
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("matcher finetune: non-finite loss at step " + std::to_string(step));
    trace.push_back(value);
    backward(loss);
    opt.step(cosine_lr(step, config.steps, config.lr, config.lr_min));
    model.clamp_tau();
  }
  return trace;
}

std::vector<data::PairRecord> score_pairs(const DualEncoder& model, const std::vector<data::Verbatim>& verbatims,
                                          const std::vector<data::ReviewRecord>& reviews,
                                          const ImageLoader& load_image) {
  NoGradGuard no_grad;
  std::map<std::string, const data::ReviewRecord*> by_id;
  for (const auto& r : reviews) by_id[r.review_id] = &r;
  // Verbatims grouped by review, keeping first-appearance order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<const data::Verbatim*>> groups;
  for (const auto& v : verbatims) {
    if (!by_id.count(v.review_id)) throw ContractError("score_pairs: verbatim " + v.verbatim_id + " has no review");
    auto& g = groups[v.review_id];
    if (g.empty()) order.push_back(v.review_id);
    g.push_back(&v);
  }
  std::vector<data::PairRecord> out;
  for (const auto& rid : order) {
    const auto& group = groups[rid];
    std::vector<std::string> texts;
    for (const auto* v : group) texts.push_back(v->text);
    const Array text_emb = model.encode_texts(texts).value();
    const auto& paths = by_id[rid]->image_paths;
    for (std::size_t k = 0; k < paths.size(); ++k) {
      std::optional<Array> img_emb;
      std::optional<std::string> error;
      try {
        const data::ImageRaster img = load_image(paths[k]);
        img_emb = model.encode_images(std::span<const data::ImageRaster>(&img, 1)).value();
      } catch (const std::exception& e) {
        error = e.what();
      }
      for (std::size_t t = 0; t < group.size(); ++t) {
        data::PairRecord p;
        p.pair_id = group[t]->verbatim_id + "@" + std::to_string(k);
        p.verbatim_id = group[t]->verbatim_id;
        p.review_id = rid;
        p.verbatim = group[t]->text;
        p.image_path = paths[k];
        p.category = by_id[rid]->category;
        p.error = error;
        if (img_emb) {
          double dot = 0.0;
          for (std::size_t c = 0; c < text_emb.cols(); ++c) dot += text_emb.at(t, c) * img_emb->at(0, c);
          p.score = std::clamp(dot, -1.0, 1.0);
        }
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

std::vector<data::PairRecord> label_pairs(std::vector<data::PairRecord> pairs, double threshold) {
  if (!std::isfinite(threshold)) throw ContractError("label_pairs: threshold must be finite");
  for (auto& p : pairs) {
    if (p.error) {
      p.label.reset();
      continue;
    }
    p.label = p.score >= threshold ? data::PairLabel::kPositive : data::PairLabel::kNegative;
  }
  return pairs;
}

ClusterAssignment cluster_embeddings(const Array& rows, double link_threshold) {
  ClusterAssignment out;
  const std::size_t n = rows.rank() == 0 ? 0 : rows.rows();
  const std::size_t d = n ? rows.cols() : 0;
  std::vector<std::size_t> leaders;
  out.cluster_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t found = leaders.size();
    for (std::size_t c = 0; c < leaders.size() && found == leaders.size(); ++c) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += rows.at(i, k) * rows.at(leaders[c], k);
      if (dot >= link_threshold) found = c;
    }
    if (found == leaders.size()) {
      leaders.push_back(i);
      out.members.emplace_back();
    }
    out.cluster_of[i] = found;
    out.members[found].push_back(i);
  }
  return out;
}

ClusterAssignment cluster_verbatims(const std::vector<std::string>& texts, const DualEncoder& model,
                                    double link_threshold) {
  if (texts.empty()) return {};
  NoGradGuard no_grad;
  return cluster_embeddings(model.encode_texts(texts).value(), link_threshold);
}

}  // namespace mine::matcher
