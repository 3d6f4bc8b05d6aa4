#include "mine/model/mine_model.hpp"

#include <cmath>

#include "mine/core/checkpoint.hpp"
#include "mine/core/error.hpp"
#include "mine/core/ops.hpp"
#include "mine/core/optim.hpp"
#include "mine/core/rng.hpp"

namespace mine::model {

using nlohmann::json;

void MineConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ContractError("d_model " + std::to_string(d_model) + " not divisible by n_heads " + std::to_string(n_heads));
  if (patch_size == 0 || image_size % patch_size != 0)
    throw ContractError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                        std::to_string(patch_size));
  if (max_text_len < 2) throw ContractError("max_text_len must be at least 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must lie in [0, 1)");
}

json MineConfig::to_json() const {
  return {{"d_model", d_model},       {"n_heads", n_heads},           {"n_layers", n_layers},
          {"ffn_hidden", ffn_hidden}, {"patch_size", patch_size},     {"image_size", image_size},
          {"max_text_len", max_text_len}, {"vocab_size", vocab_size}, {"dropout", dropout}};
}

MineConfig MineConfig::from_json(const json& j) {
  MineConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.image_size = j.value("image_size", c.image_size);
  c.max_text_len = j.value("max_text_len", c.max_text_len);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

Tensor GroundedLayer::operator()(const Tensor& x, const Tensor* context, const Array* self_mask) const {
  const Tensor h = ln_self(x);
  Tensor y = add(x, self_attn(h, h, self_mask));
  if (context) y = add(y, cross_attn(ln_cross(y), *context));
  return add(y, ffn(ln_ffn(y)));
}

void GroundedLayer::collect(const std::string& prefix, nn::ParamList& out) const {
  ln_self.collect(prefix + ".ln_self", out);
  self_attn.collect(prefix + ".self_attn", out);
  ln_cross.collect(prefix + ".ln_cross", out);
  cross_attn.collect(prefix + ".cross_attn", out);
  ln_ffn.collect(prefix + ".ln_ffn", out);
  ffn.collect(prefix + ".ffn", out);
}

MineModel::MineModel(MineConfig config, data::Vocabulary vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
  if (config_.vocab_size != 0 && config_.vocab_size != vocab_.size())
    throw ContractError("config vocab_size " + std::to_string(config_.vocab_size) + " but vocabulary has " +
                        std::to_string(vocab_.size()));
  config_.vocab_size = vocab_.size();
  config_.validate();
  const std::size_t d = config_.d_model, h = config_.n_heads, f = config_.ffn_hidden;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(seed);

  patch_embed_ = nn::Linear(config_.patch_size * config_.patch_size * 3, d, rng);
  cls_ = nn::normal_param({1, d}, 0.02, rng);
  image_pos_ = nn::normal_param({config_.num_patches() + 1, d}, 0.02, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) image_layers_.emplace_back(d, h, f, rng);
  image_norm_ = nn::LayerNorm(d);

  enc_embed_ = nn::normal_param({vocab_.size(), d}, emb_std, rng);
  enc_pos_ = nn::normal_param({config_.max_text_len + 1, d}, 0.02, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    GroundedLayer g;
    g.ln_self = nn::LayerNorm(d);
    g.ln_cross = nn::LayerNorm(d);
    g.ln_ffn = nn::LayerNorm(d);
    g.self_attn = nn::MultiHeadAttention(d, h, rng);
    g.cross_attn = nn::MultiHeadAttention(d, h, rng);
    g.ffn = nn::FeedForward(d, f, rng);
    enc_layers_.push_back(std::move(g));
  }
  enc_norm_ = nn::LayerNorm(d);

  dec_embed_ = nn::normal_param({vocab_.size(), d}, emb_std, rng);
  dec_pos_ = nn::normal_param({config_.max_text_len, d}, 0.02, rng);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    GroundedLayer g = enc_layers_[l];  // copies share the cross/FFN tensors
    g.ln_self = nn::LayerNorm(d);
    g.self_attn = nn::MultiHeadAttention(d, h, rng);
    dec_layers_.push_back(std::move(g));
  }
  dec_norm_ = nn::LayerNorm(d);
  head_ = nn::Linear(d, vocab_.size(), rng);
}

Tensor MineModel::encode_patches(const Array& patches, Rng* dropout_rng) const {
  const std::size_t n = config_.num_patches();
  const std::size_t pd = config_.patch_size * config_.patch_size * 3;
  if (patches.rank() != 2 || patches.rows() != n || patches.cols() != pd)
    throw DimensionError("encode_patches: expected [" + std::to_string(n) + " x " + std::to_string(pd) + "], got " +
                         shape_str(patches.shape()));
  Tensor x = add(concat_rows({cls_, patch_embed_(Tensor(patches))}), image_pos_);
  x = nn::dropout(x, config_.dropout, dropout_rng);
  for (const auto& b : image_layers_) x = b(x);
  return image_norm_(x);
}

Tensor MineModel::encode_image(const data::ImageRaster& image, Rng* dropout_rng) const {
  if (image.width != config_.image_size || image.height != config_.image_size)
    throw DimensionError("encode_image: expected " + std::to_string(config_.image_size) + "x" +
                         std::to_string(config_.image_size) + " image, got " + std::to_string(image.width) + "x" +
                         std::to_string(image.height));
  return encode_patches(data::patchify(image, config_.patch_size), dropout_rng);
}

std::vector<std::size_t> MineModel::with_enc(std::span<const std::size_t> prompt) const {
  std::vector<std::size_t> ids;
  ids.reserve(prompt.size() + 1);
  if (prompt.empty() || prompt.front() != data::kEnc) ids.push_back(data::kEnc);
  ids.insert(ids.end(), prompt.begin(), prompt.end());
  if (ids.size() > config_.max_text_len + 1) {
    ids.resize(config_.max_text_len + 1);
    ++*truncated_;
  }
  for (std::size_t id : ids)
    if (id >= vocab_.size()) throw IndexError("prompt token " + std::to_string(id) + " outside vocabulary");
  return ids;
}

Tensor MineModel::run_text(std::span<const std::size_t> prompt, const Tensor* image_states, Rng* dropout_rng) const {
  const auto ids = with_enc(prompt);
  Tensor x = add(embedding(enc_embed_, ids), slice_rows(enc_pos_, 0, ids.size()));
  x = nn::dropout(x, config_.dropout, dropout_rng);
  for (const auto& layer : enc_layers_) x = layer(x, image_states, nullptr);
  return enc_norm_(x);
}

Tensor MineModel::encode_grounded(std::span<const std::size_t> prompt, const Tensor& image_states,
                                  Rng* dropout_rng) const {
  return run_text(prompt, &image_states, dropout_rng);
}

Tensor MineModel::encode_text_only(std::span<const std::size_t> prompt) const {
  return run_text(prompt, nullptr, nullptr);
}

Tensor MineModel::decoder_logits(std::span<const std::size_t> dec_input, const Tensor& z, Rng* dropout_rng) const {
  if (dec_input.empty() || dec_input.front() != data::kDec)
    throw ContractError("decoder input must start with [DEC]");
  if (dec_input.size() > config_.max_text_len)
    throw ContractError("decoder position " + std::to_string(dec_input.size() - 1) + " beyond max length " +
                        std::to_string(config_.max_text_len));
  for (std::size_t id : dec_input)
    if (id >= vocab_.size()) throw IndexError("decoder token " + std::to_string(id) + " outside vocabulary");
  const std::size_t n = dec_input.size();
  Tensor x = add(embedding(dec_embed_, dec_input), slice_rows(dec_pos_, 0, n));
  x = nn::dropout(x, config_.dropout, dropout_rng);
  const Array mask = nn::causal_mask(n);
  for (const auto& layer : dec_layers_) x = layer(x, &z, &mask);
  return head_(dec_norm_(x));
}

Array MineModel::next_distribution(std::span<const std::size_t> prefix, const Tensor& z) const {
  NoGradGuard guard;
  const Tensor logits = decoder_logits(prefix, z);
  const std::size_t v = logits.cols();
  const Tensor last = softmax(slice_rows(logits, logits.rows() - 1, logits.rows()), 1);
  Array out({v});
  for (std::size_t i = 0; i < v; ++i) out[i] = last.value()[i];
  return out;
}

std::vector<Parameter> MineModel::parameters() const {
  nn::ParamList out;
  patch_embed_.collect("image.patch_embed", out);
  out.push_back({"image.cls", cls_});
  out.push_back({"image.pos", image_pos_});
  for (std::size_t l = 0; l < image_layers_.size(); ++l)
    image_layers_[l].collect("image.layer" + std::to_string(l), out);
  image_norm_.collect("image.norm", out);
  out.push_back({"encoder.token_embed", enc_embed_});
  out.push_back({"encoder.pos", enc_pos_});
  for (std::size_t l = 0; l < enc_layers_.size(); ++l) enc_layers_[l].collect("encoder.layer" + std::to_string(l), out);
  enc_norm_.collect("encoder.norm", out);
  out.push_back({"decoder.token_embed", dec_embed_});
  out.push_back({"decoder.pos", dec_pos_});
  for (std::size_t l = 0; l < dec_layers_.size(); ++l) dec_layers_[l].collect("decoder.layer" + std::to_string(l), out);
  dec_norm_.collect("decoder.norm", out);
  head_.collect("decoder.head", out);
  return out;
}

void MineModel::save(const std::filesystem::path& dir) const {
  json cfg = config_.to_json();
  cfg["kind"] = "mine";
  save_checkpoint(dir, parameters(), cfg);
  vocab_.save(dir / "vocab.json");
}

MineModel MineModel::load(const std::filesystem::path& dir) {
  const json cfg = read_checkpoint_config(dir);
  if (cfg.value("kind", "") != "mine") throw IntegrityError("checkpoint is not a MINE model");
  MineModel model(MineConfig::from_json(cfg), data::Vocabulary::load(dir / "vocab.json"), 0);
  load_checkpoint_values(dir, model.parameters());
  return model;
}

MineExample make_example(const MineModel& model, const std::string& prompt, const data::ImageRaster& image,
                         const std::string& target) {
  MineExample ex;
  ex.prompt = data::tokenize(prompt, model.vocab());
  const auto& cfg = model.config();
  const bool fits = image.width == cfg.image_size && image.height == cfg.image_size;
  ex.patches = data::patchify(fits ? image : data::resize_nearest(image, cfg.image_size, cfg.image_size),
                              cfg.patch_size);
  ex.target = data::tokenize(target, model.vocab());
  // [DEC] + target must fit the decoder positions.
  if (ex.target.size() + 1 > cfg.max_text_len) ex.target.resize(cfg.max_text_len - 1);
  ex.target.push_back(data::kEos);
  return ex;
}

Tensor sequence_nll(std::span<const Tensor> logits, std::span<const std::vector<std::size_t>> targets) {
  if (logits.size() != targets.size()) throw ContractError("sequence_nll: one target per logits matrix");
  if (logits.empty()) throw ContractError("sequence_nll: empty batch");
  std::vector<Tensor> sums;
  sums.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i].rows() != targets[i].size())
      throw DimensionError("sequence_nll: " + std::to_string(logits[i].rows()) + " logit rows for " +
                           std::to_string(targets[i].size()) + " targets");
    sums.push_back(nll_sum(logits[i], targets[i]));
  }
  Tensor total = sums.front();
  for (std::size_t i = 1; i < sums.size(); ++i) total = add(total, sums[i]);
  return scale(total, 1.0 / static_cast<double>(sums.size()));
}

LossResult training_loss(const MineModel& model, std::span<const MineExample> batch, Rng* dropout_rng) {
  LossResult out;
  std::vector<Tensor> logits;
  std::vector<std::vector<std::size_t>> targets;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    if (ex.target.empty()) {
      out.warnings.push_back("pair " + std::to_string(i) + ": empty target, skipped");
      continue;
    }
    if (ex.target.back() != data::kEos) throw ContractError("pair " + std::to_string(i) + ": target must end with [EOS]");
    std::vector<std::size_t> dec_input{data::kDec};
    dec_input.insert(dec_input.end(), ex.target.begin(), ex.target.end() - 1);
    const Tensor image = model.encode_patches(ex.patches, dropout_rng);
    const Tensor z = model.encode_grounded(ex.prompt, image, dropout_rng);
    logits.push_back(model.decoder_logits(dec_input, z, dropout_rng));
    targets.push_back(ex.target);
  }
  if (logits.empty()) throw ContractError("training_loss: no pair with a target");
  out.pairs = logits.size();
  out.loss = sequence_nll(logits, targets);
  return out;
}

std::vector<double> train(MineModel& model, const std::vector<MineExample>& examples, const TrainConfig& config,
                          const std::function<bool(std::size_t, double)>& on_epoch) {
  if (examples.empty()) throw ContractError("train: no examples");
  if (config.batch_size == 0) throw ContractError("train: batch_size must be positive");
  const auto params = model.parameters();
  AdamW opt(params, {0.9, 0.999, 1e-8, config.weight_decay});
  Rng rng(config.seed);
  Rng dropout_rng = rng.fork(1);
  Rng* drop = model.config().dropout > 0.0 ? &dropout_rng : nullptr;
  const std::size_t batches = (examples.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.epochs;
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> trace;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<MineExample> batch;
      for (std::size_t i = b * config.batch_size; i < std::min(order.size(), (b + 1) * config.batch_size); ++i)
        batch.push_back(examples[order[i]]);
      const LossResult res = training_loss(model, batch, drop);
      const double loss = res.loss.item();
      if (!std::isfinite(loss)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
      opt.zero_grad();
      backward(res.loss);
      opt.step(cosine_lr(step++, total_steps, config.lr, config.lr_min));
      sum += loss;
    }
    trace.push_back(sum / static_cast<double>(batches));
    if (on_epoch && !on_epoch(epoch, trace.back())) break;
  }
  return trace;
}

}  // namespace mine::model
