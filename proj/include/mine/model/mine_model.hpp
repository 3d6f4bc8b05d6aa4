#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mine/core/tensor.hpp"
#include "mine/data/image.hpp"
#include "mine/data/tokenizer.hpp"
#include "mine/nn/layers.hpp"

// MINE: a ViT-style image encoder, a text encoder grounded in the image via
// cross-attention, and a causal decoder that reuses the encoder's
// cross-attention and FFN sublayers.
namespace mine::model {

struct MineConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;  // per component
  std::size_t ffn_hidden = 256;
  std::size_t patch_size = 8;
  std::size_t image_size = 32;
  std::size_t max_text_len = 64;  // prompt tokens after [ENC]; decoder positions
  std::size_t vocab_size = 0;     // filled from the vocabulary
  double dropout = 0.0;

  void validate() const;
  std::size_t num_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
  nlohmann::json to_json() const;
  static MineConfig from_json(const nlohmann::json& j);
};

// Encoder layer of the grounded text encoder. The decoder's layer at the
// same depth holds copies of ln_cross/cross_attn/ln_ffn/ffn, so both see one
// storage.
struct GroundedLayer {
  nn::LayerNorm ln_self, ln_cross, ln_ffn;
  nn::MultiHeadAttention self_attn, cross_attn;
  nn::FeedForward ffn;

  // A null context skips the cross-attention sublayer (text-only path).
  Tensor operator()(const Tensor& x, const Tensor* context, const Array* self_mask) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

class MineModel {
 public:
  MineModel(MineConfig config, data::Vocabulary vocab, std::uint64_t seed);

  // E' = [e_CLS, e_1..e_N], (N + 1) x d_model. The raster must already be
  // image_size square.
  Tensor encode_image(const data::ImageRaster& image, Rng* dropout_rng = nullptr) const;
  Tensor encode_patches(const Array& patches, Rng* dropout_rng = nullptr) const;

  // z = [m_ENC, m_1..m_L]. [ENC] is prepended when the prompt lacks it;
  // prompts longer than max_text_len are cut (counted in truncated_count()).
  Tensor encode_grounded(std::span<const std::size_t> prompt, const Tensor& image_states,
                         Rng* dropout_rng = nullptr) const;
  // Same stack with every cross-attention sublayer removed.
  Tensor encode_text_only(std::span<const std::size_t> prompt) const;

  // Logits [len x V] for a decoder input starting with [DEC]; row t scores
  // the token after position t. Longer than max_text_len is a ContractError.
  Tensor decoder_logits(std::span<const std::size_t> dec_input, const Tensor& z, Rng* dropout_rng = nullptr) const;
  // Softmax over the vocabulary for the token following the prefix.
  Array next_distribution(std::span<const std::size_t> prefix, const Tensor& z) const;

  std::vector<Parameter> parameters() const;
  const MineConfig& config() const { return config_; }
  const data::Vocabulary& vocab() const { return vocab_; }
  std::size_t truncated_count() const { return truncated_->load(); }

  void save(const std::filesystem::path& dir) const;
  static MineModel load(const std::filesystem::path& dir);

 private:
  std::vector<std::size_t> with_enc(std::span<const std::size_t> prompt) const;
  Tensor run_text(std::span<const std::size_t> prompt, const Tensor* image_states, Rng* dropout_rng) const;

  MineConfig config_;
  data::Vocabulary vocab_;

  nn::Linear patch_embed_;
  Tensor cls_, image_pos_;
  std::vector<nn::EncoderBlock> image_layers_;
  nn::LayerNorm image_norm_;

  Tensor enc_embed_, enc_pos_;
  std::vector<GroundedLayer> enc_layers_;
  nn::LayerNorm enc_norm_;

  Tensor dec_embed_, dec_pos_;
  std::vector<GroundedLayer> dec_layers_;
  nn::LayerNorm dec_norm_;
  nn::Linear head_;

  std::shared_ptr<std::atomic<std::size_t>> truncated_ = std::make_shared<std::atomic<std::size_t>>(0);
};

// One (prompt, image, target) training pair, already tokenized. target ends
// with [EOS]; the image is stored patchified.
struct MineExample {
  std::vector<std::size_t> prompt;
  Array patches;
  std::vector<std::size_t> target;
};

// Tokenizes prompt and target (appending [EOS]); targets longer than the
// decoder can hold are cut before [EOS].
MineExample make_example(const MineModel& model, const std::string& prompt, const data::ImageRaster& image,
                         const std::string& target);

// (1/N) sum_n sum_t -log p(y_t): per-pair token NLL sums averaged over pairs.
Tensor sequence_nll(std::span<const Tensor> logits, std::span<const std::vector<std::size_t>> targets);

struct LossResult {
  Tensor loss;
  std::size_t pairs = 0;  // pairs that contributed
  std::vector<std::string> warnings;
};

// Teacher-forced loss over a batch. Pairs with an empty target are skipped
// with a warning; a batch with nothing left is a ContractError.
LossResult training_loss(const MineModel& model, std::span<const MineExample> batch, Rng* dropout_rng = nullptr);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double lr_min = 1e-5;
  double weight_decay = 0.05;
  std::uint64_t seed = 7;
};

// AdamW with a cosine schedule over all steps. Returns the mean batch loss
// per epoch; on_epoch, when set, may return false to stop early.
std::vector<double> train(MineModel& model, const std::vector<MineExample>& examples, const TrainConfig& config,
                          const std::function<bool(std::size_t, double)>& on_epoch = {});

}  // namespace mine::model
