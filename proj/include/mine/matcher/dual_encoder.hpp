#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mine/core/tensor.hpp"
#include "mine/data/corpus.hpp"
#include "mine/data/image.hpp"
#include "mine/data/tokenizer.hpp"
#include "mine/nn/layers.hpp"

// Contrastive image/text matcher: two small transformer encoders whose
// mean-pooled, projected outputs are compared by temperature-scaled cosine.
namespace mine::matcher {

struct DualEncoderConfig {
  std::size_t embed_dim = 32;
  std::size_t heads = 2;
  std::size_t text_layers = 0;  // 0: pooled token embeddings, no self-attention
  std::size_t image_layers = 1;
  std::size_t ffn_hidden = 64;
  std::size_t patch_size = 8;
  std::size_t image_size = 32;
  std::size_t max_text_len = 64;
  double tau_init = 0.07;
  double tau_min = 0.01;
  bool learn_tau = true;

  nlohmann::json to_json() const;
  static DualEncoderConfig from_json(const nlohmann::json& j);
};

class DualEncoder {
 public:
  DualEncoder(DualEncoderConfig config, data::Vocabulary vocab, std::uint64_t seed);

  // Unit-norm rows, one per input. Images are resized to the configured size.
  Tensor encode_images(std::span<const data::ImageRaster> images) const;
  // Texts longer than max_text_len are truncated (counted in
  // truncated_count()). A text with no tokens is a ContractError.
  Tensor encode_texts(std::span<const std::string> texts) const;

  // exp(log_tau); a constant when tau is frozen.
  Tensor tau() const;
  // Keeps tau >= tau_min after an optimizer step.
  void clamp_tau();

  std::vector<Parameter> parameters() const;
  const DualEncoderConfig& config() const { return config_; }
  const data::Vocabulary& vocab() const { return vocab_; }
  std::size_t truncated_count() const { return truncated_; }

  void save(const std::filesystem::path& dir) const;
  static DualEncoder load(const std::filesystem::path& dir);

 private:
  Tensor encode_text(const std::string& text) const;

  DualEncoderConfig config_;
  data::Vocabulary vocab_;
  Tensor token_embed_, text_pos_;
  std::vector<nn::EncoderBlock> text_blocks_;
  nn::LayerNorm text_norm_;
  nn::Linear text_proj_;
  nn::Linear patch_embed_;
  Tensor patch_pos_;
  std::vector<nn::EncoderBlock> image_blocks_;
  nn::LayerNorm image_norm_;
  nn::Linear image_proj_;
  Tensor log_tau_;
  mutable std::size_t truncated_ = 0;
};

// logits[i][t] = cos(e_I[i], e_T[t]) / tau. Rows are normalized here, so
// any non-zero vectors are accepted; a zero row is a ContractError.
Tensor similarity_logits(const Tensor& image_emb, const Tensor& text_emb, const Tensor& tau);

// Mean of the image-axis and text-axis cross entropies. labels[i] is the
// text matched to image i and must be a permutation; by default the
// diagonal.
Tensor symmetric_loss(const Tensor& logits, std::span<const std::size_t> labels);
Tensor symmetric_loss(const Tensor& logits);

struct TrainingPair {
  const data::ImageRaster* image = nullptr;
  std::string image_key;  // pairs sharing a key never meet in one batch
  std::string text;
};

struct FinetuneConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double lr_min = 1e-5;
  double weight_decay = 0.05;
  std::uint64_t seed = 7;
};

// In-batch-negative training with symmetric_loss. Returns the loss of every
// step. A non-finite loss raises NumericError naming the step.
std::vector<double> finetune(DualEncoder& model, const std::vector<TrainingPair>& pairs,
                             const FinetuneConfig& config);

using ImageLoader = std::function<data::ImageRaster(const std::string& image_path)>;

// One record per (verbatim, image of its review), scores are raw cosines.
// An image the loader cannot read yields error records for its pairs.
std::vector<data::PairRecord> score_pairs(const DualEncoder& model,
                                          const std::vector<data::Verbatim>& verbatims,
                                          const std::vector<data::ReviewRecord>& reviews,
                                          const ImageLoader& load_image);

// label = positive iff score >= threshold. Error records stay unlabeled.
std::vector<data::PairRecord> label_pairs(std::vector<data::PairRecord> pairs, double threshold);

struct ClusterAssignment {
  std::vector<std::size_t> cluster_of;  // per input position
  std::vector<std::vector<std::size_t>> members;
  std::size_t size() const { return members.size(); }
};

// Greedy leader clustering over unit rows: each row joins the first cluster
// whose leader has cosine >= link_threshold, or founds a new one.
ClusterAssignment cluster_embeddings(const Array& unit_rows, double link_threshold);
ClusterAssignment cluster_verbatims(const std::vector<std::string>& texts, const DualEncoder& model,
                                    double link_threshold);

}  // namespace mine::matcher
