#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mine/data/corpus.hpp"
#include "mine/data/image.hpp"

// Programmatic stand-in for a review dataset. Reviews are templated remarks
// about product attributes; images render a glyph for one or two attributes.
// Because the generator knows which attribute each sentence and each image
// carries, every (sentence, image) pair has an exact relevance label.
namespace mine::data {

struct AttributeSpec {
  std::string name;
  bool visual = false;  // only visual attributes are ever drawn
  std::vector<std::string> negative;
  std::vector<std::string> positive;
};

// Fixed catalog: visual attributes first (their index is the glyph id),
// then non-visual topics.
const std::vector<AttributeSpec>& attribute_catalog();
// Sentences with no sentiment-bearing words.
const std::vector<std::string>& neutral_sentences();
const std::vector<std::string>& category_names();

struct SyntheticSpec {
  std::size_t num_reviews = 240;
  std::size_t num_categories = 4;
  std::uint64_t seed = 7;
  std::size_t image_size = 32;
  // Target share of relevant pairs among (actionable sentence, image) pairs.
  double positive_fraction = 0.3;
  double two_image_prob = 0.25;
  // Chance an image also shows a glyph for an attribute nobody mentioned.
  double distractor_prob = 0.2;
  double negative_prob = 0.7;
};

struct SentenceInfo {
  std::string text;       // as it appears in the review, no terminator
  std::string attribute;  // empty for neutral filler
  std::string polarity;   // positive | negative | neutral
};

struct SyntheticImage {
  std::string path;  // relative to the corpus directory
  ImageRaster raster;
  std::vector<std::string> depicted;
};

struct GoldPair {
  std::string review_id;
  std::string image_path;
  std::string verbatim;
  std::string attribute;
  std::string polarity;
  bool relevant = false;

  bool operator==(const GoldPair&) const = default;
};

struct SyntheticCorpus {
  std::vector<ReviewRecord> reviews;
  std::vector<SyntheticImage> images;
  std::vector<GoldPair> gold;  // every (sentence, image) pair of every review
  std::vector<std::string> categories;
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

// Writes corpus.jsonl, gold.jsonl and images/*.ppm under dir.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);
std::vector<GoldPair> load_gold(const std::filesystem::path& path);

// Relevance rule used by the generator: a sentence is relevant to an image
// iff it is non-neutral and its attribute is drawn in that image.
bool gold_rule(const SentenceInfo& sentence, const std::vector<std::string>& depicted);

// Draws the glyph for a visual attribute with its top-left corner at (x, y).
void draw_glyph(ImageRaster& image, std::size_t attribute, std::size_t x, std::size_t y);
// Glyph tile edge in pixels.
inline constexpr std::size_t kGlyphSize = 8;

}  // namespace mine::data
