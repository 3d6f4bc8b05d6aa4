#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "mine/core/error.hpp"
#include "mine/data/corpus.hpp"
#include "mine/data/image.hpp"
#include "mine/data/synthetic.hpp"
#include "mine/data/tokenizer.hpp"
#include "support/tempdir.hpp"

using namespace mine;
using namespace mine::data;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string normalize(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

TEST(LoadCorpus, EmptyFile) {
  TempDir dir;
  write_text(dir / "c.jsonl", "");
  const auto load = load_corpus(dir / "c.jsonl");
  EXPECT_TRUE(load.ok());
  EXPECT_TRUE(load.records.empty());
}

TEST(LoadCorpus, OneLine) {
  TempDir dir;
  write_text(dir / "c.jsonl",
             R"({"review_id":"a1","text":"Great bag!","image_paths":["x.ppm"],"category":"bags"})"
             "\n");
  const auto load = load_corpus(dir / "c.jsonl");
  ASSERT_TRUE(load.ok());
  ASSERT_EQ(load.records.size(), 1u);
  EXPECT_EQ(load.records[0], (ReviewRecord{"a1", "Great bag!", {"x.ppm"}, "bags"}));
}

TEST(LoadCorpus, MissingCategoryNamesFieldAndLine) {
  TempDir dir;
  write_text(dir / "c.jsonl", R"({"review_id":"a1","text":"t","image_paths":["x.ppm"]})" "\n");
  const auto load = load_corpus(dir / "c.jsonl");
  ASSERT_EQ(load.errors.size(), 1u);
  EXPECT_EQ(load.errors[0].line, 1u);
  EXPECT_NE(load.errors[0].message.find("category"), std::string::npos);
}

TEST(LoadCorpus, ReportsEveryBadLineAndKeepsOrder) {
  TempDir dir;
  write_text(dir / "c.jsonl",
             R"({"review_id":"b","text":"t","image_paths":["x"],"category":"c"})" "\n"
             "not json\n"
             R"({"review_id":"a","text":"t","image_paths":["y"],"category":"c"})" "\n"
             R"({"review_id":"a","text":"u","image_paths":["z"],"category":"c"})" "\n");
  const auto load = load_corpus(dir / "c.jsonl");
  ASSERT_EQ(load.records.size(), 2u);
  EXPECT_EQ(load.records[0].review_id, "b");
  EXPECT_EQ(load.records[1].review_id, "a");
  ASSERT_EQ(load.errors.size(), 2u);
  EXPECT_EQ(load.errors[0].line, 2u);
  EXPECT_EQ(load.errors[1].line, 4u);
}

TEST(LoadCorpus, SaveThenLoadIsIdempotent) {
  TempDir dir;
  std::vector<ReviewRecord> recs = {{"r1", "The strap snapped. \"Quoted\" text", {"a.ppm", "b.ppm"}, "bags"},
                                    {"r2", "café", {"c.ppm"}, "shoes"}};
  save_corpus(dir / "c.jsonl", recs);
  const auto first = load_corpus(dir / "c.jsonl");
  ASSERT_TRUE(first.ok());
  EXPECT_EQ(first.records, recs);
  save_corpus(dir / "d.jsonl", first.records);
  EXPECT_EQ(read_bytes(dir / "c.jsonl"), read_bytes(dir / "d.jsonl"));
}

TEST(Pairs, RoundTripRoundsScoresOnWrite) {
  TempDir dir;
  PairRecord p{"p1", "v1", "r1", "the finish came off", "img.ppm", "bags", 0.28731, PairLabel::kPositive, 0.5, {}};
  save_pairs(dir / "p.jsonl", {p});
  const auto back = load_pairs(dir / "p.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_DOUBLE_EQ(back[0].score, 0.29);
  EXPECT_EQ(back[0].label, PairLabel::kPositive);
  EXPECT_EQ(back[0].category, "bags");
  EXPECT_EQ(back[0].confidence, 0.5);
  EXPECT_NE(read_bytes(dir / "p.jsonl").find("\"score\":0.29"), std::string::npos);
}

TEST(FormatScore, TwoDecimals) {
  EXPECT_EQ(format_score(0.3), "0.30");
  EXPECT_EQ(format_score(-0.001), "0.00");
  EXPECT_EQ(format_score(0.125), "0.13");  // halves round away from zero
  EXPECT_EQ(format_score(-0.5), "-0.50");
}

TEST(Tokenize, EmptyText) {
  Vocabulary v;
  EXPECT_TRUE(tokenize("", v).empty());
}

TEST(Tokenize, LowercasesAndSplitsPunctuation) {
  Vocabulary v;
  const auto great = v.add("great");
  const auto bag = v.add("bag");
  const auto bang = v.add("!");
  EXPECT_EQ(tokenize("Great bag!", v), (std::vector<std::size_t>{great, bag, bang}));
  EXPECT_EQ(tokenize("great shoe", v), (std::vector<std::size_t>{great, kUnk}));
}

TEST(Vocabulary, ReservedIds) {
  Vocabulary v;
  EXPECT_EQ(v.size(), kNumSpecial);
  EXPECT_EQ(v.token(kPad), "[PAD]");
  EXPECT_EQ(v.token(kEos), "[EOS]");
  EXPECT_EQ(v.id("[ENC]"), static_cast<std::size_t>(kEnc));
  EXPECT_THROW(v.token(99), IndexError);
}

TEST(Vocabulary, CorpusTokenizationNeverYieldsReservedTokens) {
  const std::vector<std::string> texts = {"[PAD] [EOS] hello"};
  const auto v = Vocabulary::build(texts);
  for (std::size_t id : tokenize(texts[0], v)) EXPECT_GE(id, kNumSpecial);
}

TEST(Vocabulary, IdTokenRoundTripAndSaveLoad) {
  SyntheticSpec spec;
  spec.num_reviews = 30;
  const auto corpus = generate_synthetic_corpus(spec);
  std::vector<std::string> texts;
  for (const auto& r : corpus.reviews) texts.push_back(r.text);
  const auto v = Vocabulary::build(texts);
  for (std::size_t id = 0; id < v.size(); ++id) EXPECT_EQ(v.id(v.token(id)), id);
  TempDir dir;
  v.save(dir / "vocab.json");
  EXPECT_EQ(Vocabulary::load(dir / "vocab.json"), v);
}

TEST(Tokenize, DetokenizeRoundTripsSyntheticSentences) {
  SyntheticSpec spec;
  spec.num_reviews = 120;
  const auto corpus = generate_synthetic_corpus(spec);
  std::vector<std::string> texts;
  for (const auto& r : corpus.reviews) texts.push_back(r.text);
  const auto v = Vocabulary::build(texts);
  for (const auto& t : texts) {
    const auto ids = tokenize(t, v);
    const std::string back = detokenize(ids, v);
    EXPECT_EQ(normalize(back), normalize(t)) << t;
    EXPECT_EQ(tokenize(back, v), ids);
  }
  for (const auto& s : {std::string("then the finish came off; 0.29 | they don't look nice; 0.19")}) {
    Vocabulary w = Vocabulary::build(std::vector<std::string>{s});
    EXPECT_EQ(detokenize(tokenize(s, w), w), s);
  }
}

TEST(Ppm, RoundTripIsBitExact) {
  ImageRaster img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 37);
  EXPECT_EQ(decode_ppm(encode_ppm(img)), img);
  TempDir dir;
  write_ppm(dir / "a.ppm", img);
  EXPECT_EQ(read_ppm(dir / "a.ppm"), img);
}

TEST(Ppm, RejectsMalformed) {
  EXPECT_THROW(decode_ppm({'P', '3', '\n'}), ParseError);
  auto bytes = encode_ppm(ImageRaster(4, 4));
  bytes.resize(bytes.size() - 1);
  EXPECT_THROW(decode_ppm(bytes), ParseError);
  EXPECT_THROW(read_ppm("/nonexistent/x.ppm"), ParseError);
}

TEST(Image, PatchifyLayout) {
  ImageRaster img(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) img.set(x, y, static_cast<std::uint8_t>(y * 4 + x), 0, 255);
  const Array p = patchify(img, 2);
  ASSERT_EQ(p.shape(), (Shape{4, 12}));
  // Tile 1 is the top-right 2x2 block; its first pixel is (2, 0).
  EXPECT_DOUBLE_EQ(p.at(1, 0), 2.0 / 255.0);
  EXPECT_DOUBLE_EQ(p.at(1, 2), 1.0);
  // Tile 2 second row first pixel is (0, 3).
  EXPECT_DOUBLE_EQ(p.at(2, 6), 12.0 / 255.0);
  EXPECT_THROW(patchify(ImageRaster(5, 4), 2), DimensionError);
}

TEST(Image, ResizeNearest) {
  ImageRaster img(2, 2);
  img.set(1, 1, 9, 9, 9);
  const auto big = resize_nearest(img, 4, 4);
  EXPECT_EQ(big.width, 4u);
  EXPECT_EQ(big.at(3, 3, 0), 9);
  EXPECT_EQ(big.at(2, 2, 0), 9);
  EXPECT_EQ(big.at(1, 1, 0), 0);
  EXPECT_EQ(resize_nearest(big, 2, 2), img);
}

TEST(Synthetic, ZeroReviewsIsEmpty) {
  SyntheticSpec spec;
  spec.num_reviews = 0;
  const auto c = generate_synthetic_corpus(spec);
  EXPECT_TRUE(c.reviews.empty());
  EXPECT_TRUE(c.gold.empty());
  EXPECT_TRUE(c.images.empty());
}

TEST(Synthetic, SameSeedGivesByteIdenticalFiles) {
  SyntheticSpec spec;
  spec.num_reviews = 40;
  TempDir a, b;
  write_synthetic_corpus(generate_synthetic_corpus(spec), a.path());
  write_synthetic_corpus(generate_synthetic_corpus(spec), b.path());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path());
    EXPECT_EQ(read_bytes(e.path()), read_bytes(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 40u);
  spec.seed = 8;
  TempDir c;
  write_synthetic_corpus(generate_synthetic_corpus(spec), c.path());
  EXPECT_NE(read_bytes(a / "corpus.jsonl"), read_bytes(c / "corpus.jsonl"));
}

// Replays the construction rule from the written files alone: the attribute
// of each sentence is recovered by keyword, the depicted attributes by
// matching glyph tiles in the raster.
TEST(Synthetic, GoldMatchesReplayedRule) {
  SyntheticSpec spec;
  spec.num_reviews = 80;
  const auto corpus = generate_synthetic_corpus(spec);
  TempDir dir;
  write_synthetic_corpus(corpus, dir.path());
  const auto gold = load_gold(dir / "gold.jsonl");
  ASSERT_EQ(gold, corpus.gold);

  const auto& catalog = attribute_catalog();
  std::vector<ImageRaster> glyph_only;
  for (std::size_t a = 0; a < catalog.size() && catalog[a].visual; ++a) {
    ImageRaster g(kGlyphSize, kGlyphSize, 0);
    draw_glyph(g, a, 0, 0);
    glyph_only.push_back(g);
  }
  auto depicted = [&](const ImageRaster& img) {
    std::set<std::string> found;
    for (std::size_t a = 0; a < glyph_only.size(); ++a) {
      const ImageRaster& g = glyph_only[a];
      for (std::size_t y = 0; y + kGlyphSize <= img.height; ++y)
        for (std::size_t x = 0; x + kGlyphSize <= img.width; ++x) {
          // A glyph leaves its non-background pixels verbatim.
          bool match = true, any = false;
          for (std::size_t dy = 0; dy < kGlyphSize && match; ++dy)
            for (std::size_t dx = 0; dx < kGlyphSize && match; ++dx) {
              bool painted = false;
              for (std::size_t ch = 0; ch < 3; ++ch) painted |= g.at(dx, dy, ch) != 0;
              if (!painted) continue;
              any = true;
              for (std::size_t ch = 0; ch < 3; ++ch)
                match &= img.at(x + dx, y + dy, ch) == g.at(dx, dy, ch);
            }
          if (match && any) found.insert(catalog[a].name);
        }
    }
    return found;
  };
  auto attribute_of = [&](const std::string& sentence) -> std::string {
    std::string lower = sentence;
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (const auto& a : catalog) {
      for (const auto* pool : {&a.negative, &a.positive})
        for (const auto& t : *pool)
          if (t == lower) return a.name;
    }
    return "";
  };

  std::size_t positives = 0;
  for (const auto& g : gold) {
    const auto shown = depicted(read_ppm(dir / g.image_path));
    const std::string attr = attribute_of(g.verbatim);
    const bool expected = !attr.empty() && shown.count(attr) > 0;
    EXPECT_EQ(g.relevant, expected) << g.review_id << " " << g.verbatim << " " << g.image_path;
    positives += g.relevant;
  }
  EXPECT_GT(positives, 0u);
}

TEST(Synthetic, PositiveShareWithinTolerance) {
  for (double target : {0.2, 0.3, 0.4}) {
    SyntheticSpec spec;
    spec.num_reviews = 400;
    spec.positive_fraction = target;
    const auto c = generate_synthetic_corpus(spec);
    std::size_t pos = 0, total = 0;
    for (const auto& g : c.gold) {
      if (g.polarity == "neutral") continue;
      ++total;
      pos += g.relevant;
    }
    const double share = static_cast<double>(pos) / static_cast<double>(total);
    EXPECT_NEAR(share, target, 0.10) << "target " << target;
  }
}

TEST(Synthetic, EveryReviewHasImagesAndUniqueIds) {
  SyntheticSpec spec;
  spec.num_reviews = 100;
  const auto c = generate_synthetic_corpus(spec);
  std::set<std::string> ids;
  for (const auto& r : c.reviews) {
    EXPECT_FALSE(r.image_paths.empty());
    EXPECT_TRUE(ids.insert(r.review_id).second);
    EXPECT_NE(std::find(c.categories.begin(), c.categories.end(), r.category), c.categories.end());
  }
  for (const auto& img : c.images) {
    EXPECT_EQ(img.raster.width, spec.image_size);
    EXPECT_EQ(patchify(img.raster, 8).shape(), (Shape{16, 192}));
  }
}
