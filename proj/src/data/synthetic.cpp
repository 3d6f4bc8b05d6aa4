#include "mine/data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "mine/core/error.hpp"
#include "mine/core/rng.hpp"

namespace mine::data {

const std::vector<AttributeSpec>& attribute_catalog() {
  static const std::vector<AttributeSpec> catalog = {
      {"color", true,
       {"the color faded after one wash", "the color turned brownish", "the color is dull"},
       {"the color is gorgeous", "the color looks vibrant"}},
      {"strap", true,
       {"the strap is too short", "the strap snapped on the first day", "the strap feels flimsy"},
       {"the strap is comfortable", "the strap feels sturdy"}},
      {"zipper", true,
       {"the zipper broke after a week", "the zipper keeps getting stuck", "the zipper is misaligned"},
       {"the zipper glides smoothly", "the zipper works perfectly"}},
      {"finish", true,
       {"the finish came off", "the finish peeled quickly", "the finish looks cheap"},
       {"the finish looks elegant", "the finish is flawless"}},
      {"size", true,
       {"the size runs too small", "the size is wrong", "the size is disappointing"},
       {"the size is perfect", "the size fits great"}},
      {"stitching", true,
       {"the stitching came loose", "the stitching is uneven", "the stitching is sloppy"},
       {"the stitching is neat", "the stitching looks solid"}},
      {"shipping", false,
       {"shipping took forever", "the delivery was late"},
       {"shipping was fast", "the delivery was quick"}},
      {"price", false,
       {"the price is too high", "it is overpriced"},
       {"the price is fair", "great value for money"}},
      {"service", false,
       {"customer service was rude", "the seller was unhelpful"},
       {"the seller was helpful", "customer service was excellent"}},
  };
  return catalog;
}

const std::vector<std::string>& neutral_sentences() {
  static const std::vector<std::string> s = {
      "i bought this last month", "it came in a box", "my sister uses it for work",
      "i ordered the medium one", "it arrived on a tuesday"};
  return s;
}

const std::vector<std::string>& category_names() {
  static const std::vector<std::string> names = {
      "handbags", "shoes", "jackets", "watches", "backpacks", "wallets",
      "belts",    "hats",  "scarves", "gloves",  "luggage",   "jewelry"};
  return names;
}

namespace {

using Rgb = std::array<std::uint8_t, 3>;

const std::vector<Rgb>& category_tints() {
  static const std::vector<Rgb> tints = {
      {70, 70, 90},   {90, 75, 60},  {60, 85, 70},  {85, 85, 85},
      {75, 60, 85},   {95, 90, 65},  {60, 70, 95},  {80, 65, 65},
      {65, 90, 90},   {90, 70, 80},  {70, 80, 60},  {100, 80, 90}};
  return tints;
}

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::size_t visual_count() {
  const auto& cat = attribute_catalog();
  return static_cast<std::size_t>(std::count_if(cat.begin(), cat.end(),
                                                [](const auto& a) { return a.visual; }));
}

// Picks k distinct items of [0, n).
std::vector<std::size_t> pick_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(std::min(k, n));
  return idx;
}

}  // namespace

void draw_glyph(ImageRaster& img, std::size_t attribute, std::size_t x0, std::size_t y0) {
  constexpr std::size_t n = kGlyphSize;
  auto put = [&](std::size_t dx, std::size_t dy, Rgb c) { img.set(x0 + dx, y0 + dy, c[0], c[1], c[2]); };
  for (std::size_t dy = 0; dy < n; ++dy) {
    for (std::size_t dx = 0; dx < n; ++dx) {
      switch (attribute) {
        case 0:  // color: solid magenta block
          put(dx, dy, {230, 30, 200});
          break;
        case 1:  // strap: horizontal yellow stripes
          put(dx, dy, dy % 2 == 0 ? Rgb{240, 220, 20} : Rgb{20, 20, 20});
          break;
        case 2:  // zipper: vertical teeth down the middle
          if (dx == 3 || dx == 4) put(dx, dy, dy % 2 == 0 ? Rgb{250, 250, 250} : Rgb{120, 120, 120});
          else put(dx, dy, {30, 30, 30});
          break;
        case 3:  // finish: orange/brown checkerboard
          put(dx, dy, (dx / 2 + dy / 2) % 2 == 0 ? Rgb{240, 140, 20} : Rgb{90, 50, 10});
          break;
        case 4:  // size: cyan hollow square
          if (dx == 0 || dy == 0 || dx == n - 1 || dy == n - 1) put(dx, dy, {20, 230, 240});
          break;
        case 5:  // stitching: green diagonal
          if (dx == dy || dx + 1 == dy) put(dx, dy, {30, 240, 60});
          break;
        default:
          throw ContractError("attribute " + std::to_string(attribute) + " has no glyph");
      }
    }
  }
}

bool gold_rule(const SentenceInfo& sentence, const std::vector<std::string>& depicted) {
  if (sentence.polarity == "neutral" || sentence.attribute.empty()) return false;
  return std::find(depicted.begin(), depicted.end(), sentence.attribute) != depicted.end();
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.num_categories == 0 || spec.num_categories > category_names().size()) {
    throw ContractError("num_categories must be in [1, " +
                        std::to_string(category_names().size()) + "]");
  }
  if (spec.image_size < 2 * kGlyphSize) throw ContractError("image_size too small for glyphs");
  if (!(spec.positive_fraction > 0.0 && spec.positive_fraction <= 0.5)) {
    throw ContractError("positive_fraction must be in (0, 0.5]");
  }
  const auto& catalog = attribute_catalog();
  const std::size_t n_visual = visual_count();
  std::vector<std::size_t> nonvisual;
  for (std::size_t a = 0; a < catalog.size(); ++a)
    if (!catalog[a].visual) nonvisual.push_back(a);

  // Actionable sentences per review: mix of a and a+1 so the expected share
  // of relevant pairs (one per image) matches positive_fraction.
  const double inv = 1.0 / spec.positive_fraction;
  const std::size_t lo = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(inv)));
  const double p_lo = lo + 1 == 0 ? 1.0
                                  : std::clamp((spec.positive_fraction - 1.0 / (lo + 1)) /
                                                   (1.0 / lo - 1.0 / (lo + 1)),
                                               0.0, 1.0);

  SyntheticCorpus out;
  out.categories.assign(category_names().begin(),
                        category_names().begin() + static_cast<std::ptrdiff_t>(spec.num_categories));
  Rng rng(spec.seed);
  const std::size_t half = spec.image_size / 2;

  for (std::size_t r = 0; r < spec.num_reviews; ++r) {
    std::ostringstream id;
    id << "r" << std::setw(5) << std::setfill('0') << r;
    ReviewRecord review;
    review.review_id = id.str();
    const std::size_t cat = rng.below(spec.num_categories);
    review.category = out.categories[cat];

    const std::size_t n_images = rng.bernoulli(spec.two_image_prob) ? 2 : 1;
    const std::size_t n_actionable = rng.bernoulli(p_lo) ? lo : lo + 1;
    const std::size_t n_nonvis =
        std::min(nonvisual.size(), n_actionable > n_images + 1 ? rng.below(2) : std::size_t{0});
    const std::size_t n_vis = std::min(n_visual, n_actionable - n_nonvis);

    std::vector<SentenceInfo> sentences;
    const auto vis_attrs = pick_distinct(rng, n_visual, n_vis);
    for (std::size_t a : vis_attrs) {
      const bool neg = rng.bernoulli(spec.negative_prob);
      const auto& pool = neg ? catalog[a].negative : catalog[a].positive;
      sentences.push_back({pool[rng.below(pool.size())], catalog[a].name, neg ? "negative" : "positive"});
    }
    for (std::size_t k : pick_distinct(rng, nonvisual.size(), n_nonvis)) {
      const std::size_t a = nonvisual[k];
      const bool neg = rng.bernoulli(spec.negative_prob);
      const auto& pool = neg ? catalog[a].negative : catalog[a].positive;
      sentences.push_back({pool[rng.below(pool.size())], catalog[a].name, neg ? "negative" : "positive"});
    }
    const std::size_t n_neutral = 1 + rng.below(2);
    for (std::size_t k : pick_distinct(rng, neutral_sentences().size(), n_neutral)) {
      sentences.push_back({neutral_sentences()[k], "", "neutral"});
    }
    rng.shuffle(sentences);

    std::string text;
    for (auto& s : sentences) {
      s.text = capitalize(s.text);
      if (!text.empty()) text += ' ';
      text += s.text;
      text += rng.bernoulli(0.15) ? "!" : ".";
    }
    review.text = text;

    // Each image shows a distinct mentioned visual attribute, sometimes
    // with an unmentioned distractor glyph.
    for (std::size_t k = 0; k < n_images && k < vis_attrs.size(); ++k) {
      SyntheticImage img;
      img.path = "images/" + review.review_id + "_" + std::to_string(k) + ".ppm";
      img.raster = ImageRaster(spec.image_size, spec.image_size);
      const Rgb tint = category_tints()[cat];
      for (std::size_t y = 0; y < spec.image_size; ++y)
        for (std::size_t x = 0; x < spec.image_size; ++x)
          img.raster.set(x, y, clamp_u8(tint[0] + rng.normal(0, 10)),
                         clamp_u8(tint[1] + rng.normal(0, 10)),
                         clamp_u8(tint[2] + rng.normal(0, 10)));
      std::vector<std::size_t> glyphs = {vis_attrs[k]};
      if (rng.bernoulli(spec.distractor_prob)) {
        std::vector<std::size_t> unmentioned;
        for (std::size_t a = 0; a < n_visual; ++a)
          if (std::find(vis_attrs.begin(), vis_attrs.end(), a) == vis_attrs.end())
            unmentioned.push_back(a);
        if (!unmentioned.empty()) glyphs.push_back(unmentioned[rng.below(unmentioned.size())]);
      }
      // Glyphs go into distinct quadrants with jitter.
      const auto quadrants = pick_distinct(rng, 4, glyphs.size());
      for (std::size_t g = 0; g < glyphs.size(); ++g) {
        const std::size_t jitter = half - kGlyphSize + 1;
        const std::size_t x = (quadrants[g] % 2) * half + rng.below(jitter);
        const std::size_t y = (quadrants[g] / 2) * half + rng.below(jitter);
        draw_glyph(img.raster, glyphs[g], x, y);
        img.depicted.push_back(catalog[glyphs[g]].name);
      }
      review.image_paths.push_back(img.path);
      for (const auto& s : sentences) {
        out.gold.push_back({review.review_id, img.path, s.text, s.attribute, s.polarity,
                            gold_rule(s, img.depicted)});
      }
      out.images.push_back(std::move(img));
    }
    out.reviews.push_back(std::move(review));
  }
  return out;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  save_corpus(dir / "corpus.jsonl", corpus.reviews);
  for (const auto& img : corpus.images) write_ppm(dir / img.path, img.raster);
  std::ofstream gold(dir / "gold.jsonl", std::ios::binary);
  for (const auto& g : corpus.gold) {
    nlohmann::json j = {{"review_id", g.review_id}, {"image_path", g.image_path},
                        {"verbatim", g.verbatim},   {"attribute", g.attribute},
                        {"polarity", g.polarity},   {"relevant", g.relevant}};
    gold << j.dump() << '\n';
  }
  std::ofstream images(dir / "images.jsonl", std::ios::binary);
  for (const auto& img : corpus.images) {
    nlohmann::json j = {{"image_path", img.path}, {"depicted", img.depicted}};
    images << j.dump() << '\n';
  }
}

std::vector<GoldPair> load_gold(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open gold file " + path.string());
  std::vector<GoldPair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("review_id"), j.at("image_path"), j.at("verbatim"), j.at("attribute"),
                   j.at("polarity"), j.at("relevant")});
  }
  return out;
}

}  // namespace mine::data
