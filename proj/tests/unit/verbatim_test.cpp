#include <gtest/gtest.h>

#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "mine/core/error.hpp"
#include "mine/core/rng.hpp"
#include "mine/data/synthetic.hpp"
#include "mine/data/tokenizer.hpp"
#include "mine/verbatim/sentiment.hpp"
#include "mine/verbatim/text.hpp"

using namespace mine;
using namespace mine::verbatim;

namespace {

std::vector<std::string> texts(const std::vector<data::Verbatim>& vs) {
  std::vector<std::string> out;
  for (const auto& v : vs) out.push_back(v.text);
  return out;
}

data::Verbatim make(const std::string& id, const std::string& text) {
  return {id, "r", text, {0, text.size()}};
}

}  // namespace

TEST(Preprocess, Examples) {
  EXPECT_EQ(preprocess_text("<b>Great</b>  bag!"), "Great bag!");
  EXPECT_EQ(preprocess_text("see https://x.y/z now"), "see now");
  EXPECT_EQ(preprocess_text("caf\xC3\xA9"), "cafe");
  EXPECT_EQ(preprocess_text(""), "");
  EXPECT_EQ(preprocess_text("  line<br>next\t\n"), "line next");
  EXPECT_EQ(preprocess_text("Fish &amp; chips, www.shop.com"), "Fish & chips,");
  EXPECT_EQ(preprocess_text("\xE2\x80\x9CNa\xC3\xAFve\xE2\x80\x9D \xC5\x81\xC3\xB3" "d\xC5\xBA"), "\"Naive\" Lodz");
  EXPECT_EQ(preprocess_text("a < b and c > d"), "a < b and c > d");
}

TEST(Preprocess, IdempotentOnRandomInputs) {
  const std::vector<std::string> pieces = {
      "<b>", "</i>", "<br/>", "<", ">", "&amp;", "&lt;", "&gt;", "&#233;", "&#x41;", "&", ";",
      "http://a.b/c", "www.x", " ", "  ", "\t", "\n", "a", "Z", ".", "caf\xC3\xA9", "\xE2\x80\x94",
      "\xF0\x9F\x98\x80", "\xC3", "e\xCC\x81", "amp", "lt", "#", "x", "p>", "<d", "iv>"};
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    const std::size_t len = rng.below(25);
    for (std::size_t k = 0; k < len; ++k) s += pieces[rng.below(pieces.size())];
    const std::string once = preprocess_text(s);
    ASSERT_EQ(preprocess_text(once), once) << "input: " << s;
    for (char c : once) ASSERT_LT(static_cast<unsigned char>(c), 0x80) << s;
  }
}

TEST(Segment, ExampleReview) {
  const std::string text =
      "They don't look nice. It looked nice for a brief period of time; then the finish came off, "
      "that fadeout the pleated color and became brownish.";
  const auto segs = segment(text, "r1");
  EXPECT_EQ(texts(segs), (std::vector<std::string>{"They don't look nice",
                                                    "It looked nice for a brief period of time",
                                                    "then the finish came off",
                                                    "fadeout the pleated color and became brownish"}));
  EXPECT_EQ(segs[0].verbatim_id, "r1_v0");
  EXPECT_EQ(segs[2].span, (data::CharSpan{65, 89}));
}

TEST(Segment, EmptyAndSingleWord) {
  EXPECT_TRUE(segment("").empty());
  EXPECT_TRUE(segment("Bad.").empty());
  // A lone word after a longer clause merges into it.
  const auto segs = segment("The strap broke. Sadly!");
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].text, "The strap broke. Sadly");
}

TEST(Segment, Conjunctions) {
  EXPECT_EQ(texts(segment("The bag looks great but the zipper broke")),
            (std::vector<std::string>{"The bag looks great", "the zipper broke"}));
  EXPECT_EQ(texts(segment("It fit well and then the strap snapped")),
            (std::vector<std::string>{"It fit well", "and then the strap snapped"}));
  // Words containing a conjunction are not split.
  EXPECT_EQ(texts(segment("The butter colored strap is lovely")),
            (std::vector<std::string>{"The butter colored strap is lovely"}));
  // Decimal points do not end a sentence.
  EXPECT_EQ(texts(segment("It cost 10.99 dollars, too much")),
            (std::vector<std::string>{"It cost 10.99 dollars, too much"}));
}

TEST(Segment, CustomConfig) {
  const auto cfg = SegmentConfig::parse("# c\nhowever\tdrop\n");
  EXPECT_EQ(texts(segment("Nice color however the strap broke but fine", "", cfg)),
            (std::vector<std::string>{"Nice color", "the strap broke but fine"}));
  EXPECT_THROW(SegmentConfig::parse("x\tmaybe\n"), ParseError);
}

TEST(Segment, SpansSliceTextAndNoSingleTokenVerbatims) {
  data::SyntheticSpec spec;
  spec.num_reviews = 150;
  const auto corpus = data::generate_synthetic_corpus(spec);
  std::vector<std::string> all = {
      "They don't look nice. It looked nice for a brief period of time; then the finish came off, "
      "that fadeout the pleated color and became brownish. The one I'd purchased elsewhere before lasted years.",
      "ok. fine! great bag? but; and then , that . . !!! x", "a b; c; d e f; g"};
  for (const auto& r : corpus.reviews) all.push_back(r.text);
  Rng rng(5);
  const std::vector<std::string> words = {"the", "strap", "but", ".", ";", "!", "and then", ",", "that", "x",
                                          "  ", "broke", "?", "0.5", "don't"};
  for (int k = 0; k < 300; ++k) {
    std::string s;
    for (std::size_t n = rng.below(20); n > 0; --n) s += words[rng.below(words.size())] + " ";
    all.push_back(s);
  }
  for (const auto& raw : all) {
    const std::string text = preprocess_text(raw);
    for (const auto& v : segment(text, "r")) {
      ASSERT_LE(v.span.end, text.size());
      EXPECT_EQ(text.substr(v.span.start, v.span.end - v.span.start), v.text) << text;
      EXPECT_GE(data::split_words(v.text).size(), 2u) << v.text;
    }
  }
}

TEST(Segment, SyntheticReviewsSplitIntoTheirSentences) {
  data::SyntheticSpec spec;
  spec.num_reviews = 60;
  const auto corpus = data::generate_synthetic_corpus(spec);
  std::size_t gi = 0;
  for (const auto& r : corpus.reviews) {
    const auto segs = texts(segment(preprocess_text(r.text), r.review_id));
    std::vector<std::string> expected;
    for (; gi < corpus.gold.size() && corpus.gold[gi].review_id == r.review_id; ++gi) {
      if (corpus.gold[gi].image_path != r.image_paths[0]) continue;
      expected.push_back(corpus.gold[gi].verbatim);
    }
    EXPECT_EQ(segs, expected) << r.text;
  }
}

TEST(Lexicon, DefaultLabels) {
  const auto lex = LexiconClassifier::defaults();
  EXPECT_GT(lex.size(), 40u);
  EXPECT_EQ(lex.classify("the finish came off").label, Polarity::kNegative);
  EXPECT_EQ(lex.classify("it is a bag").label, Polarity::kNeutral);
  EXPECT_EQ(lex.classify("They don't look nice").label, Polarity::kNegative);
  EXPECT_EQ(lex.classify("It looked nice for a brief period of time").label, Polarity::kPositive);
  EXPECT_EQ(lex.classify("the strap is too short").label, Polarity::kNegative);
  EXPECT_EQ(lex.classify("The Color Is GORGEOUS").label, Polarity::kPositive);
  const auto mixed = lex.classify("nice color but poor strap and bad zipper");
  EXPECT_EQ(mixed.label, Polarity::kNegative);
  EXPECT_NEAR(mixed.score, 2.0 / 3.0, 1e-12);
}

TEST(Lexicon, SyntheticPolaritiesAgreeWithGenerator) {
  const auto lex = LexiconClassifier::defaults();
  for (const auto& a : data::attribute_catalog()) {
    for (const auto& t : a.negative) EXPECT_EQ(lex.classify(t).label, Polarity::kNegative) << t;
    for (const auto& t : a.positive) EXPECT_EQ(lex.classify(t).label, Polarity::kPositive) << t;
  }
  for (const auto& t : data::neutral_sentences()) EXPECT_EQ(lex.classify(t).label, Polarity::kNeutral) << t;
}

TEST(Lexicon, ParseErrors) {
  EXPECT_THROW(LexiconClassifier::parse("good\tgreat\n"), ParseError);
  EXPECT_THROW(LexiconClassifier::parse("good\n"), ParseError);
  EXPECT_THROW(LexiconClassifier::parse("not at all\tnegator\n"), ParseError);
  EXPECT_EQ(LexiconClassifier::parse("").classify("great").label, Polarity::kNeutral);
}

TEST(FilterActionable, Examples) {
  const auto lex = LexiconClassifier::defaults();
  EXPECT_TRUE(filter_actionable({make("a", "it is a bag"), make("b", "i bought it")}, lex).kept.empty());
  const auto out = filter_actionable({make("a", "the finish came off"), make("b", "it is a bag")}, lex);
  ASSERT_EQ(out.kept.size(), 1u);
  EXPECT_EQ(out.kept[0].text, "the finish came off");
}

TEST(FilterActionable, SubsetAndOrderPreserving) {
  const auto lex = LexiconClassifier::defaults();
  const std::vector<std::string> pool = {"great bag", "it is a bag", "the strap broke", "on tuesday",
                                         "not bad at all", "fine"};
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<data::Verbatim> in;
    for (std::size_t k = rng.below(12); k > 0; --k)
      in.push_back(make("v" + std::to_string(in.size()), pool[rng.below(pool.size())]));
    const auto out = filter_actionable(in, lex).kept;
    std::size_t j = 0;
    for (const auto& v : out) {
      while (j < in.size() && !(in[j] == v)) ++j;
      ASSERT_LT(j, in.size()) << "kept segment not in input order";
      ++j;
    }
  }
}

namespace {

class Failing : public SentimentClassifier {
 public:
  SentimentLabel classify(std::string_view text) const override {
    if (text.find("boom") != std::string_view::npos) throw std::runtime_error("model crashed");
    return {Polarity::kNegative, 0.9};
  }
};

}  // namespace

TEST(FilterActionable, ClassifierFailureSkipsWithWarning) {
  const auto out = filter_actionable({make("a", "one two"), make("b", "boom goes"), make("c", "three four")},
                                     Failing{});
  EXPECT_EQ(texts(out.kept), (std::vector<std::string>{"one two", "three four"}));
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_NE(out.warnings[0].find("model crashed"), std::string::npos);
}

TEST(HttpSentiment, TalksToService) {
  httplib::Server server;
  server.Post("/classify", [](const httplib::Request& req, httplib::Response& res) {
    const auto text = nlohmann::json::parse(req.body).at("text").get<std::string>();
    if (text == "explode") {
      res.status = 500;
      return;
    }
    const nlohmann::json body = {{"label", text.find("bad") != std::string::npos ? "negative" : "neutral"},
                                 {"score", 0.75}};
    res.set_content(body.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpSentimentClient client("127.0.0.1", port);
  const auto label = client.classify("bad strap");
  EXPECT_EQ(label.label, Polarity::kNegative);
  EXPECT_DOUBLE_EQ(label.score, 0.75);
  EXPECT_EQ(client.classify("a bag").label, Polarity::kNeutral);
  EXPECT_THROW(client.classify("explode"), ServiceError);
  const auto out = filter_actionable({make("a", "bad strap"), make("b", "explode"), make("c", "a bag")}, client);
  EXPECT_EQ(texts(out.kept), (std::vector<std::string>{"bad strap"}));
  EXPECT_EQ(out.warnings.size(), 1u);

  server.stop();
  t.join();
  EXPECT_THROW(HttpSentimentClient("127.0.0.1", port, "/classify", std::chrono::milliseconds(200)).classify("x"),
               ServiceError);
}
