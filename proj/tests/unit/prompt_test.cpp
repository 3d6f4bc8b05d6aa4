#include "mine/prompt/codec.hpp"

#include <gtest/gtest.h>

#include "mine/core/error.hpp"
#include "mine/core/rng.hpp"

using namespace mine;
using namespace mine::prompt;

TEST(BuildPrompt, Templates) {
  EXPECT_EQ(build_prompt(PromptKind::kMse, "bag broke"), "What is the verbatim matching with the image? Feedback: bag broke");
  EXPECT_EQ(build_prompt(PromptKind::kCsecs, "bag broke"),
            "Extract all the verbatim and confidence score of each matching with image? Feedback: bag broke");
  EXPECT_EQ(build_prompt(PromptKind::kCsecs, "x"), build_prompt(PromptKind::kMsecs, "x"));
  std::vector<std::string> warnings;
  EXPECT_EQ(build_prompt(PromptKind::kMse, "", &warnings), "What is the verbatim matching with the image? Feedback: ");
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Kind, Names) {
  for (auto k : {PromptKind::kCsecs, PromptKind::kMsecs, PromptKind::kMse}) EXPECT_EQ(parse_kind(kind_name(k)), k);
  EXPECT_EQ(parse_kind("MSE"), PromptKind::kMse);
  EXPECT_THROW(parse_kind("cot"), ParseError);
}

TEST(Serialize, TableExamples) {
  const std::vector<Entry> entries = {{"then the finish came off", 0.29},
                                      {"fadeout the pleated color and became brownish", 0.31}};
  EXPECT_EQ(serialize_target(PromptKind::kMsecs, entries),
            "then the finish came off; 0.29 | fadeout the pleated color and became brownish; 0.31");
  EXPECT_EQ(serialize_target(PromptKind::kMse, entries),
            "then the finish came off | fadeout the pleated color and became brownish");
  EXPECT_EQ(serialize_target(PromptKind::kMse, {}), "");
}

TEST(Serialize, SanitizesDelimitersAndRounds) {
  EXPECT_EQ(serialize_target(PromptKind::kMsecs, {{" a|b; c ", 0.2849}, {"   ", 0.5}}), "a/b/ c; 0.28");
  EXPECT_EQ(sanitize({"x", -0.001}).confidence, 0.0);
  EXPECT_EQ(serialize_target(PromptKind::kMsecs, {{"x", -0.001}}), "x; 0.00");
}

TEST(Ordered, ScoredKindsSortDescending) {
  const std::vector<Entry> e = {{"a", 0.2}, {"b", 0.3}, {"c", 0.2}};
  const auto msecs = ordered(PromptKind::kMsecs, e);
  EXPECT_EQ(msecs[0].text, "b");
  EXPECT_EQ(msecs[1].text, "a");
  EXPECT_EQ(msecs[2].text, "c");
  EXPECT_EQ(ordered(PromptKind::kMse, e), e);
  EXPECT_EQ(ordered(PromptKind::kMse, e, true)[0].text, "b");
}

TEST(Parse, Examples) {
  auto mse = parse_output(PromptKind::kMse, "a | b");
  EXPECT_EQ(mse.entries, (std::vector<Entry>{{"a", std::nullopt}, {"b", std::nullopt}}));
  EXPECT_TRUE(mse.warnings.empty());
  auto msecs = parse_output(PromptKind::kMsecs, "a; 0.29 | b; 0.31");
  EXPECT_EQ(msecs.entries, (std::vector<Entry>{{"a", 0.29}, {"b", 0.31}}));
  auto empty = parse_output(PromptKind::kMse, "");
  EXPECT_TRUE(empty.entries.empty());
  EXPECT_TRUE(empty.warnings.empty());
}

TEST(Parse, GarbageIsBestEffort) {
  for (auto kind : {PromptKind::kCsecs, PromptKind::kMsecs, PromptKind::kMse}) {
    const auto r = parse_output(kind, "garbage;; |");
    EXPECT_EQ(r.entries.size(), 1u);
    if (has_scores(kind)) {
      EXPECT_FALSE(r.warnings.empty());
    }
  }
  const auto r = parse_output(PromptKind::kMsecs, "a; high | | b;0.3 |  ; 0.5");
  // Chunks: "a; high", "| b;0.3", "; 0.5".
  EXPECT_EQ(r.entries.at(0), (Entry{"a", std::nullopt}));
  EXPECT_EQ(r.entries.at(1), (Entry{"| b;0.3", std::nullopt}));
  EXPECT_EQ(r.entries.size(), 3u);
  EXPECT_GE(r.warnings.size(), 3u);
  EXPECT_EQ(r.entries.at(2), (Entry{"", 0.5}));
}

TEST(Parse, TotalOnRandomBytes) {
  Rng rng(2);
  const std::string alphabet = "ab |;;.0123456789- \t\n\x01\xff";
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const std::size_t n = rng.below(30);
    for (std::size_t j = 0; j < n; ++j) s.push_back(alphabet[rng.below(alphabet.size())]);
    for (auto kind : {PromptKind::kCsecs, PromptKind::kMsecs, PromptKind::kMse})
      EXPECT_NO_THROW(parse_output(kind, s)) << s;
  }
}

TEST(RoundTrip, RandomSanitizedEntries) {
  Rng rng(11);
  const std::string alphabet = "abcdefghij klmno|;'.,!-0123";
  for (auto kind : {PromptKind::kCsecs, PromptKind::kMsecs, PromptKind::kMse}) {
    for (int trial = 0; trial < 1000; ++trial) {
      std::vector<Entry> entries;
      const std::size_t n = rng.below(6);
      for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        const std::size_t len = 1 + rng.below(25);
        for (std::size_t j = 0; j < len; ++j) text.push_back(alphabet[rng.below(alphabet.size())]);
        Entry e = sanitize({text, has_scores(kind) ? std::optional<double>(rng.uniform(-1.0, 1.0)) : std::nullopt});
        if (e.text.empty()) continue;
        entries.push_back(e);
      }
      const std::string s = serialize_target(kind, entries);
      EXPECT_FALSE(s.starts_with(" |") || s.starts_with("|") || s.ends_with("| ") || s.ends_with("|")) << s;
      const auto back = parse_output(kind, s);
      EXPECT_EQ(back.entries, entries) << s;
      EXPECT_TRUE(back.warnings.empty()) << s;
    }
  }
}
