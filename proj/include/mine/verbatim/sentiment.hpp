#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mine/data/corpus.hpp"

namespace mine::verbatim {

enum class Polarity { kPositive, kNegative, kNeutral };

std::string polarity_name(Polarity p);
Polarity parse_polarity(const std::string& name);

struct SentimentLabel {
  Polarity label = Polarity::kNeutral;
  double score = 0.0;  // confidence in [0, 1]
};

class SentimentClassifier {
 public:
  virtual ~SentimentClassifier() = default;
  virtual SentimentLabel classify(std::string_view text) const = 0;
};

// Word and phrase polarity counts over word tokens (punctuation ignored);
// a negator among the three preceding words flips a hit. No hit means neutral; a tie counts as negative.
class LexiconClassifier : public SentimentClassifier {
 public:
  static LexiconClassifier defaults();  // the shipped lexicon.tsv
  static LexiconClassifier load(const std::filesystem::path& path);
  static LexiconClassifier parse(std::string_view tsv);

  SentimentLabel classify(std::string_view text) const override;
  std::size_t size() const { return entries_.size(); }

 private:
  // phrase (space-joined lowercase words) -> +1 / -1
  std::unordered_map<std::string, int> entries_;
  std::unordered_map<std::string, bool> negators_;
  std::size_t longest_ = 1;
};

// Client for an external classifier: POST {path} {"text": ...} answered by
// {"label": "positive|negative|neutral", "score": x}. Throws on transport
// or protocol failure.
class HttpSentimentClient : public SentimentClassifier {
 public:
  HttpSentimentClient(std::string host, int port, std::string path = "/classify",
                      std::chrono::milliseconds timeout = std::chrono::seconds(5));
  SentimentLabel classify(std::string_view text) const override;

 private:
  std::string host_;
  int port_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

struct FilterResult {
  std::vector<data::Verbatim> kept;
  std::vector<std::string> warnings;  // one per segment the classifier failed on
};

// Keeps non-neutral segments in order. A classifier exception skips that
// segment with a warning.
FilterResult filter_actionable(const std::vector<data::Verbatim>& segments,
                               const SentimentClassifier& classifier);

// preprocess -> segment -> filter for every review.
struct Extraction {
  std::vector<data::Verbatim> verbatims;
  std::vector<std::string> warnings;
};
Extraction extract_verbatims(const std::vector<data::ReviewRecord>& reviews,
                             const SentimentClassifier& classifier);

}  // namespace mine::verbatim
