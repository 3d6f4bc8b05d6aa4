#include "mine/verbatim/sentiment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "mine/core/error.hpp"
#include "mine/data/tokenizer.hpp"
#include "mine/verbatim/text.hpp"
#include "embedded_data.hpp"

namespace mine::verbatim {

std::string polarity_name(Polarity p) {
  switch (p) {
    case Polarity::kPositive: return "positive";
    case Polarity::kNegative: return "negative";
    case Polarity::kNeutral: return "neutral";
  }
  return "neutral";
}

Polarity parse_polarity(const std::string& name) {
  if (name == "positive") return Polarity::kPositive;
  if (name == "negative") return Polarity::kNegative;
  if (name == "neutral") return Polarity::kNeutral;
  throw ParseError("unknown sentiment label \"" + name + "\"");
}

namespace {

std::string join_words(const std::vector<std::string>& words, std::size_t from, std::size_t count) {
  std::string key;
  for (std::size_t k = 0; k < count; ++k) {
    if (k) key.push_back(' ');
    key += words[from + k];
  }
  return key;
}

}  // namespace

LexiconClassifier LexiconClassifier::parse(std::string_view tsv) {
  LexiconClassifier lex;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("lexicon line " + std::to_string(n) + ": missing tab");
    const auto words = data::split_words(line.substr(0, tab));
    const std::string polarity = line.substr(tab + 1);
    if (words.empty()) throw ParseError("lexicon line " + std::to_string(n) + ": empty entry");
    const std::string key = join_words(words, 0, words.size());
    if (polarity == "negator") {
      if (words.size() != 1) throw ParseError("lexicon line " + std::to_string(n) + ": negators are single words");
      lex.negators_[key] = true;
    } else if (polarity == "positive" || polarity == "negative") {
      lex.entries_[key] = polarity == "positive" ? 1 : -1;
      lex.longest_ = std::max(lex.longest_, words.size());
    } else {
      throw ParseError("lexicon line " + std::to_string(n) + ": unknown polarity \"" + polarity + "\"");
    }
  }
  return lex;
}

LexiconClassifier LexiconClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open lexicon " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

LexiconClassifier LexiconClassifier::defaults() {
  static const LexiconClassifier lex = parse(embedded::kLexiconTsv);
  return lex;
}

SentimentLabel LexiconClassifier::classify(std::string_view text) const {
  std::vector<std::string> words;
  for (auto& w : data::split_words(text))
    if (std::isalnum(static_cast<unsigned char>(w[0])) || static_cast<unsigned char>(w[0]) >= 0x80)
      words.push_back(std::move(w));
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < words.size();) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(longest_, words.size() - i); len >= 1 && !matched; --len) {
      const auto it = entries_.find(join_words(words, i, len));
      if (it == entries_.end()) continue;
      bool negated = false;
      for (std::size_t j = i >= 3 ? i - 3 : 0; j < i; ++j) negated |= negators_.count(words[j]) > 0;
      const int polarity = negated ? -it->second : it->second;
      (polarity > 0 ? pos : neg) += 1;
      matched = len;
    }
    i += matched ? matched : 1;
  }
  if (pos + neg == 0) return {Polarity::kNeutral, 1.0};
  const double total = static_cast<double>(pos + neg);
  if (pos > neg) return {Polarity::kPositive, static_cast<double>(pos) / total};
  return {Polarity::kNegative, static_cast<double>(neg) / total};
}

HttpSentimentClient::HttpSentimentClient(std::string host, int port, std::string path,
                                         std::chrono::milliseconds timeout)
    : host_(std::move(host)), port_(port), path_(std::move(path)), timeout_(timeout) {}

SentimentLabel HttpSentimentClient::classify(std::string_view text) const {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  const nlohmann::json body = {{"text", std::string(text)}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw ServiceError("sentiment service: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw ServiceError("sentiment service: HTTP " + std::to_string(res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    SentimentLabel out{parse_polarity(j.at("label").get<std::string>()), j.at("score").get<double>()};
    if (!(out.score >= 0.0 && out.score <= 1.0)) throw ServiceError("sentiment service: score out of [0, 1]");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(std::string("sentiment service: bad response: ") + e.what());
  } catch (const ParseError& e) {
    throw ServiceError(std::string("sentiment service: ") + e.what());
  }
}

FilterResult filter_actionable(const std::vector<data::Verbatim>& segments,
                               const SentimentClassifier& classifier) {
  FilterResult out;
  for (const auto& s : segments) {
    try {
      if (classifier.classify(s.text).label != Polarity::kNeutral) out.kept.push_back(s);
    } catch (const std::exception& e) {
      out.warnings.push_back("skipped " + s.verbatim_id + ": " + e.what());
    }
  }
  return out;
}

Extraction extract_verbatims(const std::vector<data::ReviewRecord>& reviews,
                             const SentimentClassifier& classifier) {
  Extraction out;
  for (const auto& r : reviews) {
    auto filtered = filter_actionable(segment(preprocess_text(r.text), r.review_id), classifier);
    for (auto& v : filtered.kept) out.verbatims.push_back(std::move(v));
    for (auto& w : filtered.warnings) out.warnings.push_back(std::move(w));
  }
  return out;
}

}  // namespace mine::verbatim
