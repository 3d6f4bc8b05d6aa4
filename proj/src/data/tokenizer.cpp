#include "mine/data/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "json.hpp"
#include "mine/core/error.hpp"

namespace mine::data {

namespace {

const char* const kSpecialNames[kNumSpecial] = {"[PAD]", "[UNK]", "[CLS]", "[ENC]",
                                                "[DEC]", "[SEP]", "[EOS]"};

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_punct_token(const std::string& t) {
  return t.size() == 1 && !is_word_char(static_cast<unsigned char>(t[0]));
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
      continue;
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
    if (!std::isspace(c)) out.emplace_back(1, ch);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* name : kSpecialNames) add(name);
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [w, c] : sorted)
    if (c >= min_count) v.add(w);
  return v;
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.contains(std::string(token));
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  nlohmann::json j = {{"format_version", 1}, {"tokens", tokens_}};
  out << j.dump() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open vocabulary " + path.string());
  const auto j = nlohmann::json::parse(in);
  const auto tokens = j.at("tokens").get<std::vector<std::string>>();
  if (tokens.size() < kNumSpecial) throw ParseError("vocabulary lacks reserved tokens");
  for (std::size_t i = 0; i < kNumSpecial; ++i) {
    if (tokens[i] != kSpecialNames[i]) throw ParseError("reserved token mismatch at " + std::to_string(i));
  }
  Vocabulary v;
  for (std::size_t i = kNumSpecial; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

std::vector<std::size_t> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<std::size_t> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(std::span<const std::size_t> ids, const Vocabulary& vocab) {
  // Punctuation attaches to the word on its left, except the " | " entry
  // separator. Apostrophes glue both ways, and "0 . 29" / "- 0" re-form
  // numbers so serialized confidences survive the trip.
  auto numeric = [](const std::string& t) {
    return !t.empty() && std::all_of(t.begin(), t.end(),
                                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  };
  std::string out;
  std::string prev, prev2;
  for (std::size_t id : ids) {
    if (id < kNumSpecial && id != kUnk) continue;
    const std::string& t = vocab.token(id);
    bool space = !out.empty();
    if (is_punct_token(t) && t != "|" && t != "-") space = false;
    if (prev == "'") space = false;
    if (prev == "." && numeric(prev2) && numeric(t)) space = false;
    if (prev == "-" && numeric(t)) space = false;
    if (space) out.push_back(' ');
    out += t;
    prev2 = prev;
    prev = t;
  }
  return out;
}

}  // namespace mine::data
