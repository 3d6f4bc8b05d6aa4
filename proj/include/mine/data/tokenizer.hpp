#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mine::data {

// Reserved ids, fixed across every vocabulary.
enum SpecialToken : std::size_t {
  kPad = 0,
  kUnk = 1,
  kCls = 2,
  kEnc = 3,
  kDec = 4,
  kSep = 5,
  kEos = 6,
};
inline constexpr std::size_t kNumSpecial = 7;

// Lowercased word and single-character punctuation pieces.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();

  // Adds every word of the texts (first-seen order after sorting by
  // descending frequency, then lexicographically).
  static Vocabulary build(std::span<const std::string> texts, std::size_t min_count = 1);

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(std::string_view token) const;  // kUnk when absent
  const std::string& token(std::size_t id) const;
  bool contains(std::string_view token) const;
  std::size_t add(const std::string& token);

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

std::vector<std::size_t> tokenize(std::string_view text, const Vocabulary& vocab);
// Joins tokens, attaching punctuation to its left neighbour. Special tokens
// are skipped.
std::string detokenize(std::span<const std::size_t> ids, const Vocabulary& vocab);

}  // namespace mine::data
