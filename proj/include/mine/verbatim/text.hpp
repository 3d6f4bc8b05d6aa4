#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mine/data/corpus.hpp"

namespace mine::verbatim {

// Strips HTML tags and URLs, decodes common entities, folds accented
// characters to ASCII and collapses whitespace. Idempotent.
std::string preprocess_text(std::string_view raw);

// UTF-8 to ASCII: accented Latin letters lose their accent, typographic
// punctuation becomes its ASCII form, anything else becomes a space.
std::string fold_to_ascii(std::string_view text);

struct Conjunction {
  std::string phrase;
  bool keep = false;  // keep: next segment starts at the phrase's first word
};

struct SegmentConfig {
  std::vector<Conjunction> conjunctions;
  std::size_t min_words = 2;  // shorter segments merge left or are dropped

  static SegmentConfig defaults();  // the shipped conjunctions.tsv
  static SegmentConfig load(const std::filesystem::path& path);
  static SegmentConfig parse(std::string_view tsv);
};

// Splits preprocessed text into clause-level verbatims. Spans index bytes
// of text; verbatim_id is review_id + "_v" + ordinal.
std::vector<data::Verbatim> segment(std::string_view text, const std::string& review_id = "",
                                    const SegmentConfig& config = SegmentConfig::defaults());

}  // namespace mine::verbatim
