#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Instruction prompts and target strings for the three prompt kinds:
//   csecs: every verbatim of the review with its score
//   msecs: only verbatims matching the image, with scores
//   mse:   only matching verbatims, no scores
namespace mine::prompt {

enum class PromptKind { kCsecs, kMsecs, kMse };
std::string kind_name(PromptKind kind);  // "csecs", "msecs", "mse"
PromptKind parse_kind(const std::string& name);
bool has_scores(PromptKind kind);

// Appends a warning when the feedback is empty.
std::string build_prompt(PromptKind kind, std::string_view feedback, std::vector<std::string>* warnings = nullptr);

struct Entry {
  std::string text;
  std::optional<double> confidence;
  bool operator==(const Entry&) const = default;
};

// "|" and ";" become "/", surrounding whitespace is trimmed and the
// confidence is rounded to two decimals.
std::string sanitize_text(std::string_view text);
Entry sanitize(const Entry& e);

// Scored kinds: descending confidence, stable. mse keeps source order.
// by_score forces the scored ordering for any kind.
std::vector<Entry> ordered(PromptKind kind, std::vector<Entry> entries, bool by_score = false);

// Entries are sanitized on the way out; entries left empty are dropped.
// mse drops confidences.
std::string serialize_target(PromptKind kind, const std::vector<Entry>& entries);

struct ParseResult {
  std::vector<Entry> entries;
  std::vector<std::string> warnings;
};

// Total inverse of serialize_target: never throws on any input.
ParseResult parse_output(PromptKind kind, std::string_view text);

}  // namespace mine::prompt
