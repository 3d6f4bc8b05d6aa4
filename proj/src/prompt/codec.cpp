#include "mine/prompt/codec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "mine/core/error.hpp"
#include "mine/data/corpus.hpp"

namespace mine::prompt {

namespace {

constexpr std::string_view kMsePrompt = "What is the verbatim matching with the image? Feedback: ";
constexpr std::string_view kScoredPrompt =
    "Extract all the verbatim and confidence score of each matching with image? Feedback: ";
constexpr std::string_view kEntrySep = " | ";
constexpr std::string_view kScoreSep = "; ";

std::string_view trim(std::string_view s) {
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && space(s.front())) s.remove_prefix(1);
  while (!s.empty() && space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string kind_name(PromptKind kind) {
  switch (kind) {
    case PromptKind::kCsecs: return "csecs";
    case PromptKind::kMsecs: return "msecs";
    case PromptKind::kMse: return "mse";
  }
  return "mse";
}

PromptKind parse_kind(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "csecs") return PromptKind::kCsecs;
  if (lower == "msecs") return PromptKind::kMsecs;
  if (lower == "mse") return PromptKind::kMse;
  throw ParseError("prompt kind must be csecs, msecs or mse, got \"" + name + "\"");
}

bool has_scores(PromptKind kind) { return kind != PromptKind::kMse; }

std::string build_prompt(PromptKind kind, std::string_view feedback, std::vector<std::string>* warnings) {
  if (feedback.empty() && warnings) warnings->push_back("empty feedback text");
  std::string out(kind == PromptKind::kMse ? kMsePrompt : kScoredPrompt);
  out += feedback;
  return out;
}

std::string sanitize_text(std::string_view text) {
  std::string out(trim(text));
  std::replace(out.begin(), out.end(), '|', '/');
  std::replace(out.begin(), out.end(), ';', '/');
  return out;
}

Entry sanitize(const Entry& e) {
  Entry out{sanitize_text(e.text), std::nullopt};
  if (e.confidence) {
    double c = std::round(*e.confidence * 100.0) / 100.0;
    if (c == 0.0) c = 0.0;  // no "-0.00"
    out.confidence = c;
  }
  return out;
}

std::vector<Entry> ordered(PromptKind kind, std::vector<Entry> entries, bool by_score) {
  if (has_scores(kind) || by_score) {
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.confidence.value_or(-INFINITY) > b.confidence.value_or(-INFINITY);
    });
  }
  return entries;
}

std::string serialize_target(PromptKind kind, const std::vector<Entry>& entries) {
  std::string out;
  for (const auto& raw : entries) {
    const Entry e = sanitize(raw);
    if (e.text.empty()) continue;
    if (!out.empty()) out += kEntrySep;
    out += e.text;
    if (has_scores(kind) && e.confidence) {
      out += kScoreSep;
      out += data::format_score(*e.confidence);
    }
  }
  return out;
}

ParseResult parse_output(PromptKind kind, std::string_view text) {
  ParseResult res;
  std::size_t start = 0;
  std::size_t index = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(kEntrySep, start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view chunk = trim(text.substr(start, end - start));
    start = end + kEntrySep.size();
    const std::string where = "entry " + std::to_string(index++);
    if (chunk.empty()) {
      if (!(text.empty() && index == 1)) res.warnings.push_back(where + ": empty");
      if (end == text.size()) break;
      continue;
    }
    if (!has_scores(kind)) {
      res.entries.push_back({std::string(chunk), std::nullopt});
    } else {
      const std::size_t sep = chunk.rfind(kScoreSep);
      if (sep == std::string_view::npos) {
        res.warnings.push_back(where + ": no confidence");
        res.entries.push_back({std::string(chunk), std::nullopt});
      } else {
        const std::string_view body = trim(chunk.substr(0, sep));
        const std::string_view num = trim(chunk.substr(sep + kScoreSep.size()));
        double v = 0.0;
        const auto r = std::from_chars(num.data(), num.data() + num.size(), v);
        if (body.empty()) res.warnings.push_back(where + ": empty verbatim");
        if (r.ec == std::errc() && r.ptr == num.data() + num.size() && std::isfinite(v)) {
          res.entries.push_back({std::string(body), v});
        } else {
          res.warnings.push_back(where + ": unparsable confidence \"" + std::string(num) + "\"");
          res.entries.push_back({std::string(body), std::nullopt});
        }
      }
    }
    if (end == text.size()) break;
  }
  return res;
}

}  // namespace mine::prompt
