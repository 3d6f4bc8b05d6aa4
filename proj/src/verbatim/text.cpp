#include "mine/verbatim/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "mine/core/error.hpp"
#include "mine/data/tokenizer.hpp"
#include "embedded_data.hpp"

namespace mine::verbatim {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool starts_with_ci(std::string_view s, std::size_t at, std::string_view prefix) {
  if (at + prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (lower(s[at + i]) != prefix[i]) return false;
  return true;
}

// U+00C0..U+00FF
constexpr std::array<const char*, 64> kLatin1 = {
    "A", "A", "A", "A", "A", "A", "AE", "C", "E", "E", "E", "E", "I", "I", "I", "I",
    "D", "N", "O", "O", "O", "O", "O", "x", "O", "U", "U", "U", "U", "Y", "TH", "ss",
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", "/", "o", "u", "u", "u", "u", "y", "th", "y"};

// U+0100..U+017F
constexpr std::array<const char*, 128> kLatinExtA = {
    "A", "a", "A", "a", "A", "a", "C", "c", "C", "c", "C", "c", "C", "c", "D", "d",
    "D", "d", "E", "e", "E", "e", "E", "e", "E", "e", "E", "e", "G", "g", "G", "g",
    "G", "g", "G", "g", "H", "h", "H", "h", "I", "i", "I", "i", "I", "i", "I", "i",
    "I", "i", "IJ", "ij", "J", "j", "K", "k", "k", "L", "l", "L", "l", "L", "l", "L",
    "l", "L", "l", "N", "n", "N", "n", "N", "n", "n", "N", "n", "O", "o", "O", "o",
    "O", "o", "OE", "oe", "R", "r", "R", "r", "R", "r", "S", "s", "S", "s", "S", "s",
    "S", "s", "T", "t", "T", "t", "T", "t", "U", "u", "U", "u", "U", "u", "U", "u",
    "U", "u", "U", "u", "W", "w", "Y", "y", "Y", "Z", "z", "Z", "z", "Z", "z", "s"};

const char* fold_codepoint(std::uint32_t cp) {
  if (cp >= 0xC0 && cp <= 0xFF) return kLatin1[cp - 0xC0];
  if (cp >= 0x100 && cp <= 0x17F) return kLatinExtA[cp - 0x100];
  if (cp >= 0x300 && cp <= 0x36F) return "";  // combining marks
  switch (cp) {
    case 0x2018: case 0x2019: case 0x201A: case 0x2032: return "'";
    case 0x201C: case 0x201D: case 0x201E: case 0x2033: case 0xAB: case 0xBB: return "\"";
    case 0x2010: case 0x2011: case 0x2013: case 0x2014: case 0x2212: return "-";
    case 0x2026: return "...";
    default: return " ";
  }
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x110000) {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

std::string decode_entities(std::string_view s) {
  static const std::array<std::pair<std::string_view, std::uint32_t>, 7> named = {{
      {"amp", '&'}, {"lt", '<'}, {"gt", '>'}, {"quot", '"'}, {"apos", '\''}, {"nbsp", 0xA0}, {"#39", '\''}}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    const std::size_t semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back(s[i]);
      continue;
    }
    const std::string_view name = s.substr(i + 1, semi - i - 1);
    std::uint32_t cp = 0;
    bool ok = false;
    for (const auto& [n, c] : named)
      if (name == n) cp = c, ok = true;
    if (!ok && name.size() > 1 && name[0] == '#') {
      const bool hex = name[1] == 'x' || name[1] == 'X';
      const std::string_view digits = name.substr(hex ? 2 : 1);
      ok = !digits.empty() && digits.size() <= 6;
      for (char c : digits) {
        const bool valid = hex ? std::isxdigit(static_cast<unsigned char>(c)) : std::isdigit(static_cast<unsigned char>(c));
        if (!valid) ok = false;
      }
      if (ok) cp = static_cast<std::uint32_t>(std::stoul(std::string(digits), nullptr, hex ? 16 : 10));
    }
    if (!ok) {
      out.push_back(s[i]);
      continue;
    }
    append_utf8(out, cp);
    i = semi;
  }
  return out;
}

bool is_block_tag(std::string_view tag) {
  std::string name;
  for (char c : tag) {
    if (c == '/' && name.empty()) continue;
    if (!std::isalpha(static_cast<unsigned char>(c))) break;
    name.push_back(lower(c));
  }
  static const std::array<std::string_view, 12> block = {"br", "p", "div", "li", "ul", "ol",
                                                          "tr", "td", "th", "h1", "h2", "hr"};
  return std::find(block.begin(), block.end(), name) != block.end() ||
         (name.size() == 1 && name[0] == 'h');
}

std::string strip_tags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool opener = s[i] == '<' && i + 1 < s.size() &&
                        (std::isalpha(static_cast<unsigned char>(s[i + 1])) || s[i + 1] == '/' || s[i + 1] == '!');
    const std::size_t close = opener ? s.find('>', i + 1) : std::string_view::npos;
    const std::size_t next_open = opener ? s.find('<', i + 1) : std::string_view::npos;
    if (close == std::string_view::npos || next_open < close) {
      out.push_back(s[i]);
      continue;
    }
    if (is_block_tag(s.substr(i + 1, close - i - 1))) out.push_back(' ');
    i = close;
  }
  return out;
}

std::string strip_urls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const bool word_start = i == 0 || is_space(s[i - 1]) || s[i - 1] == '(';
    if (word_start && (starts_with_ci(s, i, "http://") || starts_with_ci(s, i, "https://") ||
                       starts_with_ci(s, i, "www."))) {
      while (i < s.size() && !is_space(s[i])) ++i;
      continue;
    }
    out.push_back(s[i++]);
  }
  return out;
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (is_space(c) || u < 0x20 || u == 0x7F) {
      pending = !out.empty();
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

std::string one_pass(std::string_view s) {
  return collapse_spaces(fold_to_ascii(strip_urls(strip_tags(decode_entities(s)))));
}

}  // namespace

std::string fold_to_ascii(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto b = static_cast<unsigned char>(s[i]);
    if (b < 0x80) {
      out.push_back(s[i++]);
      continue;
    }
    std::size_t len = b >= 0xF0 ? 4 : b >= 0xE0 ? 3 : b >= 0xC0 ? 2 : 0;
    std::uint32_t cp = len == 4 ? b & 0x07 : len == 3 ? b & 0x0F : b & 0x1F;
    bool valid = len != 0 && i + len <= s.size();
    for (std::size_t k = 1; valid && k < len; ++k) {
      const auto c = static_cast<unsigned char>(s[i + k]);
      if ((c & 0xC0) != 0x80) valid = false;
      cp = (cp << 6) | (c & 0x3F);
    }
    if (!valid) {
      out.push_back(' ');
      ++i;
      continue;
    }
    out += fold_codepoint(cp);
    i += len;
  }
  return out;
}

std::string preprocess_text(std::string_view raw) {
  // Each step can expose input for another (an entity decoding to a tag),
  // so iterate to the fixed point. Every pass that changes the text either
  // shortens it or leaves it pure ASCII, so this terminates.
  std::string cur(raw);
  for (;;) {
    std::string next = one_pass(cur);
    if (next == cur) return next;
    cur = std::move(next);
  }
}

SegmentConfig SegmentConfig::parse(std::string_view tsv) {
  SegmentConfig cfg;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("conjunctions line " + std::to_string(n) + ": missing tab");
    std::string phrase = line.substr(0, tab);
    const std::string mode = line.substr(tab + 1);
    if (mode != "keep" && mode != "drop")
      throw ParseError("conjunctions line " + std::to_string(n) + ": mode must be keep or drop");
    std::transform(phrase.begin(), phrase.end(), phrase.begin(), lower);
    cfg.conjunctions.push_back({phrase, mode == "keep"});
  }
  return cfg;
}

SegmentConfig SegmentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open conjunctions file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

SegmentConfig SegmentConfig::defaults() {
  static const SegmentConfig cfg = parse(embedded::kConjunctionsTsv);
  return cfg;
}

std::vector<data::Verbatim> segment(std::string_view text, const std::string& review_id,
                                    const SegmentConfig& config) {
  struct Cut {
    std::size_t start, end;
  };
  std::vector<Cut> cuts;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (c == ';' || c == '!' || c == '?') cuts.push_back({i, i + 1});
    if (c == '.') {
      const bool decimal = i > 0 && i + 1 < n && std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
                           std::isdigit(static_cast<unsigned char>(text[i + 1]));
      if (!decimal) cuts.push_back({i, i + 1});
    }
  }
  for (const auto& conj : config.conjunctions) {
    const std::string& p = conj.phrase;
    if (p.empty()) continue;
    for (std::size_t i = 0; i + p.size() <= n; ++i) {
      if (!starts_with_ci(text, i, p)) continue;
      const std::size_t end = i + p.size();
      if (is_alnum(p.front()) && i > 0 && (is_alnum(text[i - 1]) || text[i - 1] == '\'')) continue;
      if (is_alnum(p.back()) && end < n && (is_alnum(text[end]) || text[end] == '\'')) continue;
      if (conj.keep) {
        std::size_t first_word = 0;
        while (first_word < p.size() && !is_alnum(p[first_word])) ++first_word;
        cuts.push_back({i, i + first_word});
      } else {
        cuts.push_back({i, end});
      }
    }
  }
  std::stable_sort(cuts.begin(), cuts.end(), [](const Cut& a, const Cut& b) { return a.start < b.start; });

  std::vector<data::CharSpan> pieces;
  std::size_t pos = 0;
  for (const auto& cut : cuts) {
    if (cut.start >= pos) pieces.push_back({pos, cut.start});
    pos = std::max(pos, cut.end);
  }
  pieces.push_back({pos, n});

  auto trimmable = [](char c) { return is_space(c) || c == ',' || c == ':' || c == '-'; };
  auto word_count = [](std::string_view s) {
    std::size_t words = 0;
    for (const auto& t : data::split_words(s)) {
      const auto c = static_cast<unsigned char>(t[0]);
      if (std::isalnum(c) || c >= 0x80) ++words;
    }
    return words;
  };

  std::vector<data::CharSpan> spans;
  for (auto span : pieces) {
    while (span.start < span.end && trimmable(text[span.start])) ++span.start;
    while (span.end > span.start && trimmable(text[span.end - 1])) --span.end;
    if (span.start == span.end) continue;
    if (word_count(text.substr(span.start, span.end - span.start)) < config.min_words) {
      if (!spans.empty()) spans.back().end = span.end;
      continue;
    }
    spans.push_back(span);
  }

  std::vector<data::Verbatim> out;
  out.reserve(spans.size());
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto& s = spans[k];
    out.push_back({review_id + "_v" + std::to_string(k), review_id,
                   std::string(text.substr(s.start, s.end - s.start)), s});
  }
  return out;
}

}  // namespace mine::verbatim
