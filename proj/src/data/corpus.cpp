#include "mine/data/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "mine/core/error.hpp"

namespace mine::data {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  return out;
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(n, line);
  }
}

const json& field(const json& obj, const char* name) {
  if (!obj.contains(name)) throw ParseError(std::string("missing field \"") + name + "\"");
  return obj.at(name);
}

}  // namespace

CorpusLoad load_corpus(const std::filesystem::path& path) {
  CorpusLoad out;
  std::set<std::string> ids;
  for_each_line(path, [&](std::size_t n, const std::string& line) {
    try {
      const json obj = json::parse(line);
      if (!obj.is_object()) throw ParseError("line is not a JSON object");
      ReviewRecord r;
      r.review_id = field(obj, "review_id").get<std::string>();
      r.text = field(obj, "text").get<std::string>();
      r.image_paths = field(obj, "image_paths").get<std::vector<std::string>>();
      r.category = field(obj, "category").get<std::string>();
      if (!ids.insert(r.review_id).second) {
        throw ParseError("duplicate review_id \"" + r.review_id + "\"");
      }
      out.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      out.errors.push_back({n, e.what()});
    } catch (const ParseError& e) {
      out.errors.push_back({n, e.what()});
    }
  });
  return out;
}

void save_corpus(const std::filesystem::path& path,
                 const std::vector<ReviewRecord>& records) {
  auto out = open_out(path);
  for (const auto& r : records) {
    json obj = {{"review_id", r.review_id},
                {"text", r.text},
                {"image_paths", r.image_paths},
                {"category", r.category}};
    out << obj.dump() << '\n';
  }
}

std::string format_score(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", round_score(score));
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

double round_score(double score) { return std::round(score * 100.0) / 100.0; }

std::string label_name(PairLabel label) {
  return label == PairLabel::kPositive ? "positive" : "negative";
}

PairLabel parse_label(const std::string& name) {
  if (name == "positive") return PairLabel::kPositive;
  if (name == "negative") return PairLabel::kNegative;
  throw ParseError("unknown pair label \"" + name + "\"");
}

std::vector<PairRecord> load_pairs(const std::filesystem::path& path) {
  std::vector<PairRecord> pairs;
  for_each_line(path, [&](std::size_t n, const std::string& line) {
    try {
      const json obj = json::parse(line);
      PairRecord p;
      p.pair_id = field(obj, "pair_id").get<std::string>();
      p.verbatim_id = field(obj, "verbatim_id").get<std::string>();
      p.review_id = field(obj, "review_id").get<std::string>();
      p.verbatim = field(obj, "verbatim").get<std::string>();
      p.image_path = field(obj, "image_path").get<std::string>();
      p.score = field(obj, "score").get<double>();
      if (obj.contains("category")) p.category = obj.at("category").get<std::string>();
      if (obj.contains("label") && !obj.at("label").is_null())
        p.label = parse_label(obj.at("label").get<std::string>());
      if (obj.contains("confidence") && !obj.at("confidence").is_null())
        p.confidence = obj.at("confidence").get<double>();
      if (obj.contains("error")) p.error = obj.at("error").get<std::string>();
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return pairs;
}

void save_pairs(const std::filesystem::path& path,
                const std::vector<PairRecord>& pairs) {
  auto out = open_out(path);
  for (const auto& p : pairs) {
    // Scores are rounded only here, at serialization.
    json obj = {{"pair_id", p.pair_id},     {"verbatim_id", p.verbatim_id},
                {"review_id", p.review_id}, {"verbatim", p.verbatim},
                {"image_path", p.image_path}};
    if (!p.category.empty()) obj["category"] = p.category;
    obj["score"] = json::parse(format_score(p.score));
    if (p.label) obj["label"] = label_name(*p.label);
    if (p.confidence) obj["confidence"] = json::parse(format_score(*p.confidence));
    if (p.error) obj["error"] = *p.error;
    out << obj.dump() << '\n';
  }
}

std::vector<Verbatim> load_verbatims(const std::filesystem::path& path) {
  std::vector<Verbatim> out;
  for_each_line(path, [&](std::size_t n, const std::string& line) {
    try {
      const json obj = json::parse(line);
      Verbatim v;
      v.verbatim_id = field(obj, "verbatim_id").get<std::string>();
      v.review_id = field(obj, "review_id").get<std::string>();
      v.text = field(obj, "text").get<std::string>();
      const auto span = field(obj, "char_span").get<std::vector<std::size_t>>();
      if (span.size() != 2) throw ParseError("char_span must have two entries");
      v.span = {span[0], span[1]};
      out.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

void save_verbatims(const std::filesystem::path& path,
                    const std::vector<Verbatim>& verbatims) {
  auto out = open_out(path);
  for (const auto& v : verbatims) {
    json obj = {{"verbatim_id", v.verbatim_id},
                {"review_id", v.review_id},
                {"text", v.text},
                {"char_span", {v.span.start, v.span.end}}};
    out << obj.dump() << '\n';
  }
}

}  // namespace mine::data
