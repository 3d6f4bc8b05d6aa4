#include "mine/evaluation/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>
#include <tuple>

#include "mine/calibration/calibration.hpp"
#include "mine/core/error.hpp"

namespace mine::evaluation {

using nlohmann::json;

namespace {

std::vector<std::string> words(std::string_view normalized) {
  std::vector<std::string> out;
  std::istringstream in{std::string(normalized)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

MatchPolicy MatchPolicy::parse(const std::string& text) {
  if (text == "exact" || text == "exact_normalized") return exact();
  const std::string prefix = "token_f1:";
  if (text.starts_with(prefix)) {
    const std::string num = text.substr(prefix.size());
    double v = 0.0;
    const auto r = std::from_chars(num.data(), num.data() + num.size(), v);
    if (r.ec == std::errc() && r.ptr == num.data() + num.size()) {
      MatchPolicy p = token_f1(v);
      p.validate();
      return p;
    }
  }
  throw ParseError("match policy must be exact or token_f1:T, got \"" + text + "\"");
}

std::string MatchPolicy::to_string() const {
  return mode == Mode::kExactNormalized ? "exact" : "token_f1:" + calibration::format_double(threshold);
}

void MatchPolicy::validate() const {
  if (mode == Mode::kTokenF1 && !(threshold > 0.0 && threshold <= 1.0))
    throw ContractError("token_f1 threshold must lie in (0, 1]");
}

std::string normalize(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  while (!out.empty() && (std::ispunct(static_cast<unsigned char>(out.back())) || out.back() == ' ')) {
    out.pop_back();
  }
  return out;
}

double token_f1(std::string_view a, std::string_view b) {
  auto wa = words(normalize(a)), wb = words(normalize(b));
  if (wa.empty() || wb.empty()) return 0.0;
  std::sort(wa.begin(), wa.end());
  std::sort(wb.begin(), wb.end());
  std::vector<std::string> common;
  std::set_intersection(wa.begin(), wa.end(), wb.begin(), wb.end(), std::back_inserter(common));
  const double c = static_cast<double>(common.size());
  return 2.0 * c / static_cast<double>(wa.size() + wb.size());
}

double match_score(std::string_view prediction, std::string_view gold, const MatchPolicy& policy) {
  if (policy.mode == MatchPolicy::Mode::kExactNormalized) {
    const std::string p = normalize(prediction);
    return !p.empty() && p == normalize(gold) ? 1.0 : 0.0;
  }
  const double f = token_f1(prediction, gold);
  return f >= policy.threshold ? f : 0.0;
}

std::vector<int> assign(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
                        const MatchPolicy& policy) {
  policy.validate();
  std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    for (std::size_t j = 0; j < gold.size(); ++j)
      if (const double s = match_score(predictions[i], gold[j], policy); s > 0.0) edges.emplace_back(-s, i, j);
  std::sort(edges.begin(), edges.end());
  std::vector<int> out(predictions.size(), -1);
  std::vector<bool> taken(gold.size(), false);
  for (const auto& [neg, i, j] : edges) {
    if (out[i] != -1 || taken[j]) continue;
    out[i] = static_cast<int>(j);
    taken[j] = true;
  }
  return out;
}

bool is_complete(std::string_view prediction, std::string_view source) {
  const std::string p = normalize(prediction);
  if (words(p).size() < 2) return false;
  return normalize(source).find(p) != std::string::npos;
}

Metrics Metrics::from_counts(const Counts& c) {
  Metrics m;
  m.counts = c;
  m.no_predictions = c.predictions == 0;
  m.no_gold = c.gold == 0;
  if (!m.no_predictions) {
    m.precision = static_cast<double>(c.correct) / static_cast<double>(c.predictions);
    m.completeness = static_cast<double>(c.complete) / static_cast<double>(c.predictions);
  }
  m.recall = m.no_gold ? 1.0 : static_cast<double>(c.correct) / static_cast<double>(c.gold);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

json Metrics::to_json() const {
  return {{"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"completeness", completeness},
          {"predictions", counts.predictions},
          {"gold", counts.gold},
          {"correct", counts.correct},
          {"complete", counts.complete},
          {"no_predictions", no_predictions},
          {"no_gold", no_gold}};
}

double completeness(const std::vector<std::string>& predictions, const std::vector<std::string>& sources) {
  if (predictions.size() != sources.size()) throw ContractError("completeness: one source per prediction");
  Counts c;
  c.predictions = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) c.complete += is_complete(predictions[i], sources[i]);
  return Metrics::from_counts(c).completeness;
}

namespace {
Counts credit(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
              const MatchPolicy& policy) {
  Counts c;
  c.predictions = predictions.size();
  c.gold = gold.size();
  for (int j : assign(predictions, gold, policy)) c.correct += j >= 0;
  return c;
}
}  // namespace

double correctness_precision(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
                             const MatchPolicy& policy) {
  return Metrics::from_counts(credit(predictions, gold, policy)).precision;
}

double recall(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
              const MatchPolicy& policy) {
  return Metrics::from_counts(credit(predictions, gold, policy)).recall;
}

json EvalReport::to_json() const {
  json cats = json::object();
  for (const auto& [k, m] : per_category) cats[k] = m.to_json();
  return {{"format_version", 1}, {"policy", policy}, {"overall", overall.to_json()}, {"per_category", cats}};
}

EvalReport evaluate_run(const std::vector<EvalItem>& items, const MatchPolicy& policy) {
  policy.validate();
  Counts total;
  std::map<std::string, Counts> cats;
  for (const auto& item : items) {
    Counts c = credit(item.predictions, item.gold, policy);
    for (const auto& p : item.predictions) c.complete += is_complete(p, item.source_text);
    for (Counts* dst : {&total, &cats[item.category]}) {
      dst->predictions += c.predictions;
      dst->gold += c.gold;
      dst->correct += c.correct;
      dst->complete += c.complete;
    }
  }
  EvalReport r;
  r.policy = policy.to_string();
  r.overall = Metrics::from_counts(total);
  for (const auto& [k, c] : cats) r.per_category[k] = Metrics::from_counts(c);
  return r;
}

std::string report_csv_header() { return "model,prompt_kind,decode,precision,recall,f1,completeness\n"; }

std::string report_csv_row(const std::string& model, const std::string& prompt_kind, const std::string& decode,
                           const EvalReport& report) {
  using calibration::format_double;
  const Metrics& m = report.overall;
  return model + ',' + prompt_kind + ',' + decode + ',' + format_double(m.precision) + ',' + format_double(m.recall) +
         ',' + format_double(m.f1) + ',' + format_double(m.completeness) + '\n';
}

}  // namespace mine::evaluation
