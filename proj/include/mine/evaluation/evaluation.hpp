#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

// Precision (correctness), recall, F1 and completeness of generated
// verbatims against gold relevant verbatims, with one-to-one crediting.
namespace mine::evaluation {

struct MatchPolicy {
  enum class Mode { kExactNormalized, kTokenF1 };
  Mode mode = Mode::kExactNormalized;
  double threshold = 0.8;  // token_f1 only, in (0, 1]

  static MatchPolicy exact() { return {}; }
  static MatchPolicy token_f1(double t) { return {Mode::kTokenF1, t}; }
  // "exact" or "token_f1:0.8"
  static MatchPolicy parse(const std::string& text);
  std::string to_string() const;
  void validate() const;
};

// Lowercase, collapse whitespace, strip trailing punctuation.
std::string normalize(std::string_view text);
// Token-multiset F1 of the normalized texts.
double token_f1(std::string_view a, std::string_view b);
// Match strength in [0, 1]; 0 means no match under the policy.
double match_score(std::string_view prediction, std::string_view gold, const MatchPolicy& policy);

// Greedy one-to-one assignment by descending match score (ties: lower
// prediction index, then lower gold index). Entry i is the gold index
// credited to prediction i, or -1.
std::vector<int> assign(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
                        const MatchPolicy& policy);

// A prediction is complete when its normalized text has at least two
// tokens and occurs inside the normalized source.
bool is_complete(std::string_view prediction, std::string_view source);

struct Counts {
  std::size_t predictions = 0;
  std::size_t gold = 0;
  std::size_t correct = 0;   // credited predictions (= matched gold)
  std::size_t complete = 0;
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double completeness = 0.0;
  Counts counts;
  bool no_predictions = false;  // precision and completeness defined as 0
  bool no_gold = false;         // recall defined as 1

  static Metrics from_counts(const Counts& c);
  nlohmann::json to_json() const;
};

double completeness(const std::vector<std::string>& predictions, const std::vector<std::string>& sources);
double correctness_precision(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
                             const MatchPolicy& policy);
double recall(const std::vector<std::string>& predictions, const std::vector<std::string>& gold,
              const MatchPolicy& policy);

// One (review, image) unit of a run.
struct EvalItem {
  std::string review_id;
  std::string image_path;
  std::string category;
  std::string source_text;
  std::vector<std::string> predictions;
  std::vector<std::string> gold;  // relevant verbatims for this image
};

struct EvalReport {
  Metrics overall;
  std::map<std::string, Metrics> per_category;
  std::string policy;

  nlohmann::json to_json() const;
};

// Crediting is per item, so a verbatim repeated across images never counts
// against the wrong image.
EvalReport evaluate_run(const std::vector<EvalItem>& items, const MatchPolicy& policy);

// Results CSV: header plus one row per (model, prompt kind, decode).
std::string report_csv_header();
std::string report_csv_row(const std::string& model, const std::string& prompt_kind, const std::string& decode,
                           const EvalReport& report);

}  // namespace mine::evaluation
