#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

// Human-in-the-loop threshold calibration: stratified sampling of pairs to
// annotate, two-annotator label resolution, agreement, and threshold sweeps.
namespace mine::calibration {

enum class Relevance { kRelevant, kNotRelevant };

std::string relevance_name(Relevance r);
Relevance parse_relevance(const std::string& name);

struct AnnotationRecord {
  std::string pair_id;
  std::string annotator_id;
  Relevance label = Relevance::kNotRelevant;
  std::optional<std::string> guideline_tag;  // object | ocr | semantic
  std::string timestamp;

  nlohmann::json to_json() const;
  static AnnotationRecord from_json(const nlohmann::json& j);  // ParseError on schema violations
};

// Last-write-wins view: one record per (pair, annotator), in first-seen order.
std::vector<AnnotationRecord> latest_per_annotator(const std::vector<AnnotationRecord>& log);

struct Resolution {
  std::map<std::string, Relevance> labels;
  std::vector<std::string> unresolved;  // fewer than two annotators, or an unbroken tie
};

// Needs at least two annotators; a strict majority of them decides. Two
// annotators in conflict stay unresolved until a third weighs in.
Resolution resolve_annotations(const std::vector<AnnotationRecord>& records);

// 2x2 agreement counts; first index annotator A, second B, relevant first.
struct AgreementTable {
  std::size_t rel_rel = 0, rel_not = 0, not_rel = 0, not_not = 0;
  std::size_t total() const { return rel_rel + rel_not + not_rel + not_not; }
};

AgreementTable agreement_table(const std::vector<AnnotationRecord>& records, const std::string& annotator_a,
                               const std::string& annotator_b);
// (p_o - p_e) / (1 - p_e). When p_e == 1 both annotators used one label
// throughout and agree perfectly; that returns 1 by convention. An empty
// table is a ContractError.
double cohens_kappa(const AgreementTable& table);

// For every cluster and each category present in it, draw
// min(floor(K / num_categories), cell size) items without replacement.
// Returns item indices grouped by cluster, then category name.
std::vector<std::size_t> stratified_sample(const std::vector<std::size_t>& cluster_of,
                                           const std::vector<std::string>& category_of, std::size_t num_categories,
                                           std::size_t k, std::uint64_t seed);

struct LabeledScore {
  double score = 0.0;
  bool relevant = false;
  std::string category;
};

struct CurvePoint {
  double threshold = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive (see no_predictions)
  double recall = 0.0;
  double f1 = 0.0;
  double coverage = 0.0;   // share of the num_categories with a predicted positive
  std::size_t tp = 0, fp = 0, fn = 0;
  bool no_predictions = false;
};

// Grid 0.19, 0.20, ..., 0.31.
std::vector<double> default_grid();
// lo, lo + step, ... <= hi, each value computed as lo + i * step.
std::vector<double> make_grid(double lo, double hi, double step);

// At each threshold t a pair is predicted positive iff score >= t. The grid
// must be strictly increasing.
std::vector<CurvePoint> sweep_thresholds(const std::vector<LabeledScore>& pairs, const std::vector<double>& grid,
                                         std::size_t num_categories);

struct SelectionPolicy {
  enum class Kind { kPrecisionFloor, kMaxF1, kFixed };
  Kind kind = Kind::kMaxF1;
  double value = 0.0;

  static SelectionPolicy precision_floor(double p) { return {Kind::kPrecisionFloor, p}; }
  static SelectionPolicy max_f1() { return {Kind::kMaxF1, 0.0}; }
  static SelectionPolicy fixed(double t) { return {Kind::kFixed, t}; }
  // "precision_floor:0.9", "max_f1", "fixed:0.225"
  static SelectionPolicy parse(const std::string& text);
  std::string to_string() const;
};

// precision_floor(p): smallest threshold with precision >= p; max_f1: best
// F1, ties to the higher threshold; fixed(t): t. An unattainable floor
// raises ContractError naming the best precision on the curve.
double select_threshold(const std::vector<CurvePoint>& curve, const SelectionPolicy& policy);

// CSV with header threshold,precision,recall,f1,coverage,tp,fp,fn. Doubles
// use the shortest round-trip form so exports are byte-stable.
std::string curve_to_csv(const std::vector<CurvePoint>& curve);
nlohmann::json curve_to_json(const std::vector<CurvePoint>& curve);
std::string format_double(double v);

// Append-only JSONL annotation log. Writes serialize through one mutex;
// reads return a snapshot.
class AnnotationStore {
 public:
  enum class AppendResult { kAdded, kOverwritten, kDuplicate };

  explicit AnnotationStore(std::filesystem::path log_path);

  // A second label for the same (pair, annotator) is refused unless
  // overwrite is set; refused labels are not logged.
  AppendResult append(const AnnotationRecord& record, bool overwrite = false);
  std::vector<AnnotationRecord> log() const;      // full audit trail
  std::vector<AnnotationRecord> current() const;  // last write per (pair, annotator)
  bool has_label(const std::string& pair_id, const std::string& annotator_id) const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<AnnotationRecord> log_;
  std::map<std::pair<std::string, std::string>, std::size_t> latest_;
};

}  // namespace mine::calibration
