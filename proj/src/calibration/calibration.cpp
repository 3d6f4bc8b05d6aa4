#include "mine/calibration/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mine/core/error.hpp"
#include "mine/core/rng.hpp"

namespace mine::calibration {

using nlohmann::json;

std::string relevance_name(Relevance r) { return r == Relevance::kRelevant ? "relevant" : "not_relevant"; }

Relevance parse_relevance(const std::string& name) {
  if (name == "relevant") return Relevance::kRelevant;
  if (name == "not_relevant") return Relevance::kNotRelevant;
  throw ParseError("label must be relevant or not_relevant, got \"" + name + "\"");
}

json AnnotationRecord::to_json() const {
  json j = {{"pair_id", pair_id}, {"annotator_id", annotator_id}, {"label", relevance_name(label)},
            {"timestamp", timestamp}};
  if (guideline_tag) j["guideline_tag"] = *guideline_tag;
  return j;
}

AnnotationRecord AnnotationRecord::from_json(const json& j) {
  auto text = [&](const char* key) -> std::string {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_string())
      throw ParseError(std::string("annotation: missing string field \"") + key + "\"");
    return j.at(key).get<std::string>();
  };
  AnnotationRecord r;
  r.pair_id = text("pair_id");
  r.annotator_id = text("annotator_id");
  r.label = parse_relevance(text("label"));
  if (r.pair_id.empty() || r.annotator_id.empty()) throw ParseError("annotation: empty pair_id or annotator_id");
  if (j.contains("timestamp") && j.at("timestamp").is_string()) r.timestamp = j.at("timestamp").get<std::string>();
  if (j.contains("guideline_tag") && !j.at("guideline_tag").is_null()) {
    const std::string tag = text("guideline_tag");
    if (tag != "object" && tag != "ocr" && tag != "semantic")
      throw ParseError("annotation: guideline_tag must be object, ocr or semantic");
    r.guideline_tag = tag;
  }
  return r;
}

std::vector<AnnotationRecord> latest_per_annotator(const std::vector<AnnotationRecord>& log) {
  std::vector<AnnotationRecord> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : log) {
    auto [it, fresh] = index.emplace(std::make_pair(r.pair_id, r.annotator_id), out.size());
    if (fresh) out.push_back(r);
    else out[it->second] = r;
  }
  return out;
}

Resolution resolve_annotations(const std::vector<AnnotationRecord>& records) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::size_t, std::size_t>> votes;  // relevant, not relevant
  for (const auto& r : latest_per_annotator(records)) {
    auto [it, fresh] = votes.emplace(r.pair_id, std::make_pair(0, 0));
    if (fresh) order.push_back(r.pair_id);
    (r.label == Relevance::kRelevant ? it->second.first : it->second.second) += 1;
  }
  Resolution out;
  for (const auto& id : order) {
    const auto [rel, nrel] = votes[id];
    if (rel + nrel < 2 || rel == nrel) out.unresolved.push_back(id);
    else out.labels[id] = rel > nrel ? Relevance::kRelevant : Relevance::kNotRelevant;
  }
  return out;
}

AgreementTable agreement_table(const std::vector<AnnotationRecord>& records, const std::string& a,
                               const std::string& b) {
  std::map<std::string, Relevance> la, lb;
  for (const auto& r : latest_per_annotator(records)) {
    if (r.annotator_id == a) la[r.pair_id] = r.label;
    if (r.annotator_id == b) lb[r.pair_id] = r.label;
  }
  AgreementTable t;
  for (const auto& [pair, x] : la) {
    const auto it = lb.find(pair);
    if (it == lb.end()) continue;
    const bool xr = x == Relevance::kRelevant, yr = it->second == Relevance::kRelevant;
    if (xr && yr) ++t.rel_rel;
    else if (xr) ++t.rel_not;
    else if (yr) ++t.not_rel;
    else ++t.not_not;
  }
  return t;
}

double cohens_kappa(const AgreementTable& t) {
  const double n = static_cast<double>(t.total());
  if (n == 0) throw ContractError("cohens_kappa: no co-annotated pairs");
  const double po = static_cast<double>(t.rel_rel + t.not_not) / n;
  const double a_rel = static_cast<double>(t.rel_rel + t.rel_not) / n;
  const double b_rel = static_cast<double>(t.rel_rel + t.not_rel) / n;
  const double pe = a_rel * b_rel + (1.0 - a_rel) * (1.0 - b_rel);
  if (pe == 1.0) return 1.0;
  return (po - pe) / (1.0 - pe);
}

std::vector<std::size_t> stratified_sample(const std::vector<std::size_t>& cluster_of,
                                           const std::vector<std::string>& category_of, std::size_t num_categories,
                                           std::size_t k, std::uint64_t seed) {
  if (cluster_of.size() != category_of.size())
    throw ContractError("stratified_sample: cluster and category lists differ in length");
  if (num_categories == 0) throw ContractError("stratified_sample: need at least one category");
  const std::size_t per_cell = k / num_categories;
  std::map<std::size_t, std::map<std::string, std::vector<std::size_t>>> cells;
  for (std::size_t i = 0; i < cluster_of.size(); ++i) cells[cluster_of[i]][category_of[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (auto& [cluster, by_category] : cells) {
    for (auto& [category, members] : by_category) {
      const std::size_t take = std::min(per_cell, members.size());
      // Partial Fisher-Yates: the first `take` slots become the draw.
      for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.below(members.size() - i);
        std::swap(members[i], members[j]);
        out.push_back(members[i]);
      }
    }
  }
  return out;
}

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi)) throw ContractError("make_grid: bad range");
  std::vector<double> g;
  for (std::size_t i = 0;; ++i) {
    // Round to 12 decimals so 0.19 + 3 * 0.01 prints as 0.22.
    const double v = std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12;
    if (v > hi + 1e-12) break;
    g.push_back(v);
  }
  return g;
}

std::vector<double> default_grid() { return make_grid(0.19, 0.31, 0.01); }

std::vector<CurvePoint> sweep_thresholds(const std::vector<LabeledScore>& pairs, const std::vector<double>& grid,
                                         std::size_t num_categories) {
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ContractError("sweep_thresholds: grid must be strictly increasing");
  std::size_t positives = 0;
  for (const auto& p : pairs) positives += p.relevant;
  std::vector<CurvePoint> curve;
  curve.reserve(grid.size());
  for (double t : grid) {
    CurvePoint c;
    c.threshold = t;
    std::set<std::string> covered;
    for (const auto& p : pairs) {
      if (p.score < t) continue;
      (p.relevant ? c.tp : c.fp) += 1;
      covered.insert(p.category);
    }
    c.fn = positives - c.tp;
    c.no_predictions = c.tp + c.fp == 0;
    c.precision = c.no_predictions ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    c.recall = positives == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(positives);
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn); the integer form is exact, so
    // equal F1 fractions compare equal.
    const std::size_t denom = 2 * c.tp + c.fp + c.fn;
    c.f1 = c.tp == 0 ? 0.0 : static_cast<double>(2 * c.tp) / static_cast<double>(denom);
    c.coverage = num_categories == 0 ? 0.0
                                     : static_cast<double>(std::min(covered.size(), num_categories)) /
                                           static_cast<double>(num_categories);
    curve.push_back(c);
  }
  return curve;
}

SelectionPolicy SelectionPolicy::parse(const std::string& text) {
  if (text == "max_f1") return max_f1();
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string kind = text.substr(0, colon);
    double v = 0.0;
    const std::string num = text.substr(colon + 1);
    const auto res = std::from_chars(num.data(), num.data() + num.size(), v);
    if (res.ec == std::errc() && res.ptr == num.data() + num.size() && std::isfinite(v)) {
      if (kind == "precision_floor") return precision_floor(v);
      if (kind == "fixed") return fixed(v);
    }
  }
  throw ParseError("policy must be precision_floor:P, max_f1 or fixed:T, got \"" + text + "\"");
}

std::string SelectionPolicy::to_string() const {
  switch (kind) {
    case Kind::kPrecisionFloor: return "precision_floor:" + format_double(value);
    case Kind::kMaxF1: return "max_f1";
    case Kind::kFixed: return "fixed:" + format_double(value);
  }
  return "max_f1";
}

double select_threshold(const std::vector<CurvePoint>& curve, const SelectionPolicy& policy) {
  if (policy.kind == SelectionPolicy::Kind::kFixed) return policy.value;
  if (curve.empty()) throw ContractError("select_threshold: empty curve");
  if (policy.kind == SelectionPolicy::Kind::kPrecisionFloor) {
    const CurvePoint* best = nullptr;
    const CurvePoint* top = &curve.front();
    for (const auto& c : curve) {
      if (c.precision > top->precision) top = &c;
      if (c.precision >= policy.value && (!best || c.threshold < best->threshold)) best = &c;
    }
    if (!best)
      throw ContractError("precision floor " + format_double(policy.value) + " unattainable: max precision " +
                          format_double(top->precision) + " at threshold " + format_double(top->threshold));
    return best->threshold;
  }
  const CurvePoint* best = &curve.front();
  for (const auto& c : curve)
    if (c.f1 > best->f1 || (c.f1 == best->f1 && c.threshold > best->threshold)) best = &c;
  return best->threshold;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "threshold,precision,recall,f1,coverage,tp,fp,fn\n";
  for (const auto& c : curve) {
    out += format_double(c.threshold) + ',' + format_double(c.precision) + ',' + format_double(c.recall) + ',' +
           format_double(c.f1) + ',' + format_double(c.coverage) + ',' + std::to_string(c.tp) + ',' +
           std::to_string(c.fp) + ',' + std::to_string(c.fn) + '\n';
  }
  return out;
}

json curve_to_json(const std::vector<CurvePoint>& curve) {
  json arr = json::array();
  for (const auto& c : curve) {
    arr.push_back({{"threshold", c.threshold}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1},
                   {"coverage", c.coverage}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn},
                   {"no_predictions", c.no_predictions}});
  }
  return arr;
}

AnnotationStore::AnnotationStore(std::filesystem::path log_path) : path_(std::move(log_path)) {
  std::ifstream in(path_);
  std::string line;
  std::size_t n = 0;
  while (in && std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const AnnotationRecord r = AnnotationRecord::from_json(json::parse(line));
      latest_[{r.pair_id, r.annotator_id}] = log_.size();
      log_.push_back(r);
    } catch (const std::exception& e) {
      throw ParseError(path_.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

AnnotationStore::AppendResult AnnotationStore::append(const AnnotationRecord& record, bool overwrite) {
  std::lock_guard lock(mutex_);
  const auto key = std::make_pair(record.pair_id, record.annotator_id);
  const bool exists = latest_.count(key) > 0;
  if (exists && !overwrite) return AppendResult::kDuplicate;
  if (!path_.empty()) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << record.to_json().dump() << '\n';
    if (!out) throw std::runtime_error("cannot append to annotation log " + path_.string());
  }
  latest_[key] = log_.size();
  log_.push_back(record);
  return exists ? AppendResult::kOverwritten : AppendResult::kAdded;
}

std::vector<AnnotationRecord> AnnotationStore::log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::vector<AnnotationRecord> AnnotationStore::current() const {
  std::lock_guard lock(mutex_);
  return latest_per_annotator(log_);
}

bool AnnotationStore::has_label(const std::string& pair_id, const std::string& annotator_id) const {
  std::lock_guard lock(mutex_);
  return latest_.count({pair_id, annotator_id}) > 0;
}

}  // namespace mine::calibration
