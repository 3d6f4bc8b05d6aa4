#include "mine/pipeline/service.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <map>
#include <set>

#include "httplib.h"
#include "json.hpp"
#include "mine/core/error.hpp"
#include "mine/data/image.hpp"
#include "mine/pipeline/pipeline.hpp"

namespace mine::pipeline {

using nlohmann::json;
using calibration::AnnotationRecord;
using calibration::AnnotationStore;

const std::vector<std::string>& guideline_reminders() {
  static const std::vector<std::string> g = {
      "object: relevant if the verbatim names an object or part visible in the image",
      "ocr: relevant if the verbatim refers to text printed in the image",
      "semantic: relevant if the image shows the situation the verbatim describes"};
  return g;
}

namespace {

void send_error(httplib::Response& res, int status, const std::string& type, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"type", type}, {"message", message}}}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double parse_number(const std::string& s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ParseError("not a number: '" + s + "'");
  return v;
}

// "lo,hi,step"
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    parts.push_back(parse_number(text.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (parts.size() != 3) throw ParseError("grid must be lo,hi,step");
  return calibration::make_grid(parts[0], parts[1], parts[2]);
}

}  // namespace

struct AnnotationService::Impl {
  ServiceConfig config;
  AnnotationStore store;
  std::map<std::string, std::size_t> index;  // pair_id -> position in config.pairs
  httplib::Server server;

  explicit Impl(ServiceConfig c) : config(std::move(c)), store(config.annotation_log) {
    std::set<std::string> cats;
    for (std::size_t i = 0; i < config.pairs.size(); ++i) {
      index[config.pairs[i].pair_id] = i;
      cats.insert(config.pairs[i].category);
    }
    if (config.num_categories == 0) config.num_categories = cats.size();
    routes();
  }

  std::vector<calibration::CurvePoint> curve(const std::vector<double>& grid) const {
    return calibration::sweep_thresholds(resolved_scores(config.pairs, store.log()), grid, config.num_categories);
  }

  json pair_payload(const data::PairRecord& p) const {
    json j = {{"pair_id", p.pair_id},
              {"verbatim", p.verbatim},
              {"category", p.category},
              {"image_path", p.image_path},
              {"image_url", "/api/images/" + p.pair_id},
              {"guidelines", guideline_reminders()}};
    try {
      const auto bytes = data::encode_ppm(data::read_ppm(config.image_root / p.image_path));
      j["image_base64"] = httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
    } catch (const std::exception& e) {
      j["image_base64"] = nullptr;
      j["image_error"] = e.what();
    }
    return j;
  }

  void next_pair(const httplib::Request& req, httplib::Response& res) const {
    const std::string who = req.get_param_value("annotator");
    if (who.empty()) return send_error(res, 400, "schema", "annotator query parameter is required");
    std::map<std::string, std::set<std::string>> labelers;
    const auto current = store.current();
    for (const auto& r : current) labelers[r.pair_id].insert(r.annotator_id);
    // First pass: pairs still short of their two annotators.
    for (const auto& p : config.pairs) {
      const auto& s = labelers[p.pair_id];
      if (s.size() < 2 && !s.count(who)) {
        json j = pair_payload(p);
        j["role"] = "primary";
        return send_json(res, j);
      }
    }
    // Then the third-annotator queue: tied pairs this annotator has not seen.
    const auto resolution = calibration::resolve_annotations(current);
    for (const auto& id : resolution.unresolved) {
      auto it = index.find(id);
      if (it == index.end() || labelers[id].size() < 2 || labelers[id].count(who)) continue;
      json j = pair_payload(config.pairs[it->second]);
      j["role"] = "tiebreak";
      j["conflict"] = true;
      return send_json(res, j);
    }
    send_json(res, {{"done", true}, {"annotator", who}});
  }

  void post_label(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      return send_error(res, 400, "schema", std::string("body is not JSON: ") + e.what());
    }
    if (!body.is_object()) return send_error(res, 400, "schema", "body must be a JSON object");
    if (body.contains("annotator") && !body.contains("annotator_id")) body["annotator_id"] = body["annotator"];
    bool overwrite = false;
    if (body.contains("overwrite")) {
      if (!body.at("overwrite").is_boolean()) return send_error(res, 400, "schema", "overwrite must be a boolean");
      overwrite = body.at("overwrite").get<bool>();
    }
    AnnotationRecord record;
    try {
      record = AnnotationRecord::from_json(body);
    } catch (const ParseError& e) {
      return send_error(res, 400, "schema", e.what());
    }
    if (!index.count(record.pair_id)) return send_error(res, 404, "not_found", "unknown pair " + record.pair_id);
    record.timestamp = utc_now();
    switch (store.append(record, overwrite)) {
      case AnnotationStore::AppendResult::kDuplicate:
        return send_error(res, 409, "duplicate",
                          record.annotator_id + " already labeled " + record.pair_id + "; resend with overwrite=true");
      case AnnotationStore::AppendResult::kOverwritten:
        return send_json(res, {{"status", "overwritten"}, {"record", record.to_json()}}, 201);
      case AnnotationStore::AppendResult::kAdded:
        return send_json(res, {{"status", "added"}, {"record", record.to_json()}}, 201);
    }
  }

  void agreement(const httplib::Request& req, httplib::Response& res) const {
    const auto current = store.current();
    std::map<std::string, std::size_t> per_annotator;
    std::map<std::string, std::map<std::string, std::string>> labels;  // pair -> annotator -> label
    for (const auto& r : current) {
      ++per_annotator[r.annotator_id];
      labels[r.pair_id][r.annotator_id] = calibration::relevance_name(r.label);
    }
    std::string a = req.get_param_value("a"), b = req.get_param_value("b");
    if (a.empty() || b.empty()) {
      // The two most active annotators, ties by name.
      std::vector<std::pair<std::size_t, std::string>> ranked;
      for (const auto& [name, n] : per_annotator) ranked.push_back({n, name});
      std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
      if (a.empty() && ranked.size() > 0) a = ranked[0].second;
      if (b.empty() && ranked.size() > 1) b = ranked[1].second == a ? ranked[0].second : ranked[1].second;
    }
    json out = {{"annotators", {a, b}}, {"kappa", nullptr}};
    const auto table = calibration::agreement_table(current, a, b);
    out["table"] = {{"relevant_relevant", table.rel_rel},
                    {"relevant_not_relevant", table.rel_not},
                    {"not_relevant_relevant", table.not_rel},
                    {"not_relevant_not_relevant", table.not_not}};
    if (table.total() > 0) out["kappa"] = calibration::cohens_kappa(table);
    const auto resolution = calibration::resolve_annotations(current);
    json conflicts = json::array();
    for (const auto& [pair_id, by] : labels) {
      std::set<std::string> distinct;
      for (const auto& [_, l] : by) distinct.insert(l);
      if (distinct.size() < 2) continue;
      json c = {{"pair_id", pair_id}, {"labels", by}, {"resolved", resolution.labels.count(pair_id) > 0}};
      if (auto it = resolution.labels.find(pair_id); it != resolution.labels.end())
        c["resolution"] = calibration::relevance_name(it->second);
      conflicts.push_back(c);
    }
    out["conflicts"] = conflicts;
    out["resolved"] = resolution.labels.size();
    out["unresolved"] = resolution.unresolved.size();
    send_json(res, out);
  }

  void curves(const httplib::Request& req, httplib::Response& res) const {
    std::vector<double> grid = config.grid;
    try {
      if (req.has_param("grid")) grid = parse_grid(req.get_param_value("grid"));
    } catch (const std::exception& e) {
      return send_error(res, 400, "schema", e.what());
    }
    const auto points = curve(grid);
    if (req.get_param_value("format") == "csv") {
      res.set_content(calibration::curve_to_csv(points), "text/csv");
      return;
    }
    send_json(res, {{"labels", resolved_scores(config.pairs, store.log()).size()},
                    {"points", calibration::curve_to_json(points)}});
  }

  void threshold(const httplib::Request& req, httplib::Response& res) const {
    json body;
    calibration::SelectionPolicy policy;
    std::vector<double> grid = config.grid;
    try {
      body = json::parse(req.body);
      if (!body.is_object() || !body.contains("policy") || !body.at("policy").is_string())
        throw ParseError("body must be {\"policy\": \"...\"}");
      policy = calibration::SelectionPolicy::parse(body.at("policy").get<std::string>());
      if (body.contains("grid")) grid = parse_grid(body.at("grid").get<std::string>());
    } catch (const std::exception& e) {
      return send_error(res, 400, "schema", e.what());
    }
    const auto points = curve(grid);
    double t = 0.0;
    try {
      t = calibration::select_threshold(points, policy);
    } catch (const ContractError& e) {
      return send_error(res, 422, "unattainable", e.what());
    }
    json out = {{"format_version", kPipelineFormatVersion},
                {"policy", policy.to_string()},
                {"threshold", t},
                {"labels", resolved_scores(config.pairs, store.log()).size()}};
    for (const auto& p : points)
      if (p.threshold == t)
        out["point"] = {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"coverage", p.coverage}};
    if (!config.threshold_path.empty()) write_json(config.threshold_path, out);
    send_json(res, out);
  }

  void image(const httplib::Request& req, httplib::Response& res) const {
    const std::string id = req.matches[1];
    auto it = index.find(id);
    if (it == index.end()) return send_error(res, 404, "not_found", "unknown pair " + id);
    try {
      const auto bytes = data::encode_ppm(data::read_ppm(config.image_root / config.pairs[it->second].image_path));
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/x-portable-pixmap");
    } catch (const std::exception& e) {
      send_error(res, 404, "image", e.what());
    }
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", config.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, {{"status", "ok"}, {"pairs", config.pairs.size()}, {"labels", store.log().size()}});
    });
    server.Get("/api/pairs/next", [this](const httplib::Request& q, httplib::Response& r) { next_pair(q, r); });
    server.Get(R"(/api/images/(.+))", [this](const httplib::Request& q, httplib::Response& r) { image(q, r); });
    server.Post("/api/labels", [this](const httplib::Request& q, httplib::Response& r) { post_label(q, r); });
    server.Get("/api/agreement", [this](const httplib::Request& q, httplib::Response& r) { agreement(q, r); });
    server.Get("/api/curves", [this](const httplib::Request& q, httplib::Response& r) { curves(q, r); });
    server.Post("/api/threshold", [this](const httplib::Request& q, httplib::Response& r) { threshold(q, r); });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      } catch (...) {
        send_error(res, 500, "internal", "unknown error");
      }
    });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.status == 404 && res.body.empty()) send_error(res, 404, "not_found", "no route for " + req.path);
    });
  }
};

AnnotationService::AnnotationService(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

AnnotationService::~AnnotationService() = default;

int AnnotationService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw ServiceError("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw ServiceError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void AnnotationService::listen() { impl_->server.listen_after_bind(); }

void AnnotationService::stop() { impl_->server.stop(); }

httplib::Server& AnnotationService::server() { return impl_->server; }

const calibration::AnnotationStore& AnnotationService::store() const { return impl_->store; }

}  // namespace mine::pipeline
