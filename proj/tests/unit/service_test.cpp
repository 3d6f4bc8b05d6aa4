#include "mine/pipeline/service.hpp"

#include <gtest/gtest.h>

#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "mine/data/image.hpp"
#include "mine/pipeline/pipeline.hpp"
#include "support/plot_fixtures.hpp"
#include "support/tempdir.hpp"

using namespace mine;
using namespace mine::pipeline;
using nlohmann::json;

namespace {

data::PairRecord make_pair(const std::string& id, double score, const std::string& category = "c0",
                           const std::string& image = "img.ppm") {
  data::PairRecord p;
  p.pair_id = id;
  p.verbatim_id = id;
  p.review_id = "r";
  p.verbatim = "verbatim " + id;
  p.image_path = image;
  p.category = category;
  p.score = score;
  return p;
}

class Running {
 public:
  Running(std::vector<data::PairRecord> pairs, const TempDir& dir, std::size_t num_categories = 0) {
    ServiceConfig c;
    c.pairs = std::move(pairs);
    c.annotation_log = dir / "annotations.jsonl";
    c.image_root = dir.path();
    c.threshold_path = dir / "threshold.json";
    c.num_categories = num_categories;
    service = std::make_unique<AnnotationService>(std::move(c));
    port = service->bind("127.0.0.1", 0);
    thread = std::thread([this] { service->listen(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    for (int i = 0; i < 200 && !client->Get("/api/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~Running() {
    service->stop();
    thread.join();
  }

  httplib::Result label(const std::string& pair, const std::string& who, const std::string& label,
                        bool overwrite = false) {
    json body = {{"pair_id", pair}, {"annotator", who}, {"label", label}};
    if (overwrite) body["overwrite"] = true;
    return client->Post("/api/labels", body.dump(), "application/json");
  }
  json get_json(const std::string& path) {
    auto res = client->Get(path);
    EXPECT_TRUE(res) << path;
    return json::parse(res->body);
  }

  std::unique_ptr<AnnotationService> service;
  std::unique_ptr<httplib::Client> client;
  std::thread thread;
  int port = 0;
};

}  // namespace

TEST(Service, HealthAndCors) {
  TempDir dir;
  Running s({make_pair("p0", 0.3)}, dir);
  auto res = s.client->Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(json::parse(res->body)["status"], "ok");
  auto pre = s.client->Options("/api/labels");
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  auto missing = s.client->Get("/api/nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"]["type"], "not_found");
}

TEST(Service, NextPairQueueAndTiebreak) {
  TempDir dir;
  data::ImageRaster img(4, 4, 9);
  data::write_ppm(dir / "img.ppm", img);
  Running s({make_pair("p0", 0.3), make_pair("p1", 0.2)}, dir);

  json a = s.get_json("/api/pairs/next?annotator=a");
  EXPECT_EQ(a["pair_id"], "p0");
  EXPECT_EQ(a["role"], "primary");
  EXPECT_EQ(a["guidelines"].size(), 3u);
  const auto bytes = data::encode_ppm(img);
  EXPECT_EQ(a["image_base64"], httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end())));

  auto image = s.client->Get("/api/images/p0");
  ASSERT_TRUE(image);
  EXPECT_EQ(image->get_header_value("Content-Type"), "image/x-portable-pixmap");
  EXPECT_EQ(data::decode_ppm(std::vector<std::uint8_t>(image->body.begin(), image->body.end())), img);

  EXPECT_EQ(s.label("p0", "a", "relevant")->status, 201);
  EXPECT_EQ(s.get_json("/api/pairs/next?annotator=a")["pair_id"], "p1");
  EXPECT_EQ(s.label("p1", "a", "relevant")->status, 201);
  EXPECT_EQ(s.get_json("/api/pairs/next?annotator=a")["done"], true);
  EXPECT_EQ(s.get_json("/api/pairs/next?annotator=b")["pair_id"], "p0");
  EXPECT_EQ(s.label("p0", "b", "relevant")->status, 201);
  EXPECT_EQ(s.label("p1", "b", "not_relevant")->status, 201);
  // Both pairs have two labels; p1 is a conflict for a third annotator.
  json c = s.get_json("/api/pairs/next?annotator=c");
  EXPECT_EQ(c["pair_id"], "p1");
  EXPECT_EQ(c["role"], "tiebreak");
  EXPECT_EQ(s.get_json("/api/pairs/next?annotator=b")["done"], true);

  json agreement = s.get_json("/api/agreement");
  ASSERT_EQ(agreement["conflicts"].size(), 1u);
  EXPECT_EQ(agreement["conflicts"][0]["pair_id"], "p1");
  EXPECT_EQ(agreement["conflicts"][0]["resolved"], false);
  EXPECT_EQ(s.label("p1", "c", "relevant")->status, 201);
  agreement = s.get_json("/api/agreement");
  EXPECT_EQ(agreement["conflicts"][0]["resolved"], true);
  EXPECT_EQ(agreement["conflicts"][0]["resolution"], "relevant");
  EXPECT_EQ(s.get_json("/api/pairs/next?annotator=c")["done"], true);
}

TEST(Service, KappaOneUnderFullAgreement) {
  TempDir dir;
  Running s({make_pair("p0", .1), make_pair("p1", .2), make_pair("p2", .3), make_pair("p3", .4)}, dir);
  const char* labels[] = {"relevant", "not_relevant", "relevant", "not_relevant"};
  for (int i = 0; i < 4; ++i)
    for (const char* who : {"ann1", "ann2"}) EXPECT_EQ(s.label("p" + std::to_string(i), who, labels[i])->status, 201);
  json a = s.get_json("/api/agreement");
  EXPECT_EQ(a["kappa"], 1.0);
  EXPECT_TRUE(a["conflicts"].empty());
  EXPECT_EQ(a["table"]["relevant_relevant"], 2);
  EXPECT_EQ(a["table"]["not_relevant_not_relevant"], 2);
}

TEST(Service, DuplicateSchemaAndUnknownPair) {
  TempDir dir;
  Running s({make_pair("p0", 0.3)}, dir);
  EXPECT_EQ(s.label("p0", "a", "relevant")->status, 201);
  auto dup = s.label("p0", "a", "not_relevant");
  EXPECT_EQ(dup->status, 409);
  EXPECT_EQ(json::parse(dup->body)["error"]["type"], "duplicate");
  auto over = s.label("p0", "a", "not_relevant", true);
  EXPECT_EQ(over->status, 201);
  EXPECT_EQ(json::parse(over->body)["status"], "overwritten");
  EXPECT_EQ(s.service->store().log().size(), 2u);

  EXPECT_EQ(s.label("p0", "a", "maybe")->status, 400);
  EXPECT_EQ(s.client->Post("/api/labels", "{not json", "application/json")->status, 400);
  EXPECT_EQ(s.client->Post("/api/labels", R"({"pair_id":"p0","label":"relevant"})", "application/json")->status, 400);
  EXPECT_EQ(s.client
                ->Post("/api/labels",
                       R"({"pair_id":"p0","annotator":"b","label":"relevant","guideline_tag":"smell"})",
                       "application/json")
                ->status,
            400);
  EXPECT_EQ(s.client
                ->Post("/api/labels", R"({"pair_id":"p0","annotator":"b","label":"relevant","overwrite":"yes"})",
                       "application/json")
                ->status,
            400);
  auto unknown = s.label("zz", "a", "relevant");
  EXPECT_EQ(unknown->status, 404);
  EXPECT_EQ(s.client->Get("/api/pairs/next")->status, 400);
  EXPECT_EQ(s.client->Get("/api/curves?grid=0.1,abc,0.1")->status, 400);
  EXPECT_EQ(s.client->Post("/api/threshold", R"({"policy":"best"})", "application/json")->status, 400);
}

TEST(Service, CurvesReadYourWrites) {
  TempDir dir;
  Running s({make_pair("p0", 0.25), make_pair("p1", 0.2)}, dir);
  auto tp_at = [&](std::size_t idx) {
    json c = s.get_json("/api/curves?grid=0.19,0.31,0.01");
    return c["points"][idx]["tp"].get<std::size_t>();
  };
  EXPECT_EQ(s.get_json("/api/curves")["labels"], 0);
  s.label("p0", "a", "relevant");
  EXPECT_EQ(s.get_json("/api/curves")["labels"], 0);  // one annotator does not resolve
  s.label("p0", "b", "relevant");
  EXPECT_EQ(s.get_json("/api/curves")["labels"], 1);
  EXPECT_EQ(tp_at(0), 1u);
  EXPECT_EQ(tp_at(6), 1u);   // 0.25
  EXPECT_EQ(tp_at(7), 0u);   // 0.26
}

TEST(Service, F1CurveReplay) {
  TempDir dir;
  const auto fixture = mine::testing::f1_plot_fixture();
  std::vector<data::PairRecord> pairs;
  for (std::size_t i = 0; i < fixture.size(); ++i)
    pairs.push_back(make_pair("f" + std::to_string(i), fixture[i].score, fixture[i].category));
  Running s(pairs, dir, 1);
  for (std::size_t i = 0; i < fixture.size(); ++i)
    for (const char* who : {"a", "b"})
      ASSERT_EQ(s.label(pairs[i].pair_id, who, fixture[i].relevant ? "relevant" : "not_relevant")->status, 201);

  json c = s.get_json("/api/curves?grid=0.19,0.29,0.01");
  const json& p22 = c["points"][3];
  EXPECT_DOUBLE_EQ(p22["threshold"].get<double>(), 0.22);
  EXPECT_NEAR(p22["precision"].get<double>(), 0.79, 0.005);
  EXPECT_NEAR(p22["recall"].get<double>(), 0.89, 0.005);
  EXPECT_NEAR(p22["f1"].get<double>(), 0.84, 0.005);

  // Byte-identical to the offline sweep over the same labels.
  auto csv = s.client->Get("/api/curves?grid=0.19,0.29,0.01&format=csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->get_header_value("Content-Type"), "text/csv");
  const auto grid = calibration::make_grid(0.19, 0.29, 0.01);
  const auto offline = calibration::sweep_thresholds(resolved_scores(pairs, s.service->store().log()), grid, 1);
  EXPECT_EQ(csv->body, calibration::curve_to_csv(offline));
  EXPECT_EQ(csv->body, calibration::curve_to_csv(calibration::sweep_thresholds(fixture, grid, 1)));

  auto t = s.client->Post("/api/threshold", R"({"policy":"max_f1","grid":"0.19,0.29,0.01"})", "application/json");
  ASSERT_TRUE(t);
  EXPECT_EQ(t->status, 200);
  EXPECT_EQ(json::parse(t->body)["threshold"], 0.21);
  EXPECT_EQ(read_json(dir / "threshold.json")["threshold"], 0.21);
  EXPECT_EQ(read_json(dir / "threshold.json")["format_version"], 1);

  auto floor = s.client->Post("/api/threshold", R"({"policy":"precision_floor:0.99","grid":"0.19,0.29,0.01"})",
                              "application/json");
  ASSERT_TRUE(floor);
  EXPECT_EQ(floor->status, 422);
  EXPECT_NE(floor->body.find("max precision"), std::string::npos);
}
