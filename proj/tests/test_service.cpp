#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cxai/service.hpp"
#include "cxai/task.hpp"
#include "test_util.hpp"

using namespace cxai;
using json = nlohmann::json;

namespace {

ServiceDataset houses() {
  auto schema = load_schema(test_util::data_path("king_county_schema.json"));
  auto ds = load_csv(test_util::data_path("houses_demo.csv"), schema);
  auto st = fit_standardizer(ds);
  auto p = make_predictor(PredictorSpec::parse("knn:5"), ds, st);
  return {"houses", std::move(ds), std::move(st), std::move(p)};
}

// One numeric attribute with unit scaling; comparables sit 0.54 and 0.46 away
// from the subject so inverse-distance weights are 0.46 / 0.54.
ServiceDataset two_houses() {
  AttributeSchema s;
  s.attributes = {{"x", NumericKind{"u"}, 2}};
  s.target_name = "price";
  Dataset ds;
  ds.schema = s;
  ds.rows = {{Instance{{-0.54}, "a"}, 600000}, {Instance{{0.46}, "b"}, 710000}};
  Standardizer st(s, {{0.0, 1.0}}, {0.0, 1.0});
  auto p = std::make_shared<SyntheticPredictor>(SyntheticPredictor::linear({1.0}, 0.0));
  return {"two", std::move(ds), std::move(st), std::move(p)};
}

struct Running {
  explicit Running(std::vector<ServiceDataset> d, std::filesystem::path log = {}) {
    ServiceOptions o;
    o.port = 0;
    o.session_log = std::move(log);
    svc = std::make_unique<Service>(std::move(d), o);
    port = svc->bind();
    th = std::thread([this] { svc->run(); });
  }
  ~Running() {
    svc->stop();
    th.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
  std::unique_ptr<Service> svc;
  int port = 0;
  std::thread th;
};

json post(const Running& r, const std::string& path, const json& body, int expect) {
  auto c = r.client();
  auto res = c.Post(path, body.dump(), "application/json");
  EXPECT_TRUE(res);
  EXPECT_EQ(res->status, expect) << res->body;
  return json::parse(res->body);
}

}  // namespace

TEST(Service, HealthAndVersionHeader) {
  Running r({houses()});
  auto c = r.client();
  auto res = c.Get("/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["status"], "ok");
  EXPECT_EQ(res->get_header_value(kApiVersionHeader), kApiVersion);
}

TEST(Service, ParallelRequests) {
  Running r({houses()});
  std::atomic<int> ok{0};
  std::vector<std::thread> ts;
  for (int t = 0; t < 10; ++t)
    ts.emplace_back([&] {
      auto c = r.client();
      for (int i = 0; i < 10; ++i) {
        auto res = c.Get("/health");
        if (res && res->status == 200) ++ok;
      }
    });
  for (auto& t : ts) t.join();
  EXPECT_EQ(ok.load(), 100);
}

TEST(Service, DatasetListings) {
  Running r({houses()});
  auto c = r.client();
  auto res = c.Get("/datasets");
  ASSERT_TRUE(res);
  const auto j = json::parse(res->body);
  ASSERT_EQ(j["datasets"].size(), 1u);
  EXPECT_EQ(j["datasets"][0]["id"], "houses");
  const auto n = j["datasets"][0]["rows"].get<std::size_t>();
  res = c.Get("/datasets/houses/subjects");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["count"].get<std::size_t>(), n);
  res = c.Get("/datasets/nope/subjects");
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(json::parse(res->body)["error"], "NotFound");
  res = c.Get("/no/such/route");
  EXPECT_EQ(res->status, 404);
  EXPECT_EQ(res->get_header_value(kApiVersionHeader), kApiVersion);
}

TEST(Service, ComparablesEstimateOnTwoRowFixture) {
  Running r({two_houses()});
  const auto j = post(r, "/explain", {{"dataset", "two"}, {"subject", {{"x", 0.0}}}, {"k", 2}}, 200);
  EXPECT_NEAR(j["estimate"]["value"].get<double>(), 659400, 1.0);
  EXPECT_DOUBLE_EQ(j["estimate"]["low"].get<double>(), 600000);
  EXPECT_DOUBLE_EQ(j["estimate"]["high"].get<double>(), 710000);
  EXPECT_EQ(j["comparables"].size(), 2u);
}

TEST(Service, ExplainErrors) {
  Running r({two_houses()});
  auto e = post(r, "/explain", {{"subject", {{"x", 0.0}}}, {"k", 3}}, 400);
  EXPECT_EQ(e["error"], "KTooLarge");
  e = post(r, "/explain", {{"subject", {{"x", 0.0}}}, {"method", "magic"}}, 400);
  e = post(r, "/explain", {{"subject", "zzz"}}, 404);
  // Subject equal to the comparable: nothing to trace.
  e = post(r, "/explain", {{"subject", {{"x", -0.54}}}, {"k", 1}, {"method", "trace"}}, 400);
  EXPECT_EQ(e["error"], "NoDifference");
  e = post(r, "/explain", {{"subject", {{"x", "high"}}}}, 400);
  EXPECT_EQ(e["error"], "ParseError");
  auto c = r.client();
  auto res = c.Post("/explain", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
}

TEST(Service, TraceIsDeterministicAndCached) {
  Running r({houses()});
  const json body{{"dataset", "houses"},
                  {"subject", "h001"},
                  {"method", "trace"},
                  {"k", 2},
                  {"seed", 7},
                  {"config", {{"max_epochs", 300}}}};
  const auto a = post(r, "/explain", body, 200);
  const auto cached = r.svc->trace_cache().size();
  EXPECT_EQ(cached, 2u);
  const auto b = post(r, "/explain", body, 200);
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(r.svc->trace_cache().size(), cached);
  for (const auto& c : a["comparables"]) EXPECT_NE(c["id"], "h001");
}

TEST(Service, EveryMethodProducesAnEstimate) {
  Running r({houses()});
  for (const char* m : {"comparables", "regression", "linear-adjust"}) {
    const auto j = post(r, "/explain", {{"subject", "h002"}, {"method", m}, {"k", 4}}, 200);
    EXPECT_TRUE(j["estimate"]["value"].is_number()) << m;
    EXPECT_LE(j["estimate"]["low"].get<double>(), j["estimate"]["high"].get<double>());
  }
}

TEST(Service, PracticeSessionFeedback) {
  auto d = houses();
  d.dataset.rows[0].actual_value = 437000;
  const auto id = *d.dataset.rows[0].instance.id;
  Running r({std::move(d)});
  const auto s = post(r, "/sessions", {{"mode", "practice"}}, 201);
  const std::string sid = s["id"];
  auto j = post(r, "/sessions/" + sid + "/responses", {{"case", id}, {"y_min", 200000}, {"y_max", 1000000}}, 200);
  EXPECT_EQ(j["verdict"], "within");
  EXPECT_TRUE(j["too_wide"].get<bool>());
  EXPECT_DOUBLE_EQ(j["actual"].get<double>(), 437000);
  EXPECT_NEAR(j["metrics"]["mean_error_log"].get<double>(), std::log(600000.0 - 437000.0), 1e-9);
  j = post(r, "/sessions/" + sid + "/responses", {{"case", id}, {"y_min", 500000}, {"y_max", 450000}}, 400);
  post(r, "/sessions/s999/responses", {{"case", id}, {"y_min", 1}, {"y_max", 2}}, 404);
  auto res = r.client().Get("/sessions/" + sid);
  EXPECT_EQ(json::parse(res->body)["cases"].size(), 1u);
}

TEST(Service, MainSessionHidesTruth) {
  Running r({houses()});
  const std::string sid = post(r, "/sessions", {{"mode", "main"}}, 201)["id"];
  const auto j = post(r, "/sessions/" + sid + "/responses", {{"case", "h003"}, {"y_min", 500000}, {"y_max", 700000}}, 200);
  EXPECT_FALSE(j.contains("actual"));
  EXPECT_FALSE(j.contains("verdict"));
  EXPECT_TRUE(j["metrics"].is_object());
  post(r, "/sessions", {{"mode", "exam"}}, 400);
}

TEST(Service, SessionsSurviveRestart) {
  const auto log = std::filesystem::temp_directory_path() / "cxai_sessions_test.jsonl";
  std::filesystem::remove(log);
  std::string sid;
  {
    Running r({houses()}, log);
    sid = post(r, "/sessions", {{"mode", "main"}}, 201)["id"];
    post(r, "/sessions/" + sid + "/responses", {{"case", "h003"}, {"y_min", 500000}, {"y_max", 700000}}, 200);
  }
  {
    std::ofstream(log, std::ios::app) << "{\"type\":\"sess";  // torn line
  }
  Running r({houses()}, log);
  const auto rec = r.svc->session(sid);
  ASSERT_TRUE(rec);
  ASSERT_EQ(rec->cases.size(), 1u);
  EXPECT_EQ(rec->cases[0].subject, "h003");
  const std::string next = post(r, "/sessions", {{"mode", "main"}}, 201)["id"];
  EXPECT_NE(next, sid);
  std::filesystem::remove(log);
}

TEST(Service, BindConflictIsIoError) {
  Running r({houses()});
  ServiceOptions o;
  o.port = r.port;
  Service other({houses()}, o);
  try {
    other.bind();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Service, TooWideRule) {
  EXPECT_FALSE(interval_too_wide({90, 110, 100}));
  EXPECT_TRUE(interval_too_wide({89, 111, 100}));
}
