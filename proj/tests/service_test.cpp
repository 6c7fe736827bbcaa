#include <gtest/gtest.h>

#include <thread>

#include "mimor/service.hpp"
#include "oracles.hpp"

namespace mimor {
namespace {

using nlohmann::json;

std::shared_ptr<const Corpus> corpus() {
  return std::make_shared<const Corpus>(std::vector<Document>{
      Document::make("d1", "Data fusion merges result lists. Fusion of ranked lists."),
      Document::make("d2", "A single retrieval engine ranks documents."),
      Document::make("d3", "Fusion weights are learned from relevance feedback."),
      Document::make("d4", "Users judge documents as relevant or not."),
      Document::make("d5", "")});
}

Service make_service(ServiceOptions opts = {}) { return Service(Mimor(corpus(), ModelStore()), opts); }

Service make_clustered_service() {
  Registry reg;
  reg.clusters = 2;
  reg.mode = FusionMode::clustered;
  auto rules = rule_model({{"short", Feature::doc_length, HardRule::Op::less, 7, false},
                           {"long", Feature::doc_length, HardRule::Op::greater_equal, 7, false}});
  return Service(Mimor(corpus(), ModelStore(reg, rules)));
}

std::string error_code(const ApiResponse& r) { return r.body.at("error").at("code").get<std::string>(); }

TEST(Service, Health) {
  auto svc = make_service();
  const auto r = svc.health();
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["status"], "ok");
}

TEST(Service, SearchBadRequests) {
  auto svc = make_service();
  EXPECT_EQ(svc.search("", "u", "", "").status, 400);
  EXPECT_EQ(error_code(svc.search("", "u", "", "")), "bad_request");
  EXPECT_EQ(svc.search("fusion", "u", "hybrid", "").status, 400);
  EXPECT_EQ(svc.search("fusion", "u", "", "0").status, 400);
  EXPECT_EQ(svc.search("fusion", "u", "", "3x").status, 400);
  EXPECT_EQ(make_clustered_service().search("fusion", "u", "flat", "").status, 400);
}

TEST(Service, SearchIsSelfConsistent) {
  auto svc = make_service();
  const auto r = svc.search("fusion feedback", "u", "", "5");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["rsvs_token"].get<std::string>().size(), 32u);
  const auto w = weight_matrix_from_json(r.body["weights"]["public"]);
  ASSERT_FALSE(r.body["results"].empty());
  double prev = 2.0;
  for (const auto& row : r.body["results"]) {
    const auto rsv = row["rsvs"].get<std::vector<double>>();
    EXPECT_NEAR(row["score"].get<double>(), oracle::flat(w.column(0), rsv), 1e-9);
    EXPECT_LE(row["score"].get<double>(), prev);
    prev = row["score"].get<double>();
  }
}

TEST(Service, ClusteredSearchIsSelfConsistent) {
  auto svc = make_clustered_service();
  const auto r = svc.search("fusion documents", "u", "", "");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["mode"], "clustered");
  const auto w = weight_matrix_from_json(r.body["weights"]["public"]).rows();
  for (const auto& row : r.body["results"])
    EXPECT_NEAR(row["score"].get<double>(),
                oracle::clustered(w, row["membership"].get<std::vector<double>>(),
                                  row["rsvs"].get<std::vector<double>>()),
                1e-9);
}

TEST(Service, FeedbackAppliesShownRsvs) {
  auto svc = make_service();
  const auto r = svc.search("fusion", "alice", "", "");
  const auto& top = r.body["results"][0];
  const auto rsv = top["rsvs"].get<std::vector<double>>();
  const json body = {{"user", "alice"},
                     {"doc", top["doc"]},
                     {"judgment", "relevant"},
                     {"rsvs_token", r.body["rsvs_token"]}};
  const auto fb = svc.feedback(body.dump());
  ASSERT_EQ(fb.status, 200) << fb.body.dump();
  EXPECT_EQ(fb.body["n"], 1);
  EXPECT_EQ(fb.body["event"]["qid"], r.body["qid"]);

  const auto w = svc.weights();
  const auto expected = oracle::learn_flat({0.5, 0.5, 0.5}, 1, rsv, 0.05);
  EXPECT_EQ(weight_matrix_from_json(w.body["public_weights"]).column(0), expected);
  EXPECT_EQ(w.body["total_feedback"], 1);

  const auto m = svc.model("alice");
  ASSERT_EQ(m.status, 200);
  EXPECT_EQ(m.body["n"], 1);
  EXPECT_DOUBLE_EQ(m.body["p"].get<double>(), 1.0 / 50);
  EXPECT_EQ(weight_matrix_from_json(m.body["private_weights"]).column(0), expected);
}

TEST(Service, FeedbackErrors) {
  auto svc = make_service();
  const auto token = svc.search("fusion", "bob", "", "").body["rsvs_token"].get<std::string>();
  EXPECT_EQ(svc.feedback("{not json").status, 400);
  EXPECT_EQ(svc.feedback(R"({"user": "bob"})").status, 400);
  EXPECT_EQ(svc.feedback(json{{"user", "bob"}, {"doc", "d1"}, {"judgment", "meh"}, {"rsvs_token", token}}.dump()).status,
            400);
  const auto unknown_token =
      svc.feedback(json{{"user", "bob"}, {"doc", "d1"}, {"judgment", "relevant"}, {"rsvs_token", "nope"}}.dump());
  EXPECT_EQ(unknown_token.status, 404);
  EXPECT_EQ(error_code(unknown_token), "not_found");
  const auto unknown_doc =
      svc.feedback(json{{"user", "bob"}, {"doc", "zz"}, {"judgment", "relevant"}, {"rsvs_token", token}}.dump());
  EXPECT_EQ(unknown_doc.status, 404);
  EXPECT_EQ(svc.weights().body["total_feedback"], 0);
}

TEST(Service, ExpiredTokenIsRejected) {
  auto svc = make_service({.snapshot_ttl = std::chrono::seconds(0)});
  const auto token = svc.search("fusion", "bob", "", "").body["rsvs_token"].get<std::string>();
  const auto r =
      svc.feedback(json{{"user", "bob"}, {"doc", "d1"}, {"judgment", "relevant"}, {"rsvs_token", token}}.dump());
  EXPECT_EQ(r.status, 404);
}

TEST(Service, ModelAndClusters) {
  auto svc = make_clustered_service();
  EXPECT_EQ(svc.model("ghost").status, 404);
  svc.search("fusion", "carol", "", "");
  EXPECT_EQ(svc.model("carol").body["n"], 0);
  const auto c = svc.clusters("d2");
  ASSERT_EQ(c.status, 200);
  EXPECT_EQ(c.body["membership"], json::array({1.0, 0.0}));
  EXPECT_TRUE(svc.clusters("d5").body["membership"].is_null());
  EXPECT_EQ(svc.clusters("nope").status, 404);
}

TEST(Service, ErrorMapping) {
  EXPECT_EQ(api_code(Errc::parse), ApiCode::bad_request);
  EXPECT_EQ(api_code(Errc::dimension), ApiCode::bad_request);
  EXPECT_EQ(api_code(Errc::not_found), ApiCode::not_found);
  EXPECT_EQ(api_code(Errc::duplicate), ApiCode::conflict);
  EXPECT_EQ(api_code(Errc::io), ApiCode::internal);
  EXPECT_EQ(http_status(ApiCode::conflict), 409);
  EXPECT_EQ(http_status(ApiCode::internal), 500);
}

TEST(Service, ConcurrentSearchAndFeedback) {
  auto svc = make_service();
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&svc, t] {
      const std::string user = "u" + std::to_string(t);
      for (int i = 0; i < 25; ++i) {
        const auto r = svc.search("fusion lists", user, "blended", "");
        const json body = {{"user", user},
                           {"doc", r.body["results"][0]["doc"]},
                           {"judgment", i % 2 ? "relevant" : "nonrelevant"},
                           {"rsvs_token", r.body["rsvs_token"]}};
        svc.feedback(body.dump());
      }
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(svc.weights().body["total_feedback"], 100);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(svc.model("u" + std::to_string(t)).body["n"], 25);
}

TEST(Http, EndToEnd) {
  auto svc = make_service();
  httplib::Server server;
  svc.bind(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread loop([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  const auto search = client.Get("/search?q=fusion&user=dana&k=2");
  ASSERT_TRUE(search);
  ASSERT_EQ(search->status, 200);
  const auto sr = json::parse(search->body);
  EXPECT_EQ(sr["results"].size(), 2u);

  const json body = {{"user", "dana"},
                     {"doc", sr["results"][0]["doc"]},
                     {"judgment", "relevant"},
                     {"rsvs_token", sr["rsvs_token"]}};
  const auto fb = client.Post("/feedback", body.dump(), "application/json");
  ASSERT_TRUE(fb);
  EXPECT_EQ(fb->status, 200);

  const auto model = client.Get("/model/dana");
  ASSERT_TRUE(model);
  EXPECT_EQ(json::parse(model->body)["n"], 1);
  const auto weights = client.Get("/weights");
  EXPECT_EQ(json::parse(weights->body)["total_feedback"], 1);
  EXPECT_EQ(client.Get("/clusters/d1")->status, 200);

  const auto bad = client.Get("/search?q=");
  EXPECT_EQ(bad->status, 400);
  const auto missing = client.Get("/nowhere");
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"]["code"], "not_found");

  server.stop();
  loop.join();
}

}  // namespace
}  // namespace mimor
