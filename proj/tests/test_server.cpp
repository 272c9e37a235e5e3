#include <doctest.h>

#include <httplib.h>

#include <set>
#include <thread>

#include "failscope/error.hpp"
#include "failscope/server.hpp"
#include "failscope/synth.hpp"
#include "support.hpp"

using namespace failscope;
using namespace failscope::server;
using nlohmann::json;

namespace {

struct Fixture {
  Dataset dataset;
  PerformanceReport base;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    synth::SynthConfig cfg;
    cfg.topics = {{"kite", {"kite", "sky", "beach"}, {"flying"}, 120, 0.8, 0.2, {0.8, 0.9, {}}},
                  {"snow", {"skis", "snow", "slope"}, {"skiing"}, 120, 0.8, 0.3, {0.7, 0.8, {}}}};
    cfg.background_objects = {"person", "tree"};
    cfg.background_probability = 0.3;
    cfg.votes.workers = 3;
    cfg.rules = {{"global", {{"gt:person", synth::CompareOp::eq, 1.0}}, 0.85}};
    auto [ds, manifest] = synth::generate(cfg);
    ViewSpec spec;
    spec.k = 3;
    spec.tree.min_samples_leaf = 5;
    return Fixture{ds, build_view(ds, spec)};
  }();
  return f;
}

json get_json(Service& s, const std::string& target, int want_status = 200) {
  auto r = s.handle("GET", target, "");
  REQUIRE_MESSAGE(r.status == want_status, target << " -> " << r.status << " " << r.body);
  return json::parse(r.body);
}

// Walks the tree by hand: the leaf an instance lands in.
std::size_t leaf_of(const DecisionTree& tree, const Instance& inst) {
  std::size_t at = 0;
  while (!tree.nodes[at].is_leaf()) {
    const Split& s = *tree.nodes[at].split;
    auto it = inst.features.find(s.feature);
    double v = it == inst.features.end() ? 0.0 : it->second;
    at = v <= s.threshold ? tree.nodes[at].left : tree.nodes[at].right;
  }
  return at;
}

}  // namespace

TEST_CASE("report endpoint serves the serialized base report") {
  Service s(fixture().dataset, fixture().base);
  auto a = s.handle("GET", "/api/report", "");
  auto b = s.handle("GET", "/api/report", "");
  CHECK(a.status == 200);
  CHECK(a.body == serialize_report(fixture().base));
  CHECK(a.body == b.body);
  CHECK(a.content_type == "application/json");
}

TEST_CASE("clusters endpoint") {
  Service s(fixture().dataset, fixture().base);
  auto doc = get_json(s, "/api/clusters");
  CHECK(doc["schema"] == "failscope.clusters");
  CHECK(doc["config_hash"] == fixture().base.config_hash);
  REQUIRE(doc["clusters"].size() == fixture().base.clusters.size());
  std::size_t total = 0;
  for (std::size_t i = 0; i < doc["clusters"].size(); ++i) {
    const auto& c = doc["clusters"][i];
    const auto& want = fixture().base.clusters[i];
    CHECK(c["id"] == want.id);
    CHECK(c["label"] == want.label);
    CHECK(c["size"] == want.size);
    CHECK(c["satisfaction_rate"].get<double>() == want.satisfaction_rate);
    CHECK(c["highlight"] == std::string(to_string(want.highlight)));
    total += c["size"].get<std::size_t>();
  }
  CHECK(total == fixture().dataset.instances.size());
  CHECK(doc["generic"]["size"] == fixture().dataset.instances.size());
  CHECK(doc["all_clusters_accuracy"].get<double>() == fixture().base.all_clusters_accuracy);
}

TEST_CASE("tree, ranking and dendrogram endpoints") {
  Service s(fixture().dataset, fixture().base);
  auto generic = get_json(s, "/api/clusters/generic/tree");
  CHECK(generic["tree_id"] == "generic");
  CHECK(tree_from_json(generic["tree"]) == *fixture().base.generic.model.tree);
  CHECK(generic["rules"].size() == fixture().base.generic.model.tree->leaf_ids().size());
  for (const auto& c : fixture().base.clusters) {
    auto t = get_json(s, "/api/clusters/" + std::to_string(c.id) + "/tree");
    CHECK(t["skipped"] == c.model.skipped());
    auto r = get_json(s, "/api/clusters/" + std::to_string(c.id) + "/ranking");
    CHECK(ranking_from_json(r["ranking"]) == c.model.ranking);
  }
  auto d = get_json(s, "/api/dendrogram");
  CHECK(dendrogram_from_json(d["dendrogram"]) == fixture().base.dendrogram);
  CHECK(assignment_from_json(d["assignment"]) == fixture().base.assignment);
}

TEST_CASE("leaf instances are the rows that reach the leaf") {
  Service s(fixture().dataset, fixture().base);
  const auto& tree = *fixture().base.generic.model.tree;
  for (std::size_t leaf : tree.leaf_ids()) {
    auto doc = get_json(s, "/api/trees/generic/leaves/" + std::to_string(leaf) + "/instances");
    std::set<std::string> got;
    for (const auto& i : doc["instances"]) got.insert(i["id"].get<std::string>());
    std::set<std::string> want;
    std::size_t sat = 0;
    for (const auto& inst : fixture().dataset.instances) {
      if (leaf_of(tree, inst) != leaf) continue;
      want.insert(inst.id);
      sat += inst.label == support::S;
    }
    CHECK(got == want);
    CHECK(doc["samples"][1] == sat);
    CHECK(doc["samples"][0] == want.size() - sat);
    // Every view feature is listed; absent binaries read 0.
    CHECK(doc["instances"][0]["features"].size() == fixture().base.features.size());
  }
  get_json(s, "/api/trees/generic/leaves/0/instances", 404);  // the root is not a leaf
  get_json(s, "/api/trees/generic/leaves/9999/instances", 404);
  get_json(s, "/api/trees/77/leaves/1/instances", 404);
}

TEST_CASE("error statuses") {
  Service s(fixture().dataset, fixture().base);
  get_json(s, "/api/clusters/99/tree", 404);
  get_json(s, "/api/clusters/abc/tree", 404);
  get_json(s, "/api/nothing", 404);
  get_json(s, "/api/report?report=0000000000000000", 404);
  CHECK(s.handle("DELETE", "/api/report", "").status == 405);
  CHECK(s.handle("POST", "/api/whatif", "{not json").status == 400);
  CHECK(s.handle("POST", "/api/whatif", R"({"excluded_features":["nope"]})").status == 400);
  CHECK(s.handle("POST", "/api/whatif", R"({"merges":[[0,55]]})").status == 404);
  CHECK(s.handle("POST", "/api/whatif", R"({"k":0})").status == 400);
  auto conflict = s.handle("POST", "/api/whatif", R"({"dataset_digest":"ffffffffffffffff","k":2})");
  CHECK(conflict.status == 409);
  CHECK(json::parse(conflict.body).contains("error"));

  CHECK(status_for(NotFound("x")) == 404);
  CHECK(status_for(DatasetMismatch("x")) == 409);
  CHECK(status_for(UnknownFeatureError("x")) == 400);
  CHECK(status_for(std::runtime_error("x")) == 500);

  Dataset other = fixture().dataset;
  other.instances.pop_back();
  CHECK_THROWS_AS(Service(other, fixture().base), DatasetMismatch);
}

TEST_CASE("what-if exclusion removes the feature from every tree") {
  Service s(fixture().dataset, fixture().base);
  const std::string root = fixture().base.generic.model.tree->root().split->feature;
  json req = {{"excluded_features", {root}}};
  auto r = s.handle("POST", "/api/whatif", req.dump());
  REQUIRE(r.status == 200);
  auto doc = json::parse(r.body);
  std::string hash = doc["config_hash"];
  CHECK(hash != fixture().base.config_hash);
  auto report = report_from_json(doc["report"]);
  REQUIRE(report.generic.model.tree);
  CHECK(report.generic.model.tree->features_used().count(root) == 0);
  for (const auto& c : report.clusters) {
    if (c.model.tree) CHECK(c.model.tree->features_used().count(root) == 0);
  }

  WhatIfDelta delta;
  delta.excluded_features = {root};
  CHECK(report == what_if(fixture().base, fixture().dataset, delta));

  // The new report is addressable by hash everywhere.
  auto again = s.handle("GET", "/api/whatif/" + hash, "");
  CHECK(again.body == r.body);
  auto tree = get_json(s, "/api/clusters/generic/tree?report=" + hash);
  CHECK(tree_from_json(tree["tree"]) == *report.generic.model.tree);
  CHECK(get_json(s, "/api/report?report=" + hash).dump() == doc["report"].dump());

  // Chained from the new report.
  json chained = {{"base", hash}, {"k", 2}};
  auto c = json::parse(s.handle("POST", "/api/whatif", chained.dump()).body);
  auto chained_report = report_from_json(c["report"]);
  CHECK(chained_report.spec.k == 2);
  CHECK(chained_report.spec.tree.excluded_features.count(root) == 1);
  CHECK(s.computations() == 2);
}

TEST_CASE("concurrent identical what-ifs compute once") {
  Service s(fixture().dataset, fixture().base, {std::chrono::milliseconds(60000), 1});
  const std::string body = R"({"k":4,"merges":[[0,1]]})";
  std::vector<std::string> bodies(8);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    threads.emplace_back([&, i] { bodies[i] = s.handle("POST", "/api/whatif", body).body; });
  }
  for (auto& t : threads) t.join();
  CHECK(s.computations() == 1);
  for (const auto& b : bodies) CHECK(b == bodies[0]);
  // Same delta spelled differently resolves to the same config.
  s.handle("POST", "/api/whatif", R"({"merges":[[1,0]],"k":4})");
  CHECK(s.computations() == 1);
}

TEST_CASE("slow what-ifs answer 202 and can be polled") {
  Service s(fixture().dataset, fixture().base, {std::chrono::milliseconds(0), 1});
  auto r = s.handle("POST", "/api/whatif", R"({"k":5})");
  std::string hash = json::parse(r.body)["config_hash"];
  if (r.status == 202) {
    CHECK(json::parse(r.body)["poll"] == "/api/whatif/" + hash);
  } else {
    CHECK(r.status == 200);
  }
  Response done;
  for (int i = 0; i < 600; ++i) {
    done = s.handle("GET", "/api/whatif/" + hash, "");
    if (done.status != 202) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  CHECK(done.status == 200);
  CHECK(json::parse(done.body)["report"]["config_hash"] == hash);
  CHECK(s.handle("GET", "/api/whatif/0123456789abcdef", "").status == 404);
}

TEST_CASE("HTTP server answers like the service") {
  Service s(fixture().dataset, fixture().base);
  HttpServer http(s);
  std::promise<int> port;
  std::thread runner([&] { http.run("127.0.0.1", 0, [&](int p) { port.set_value(p); }); });
  int p = port.get_future().get();
  httplib::Client client("127.0.0.1", p);
  auto res = client.Get("/api/clusters");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == s.handle("GET", "/api/clusters", "").body);
  auto missing = client.Get("/api/clusters/99/tree");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto post = client.Post("/api/whatif", R"({"k":2})", "application/json");
  REQUIRE(post);
  CHECK(post->status == 200);
  http.stop();
  runner.join();
}
