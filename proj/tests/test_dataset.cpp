#include <doctest.h>

#include <algorithm>
#include <set>

#include "failscope/error.hpp"
#include "failscope/synth.hpp"
#include "support.hpp"

using namespace failscope;
using namespace support;

namespace {
const std::filesystem::path kData = FAILSCOPE_TEST_DATA;
}

TEST_CASE("tabular fixture loads with its sidecar catalog") {
  Dataset d = load_dataset(kData / "tiny.csv", DatasetFormat::tabular, kData / "tiny.catalog.json");
  REQUIRE(d.instances.size() == 3);
  CHECK(d.catalog.size() == 3);
  const Instance& a1 = d.instances[0];
  CHECK(a1.id == "a1");
  CHECK(a1.label == Label::satisfactory);
  CHECK(a1.features.at("gt:kite") == 1.0);
  CHECK(a1.features.at("vd_precision_objects") == 0.75);
  REQUIRE(a1.votes);
  CHECK(*a1.votes == std::vector<int>{1, 1, 0});
  CHECK(a1.content_terms.at(DataSource::crowd) == std::vector<std::string>{"kite", "sky"});
  CHECK_FALSE(d.instances[2].votes.has_value());
}

TEST_CASE("structured and tabular fixtures describe the same instances") {
  Dataset csv = load_dataset(kData / "tiny.csv", DatasetFormat::tabular, kData / "tiny.catalog.json");
  Dataset js = load_dataset(kData / "tiny.json", format_for_path(kData / "tiny.json"));
  CHECK(canonicalize(js).instances == canonicalize(csv).instances);
  CHECK(js.provenance == "hand-written fixture");
}

TEST_CASE("binary value 2 is a dtype violation") {
  CHECK_THROWS_AS(load_dataset(kData / "binary_violation.csv", DatasetFormat::tabular, kData / "tiny.catalog.json"),
                  DtypeError);
}

TEST_CASE("tabular parse errors carry a locus") {
  FeatureCatalog cat({binary("f"), continuous("c")});
  try {
    parse_tabular("id,label,f,c\nx,satisfactory,1,abc\n", cat);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.locus().find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_tabular("id,label,nope\nx,satisfactory,1\n", cat), UnknownFeatureError);
  CHECK_THROWS_AS(parse_tabular("id,label,f\nx,satisfactory\n", cat), ParseError);
  CHECK_THROWS_AS(parse_tabular("id,label,f\nx,maybe,1\n", cat), ParseError);
}

TEST_CASE("structured parse errors") {
  CHECK_THROWS_AS(dataset_from_json(nlohmann::json::array()), ParseError);
  auto doc = nlohmann::json::parse(slurp(kData / "tiny.json"));
  doc["instances"][0]["features"]["nope"] = 1;
  CHECK_THROWS_AS(dataset_from_json(doc), UnknownFeatureError);
  doc = nlohmann::json::parse(slurp(kData / "tiny.json"));
  doc["instances"][0]["features"]["gt:kite"] = 0.5;
  CHECK_THROWS_AS(dataset_from_json(doc), DtypeError);
  CHECK_THROWS_AS(load_dataset(kData / "missing.json", DatasetFormat::structured), ParseError);
}

TEST_CASE("duplicate catalog names are rejected") {
  CHECK_THROWS_AS(FeatureCatalog({binary("f"), count("f")}), InvalidArgument);
}

TEST_CASE("catalog selects view cells in name order") {
  FeatureCatalog cat({binary("z"), binary("a"), count("n"), binary("s", ViewKind::content, DataSource::system)});
  CHECK(cat.select(ViewKind::content, DataSource::crowd) == std::vector<std::string>{"a", "z"});
  CHECK(cat.select(ViewKind::component, DataSource::crowd) == std::vector<std::string>{"n"});
  CHECK(cat.select(ViewKind::component, DataSource::system).empty());
  CHECK_THROWS_AS(cat.at("missing"), UnknownFeatureError);
}

TEST_CASE("absent binary features read as zero, absent continuous features throw") {
  Instance i = instance("x", S, {{"c", 2.5}});
  CHECK(feature_value(i, binary("f")) == 0.0);
  CHECK(feature_value(i, continuous("c")) == 2.5);
  CHECK_THROWS_AS(feature_value(i, continuous("d")), InvalidArgument);
}

TEST_CASE("validate: clean fixture has no violations") {
  Dataset d = load_dataset(kData / "tiny.json", DatasetFormat::structured);
  CHECK(validate(d).clean());
}

TEST_CASE("validate: corrupted fixture lists each violation") {
  Dataset d = load_dataset(kData / "corrupted.json", DatasetFormat::structured);
  auto r = validate(d);
  std::multiset<std::pair<ViolationKind, std::string>> got;
  for (const auto& v : r.violations) got.insert({v.kind, v.instance_id});
  std::multiset<std::pair<ViolationKind, std::string>> want{
      {ViolationKind::duplicate_id, "b1"},
      {ViolationKind::label_vote_mismatch, "b1"},
      {ViolationKind::missing_value, "b2"},
  };
  CHECK(got == want);
}

TEST_CASE("validate matches a brute-force scan on randomized corruptions") {
  FeatureCatalog cat({binary("b"), count("n"), continuous("c")});
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Dataset d;
    d.catalog = cat;
    std::multiset<std::pair<ViolationKind, std::string>> want;
    std::set<std::string> ids;
    std::set<std::string> dupes;
    for (int i = 0; i < 12; ++i) {
      Instance inst = instance("i" + std::to_string(rng.below(10)), rng.bernoulli(0.5) ? S : U,
                               {{"n", 1.0}, {"c", 0.5}});
      if (!ids.insert(inst.id).second && dupes.insert(inst.id).second) {
        want.insert({ViolationKind::duplicate_id, inst.id});
      }
      switch (rng.below(6)) {
        case 0: inst.features["b"] = 3.0; want.insert({ViolationKind::dtype_violation, inst.id}); break;
        case 1: inst.features["n"] = 1.5; want.insert({ViolationKind::dtype_violation, inst.id}); break;
        case 2: inst.features.erase("c"); want.insert({ViolationKind::missing_value, inst.id}); break;
        case 3: inst.features["zz"] = 1.0; want.insert({ViolationKind::unknown_feature, inst.id}); break;
        case 4:
          inst.votes = std::vector<int>{inst.label == S ? 0 : 1, inst.label == S ? 0 : 1};
          want.insert({ViolationKind::label_vote_mismatch, inst.id});
          break;
        default: break;
      }
      d.instances.push_back(inst);
    }
    std::multiset<std::pair<ViolationKind, std::string>> got;
    for (const auto& v : validate(d).violations) got.insert({v.kind, v.instance_id});
    CHECK(got == want);
  }
}

TEST_CASE("aggregate_confidences on detector scores") {
  std::vector<double> scores{0.96, 0.94, 0.89, 0.87, 0.71};
  auto a = aggregate_confidences(scores);
  CHECK(a.avg == doctest::Approx(0.874).epsilon(1e-12));
  CHECK(a.max == 0.96);
  CHECK(a.min == 0.71);
  // Population variance by hand: deviations 0.086, 0.066, 0.016, -0.004, -0.164.
  double var = (0.086 * 0.086 + 0.066 * 0.066 + 0.016 * 0.016 + 0.004 * 0.004 + 0.164 * 0.164) / 5.0;
  CHECK(a.std == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  CHECK(a.std == doctest::Approx(0.0882).epsilon(1e-3));

  auto one = aggregate_confidences(std::vector<double>{0.5});
  CHECK(one.avg == 0.5);
  CHECK(one.std == 0.0);
  auto same = aggregate_confidences(std::vector<double>{0.3, 0.3, 0.3});
  CHECK(same.avg == 0.3);
  CHECK(same.std == 0.0);
  CHECK_THROWS_AS(aggregate_confidences(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("aggregate_confidences properties on random lists") {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + rng.below(20));
    for (auto& v : s) v = rng.normal(0.0, 10.0);
    auto a = aggregate_confidences(s);
    CHECK(a.min <= a.avg);
    CHECK(a.avg <= a.max);
    rng.shuffle(std::span<double>(s));
    auto b = aggregate_confidences(s);
    CHECK(b.avg == doctest::Approx(a.avg).epsilon(1e-12));
    CHECK(b.std == doctest::Approx(a.std).epsilon(1e-9));
    CHECK(b.max == a.max);
    CHECK(b.min == a.min);
    CHECK((a.std == 0.0) == (a.min == a.max));
  }
}

TEST_CASE("satisfaction_rate") {
  CHECK(satisfaction_rate(std::vector<Label>{S, S}) == 1.0);
  CHECK(satisfaction_rate(std::vector<Label>{S, U}) == 0.5);
  std::vector<Label> cluster(250, U);
  std::fill(cluster.begin(), cluster.begin() + 200, S);
  CHECK(satisfaction_rate(cluster) == 0.8);
  CHECK_THROWS_AS(satisfaction_rate(std::vector<Label>{}), InvalidArgument);

  // Disjoint union is the size-weighted mean.
  std::vector<Label> a{S, U, U}, b{S, S, S, S, U};
  std::vector<Label> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  CHECK(satisfaction_rate(ab) == doctest::Approx((3 * satisfaction_rate(a) + 5 * satisfaction_rate(b)) / 8));
}

TEST_CASE("majority votes and human agreement") {
  CHECK(majority_label(std::vector<int>{1, 1, 0}) == S);
  CHECK(majority_label(std::vector<int>{1, 0}) == U);  // tie
  std::vector<Instance> unanimous{instance("a", S, {}), instance("b", U, {})};
  unanimous[0].votes = std::vector<int>{1, 1, 1};
  unanimous[1].votes = std::vector<int>{0, 0, 0, 0, 0};
  CHECK(human_agreement(unanimous) == 1.0);

  std::vector<Instance> one{instance("a", S, {})};
  one[0].votes = std::vector<int>{1, 1, 0};
  CHECK(human_agreement(one) == doctest::Approx(2.0 / 3.0));

  // Recount oracle: per instance, votes equal to the majority over total votes.
  std::vector<std::vector<int>> votes{{1, 1, 0, 1, 0}, {0, 0, 1}, {1, 0}, {1, 1, 1, 0}};
  std::vector<Instance> mixed;
  double expected = 0.0;
  for (std::size_t i = 0; i < votes.size(); ++i) {
    mixed.push_back(instance("m" + std::to_string(i), U, {}));
    mixed.back().votes = votes[i];
    int yes = static_cast<int>(std::count(votes[i].begin(), votes[i].end(), 1));
    int no = static_cast<int>(votes[i].size()) - yes;
    int agree = yes > no ? yes : no;  // ties go to unsatisfactory; counts are equal then
    expected += static_cast<double>(agree) / static_cast<double>(votes[i].size());
  }
  expected /= static_cast<double>(votes.size());
  CHECK(human_agreement(mixed) == doctest::Approx(expected).epsilon(1e-15));

  mixed.push_back(instance("novotes", U, {}));
  CHECK_THROWS_AS(human_agreement(mixed), InvalidArgument);
}

TEST_CASE("write then load is the identity on canonical datasets") {
  TempDir dir("dataset");
  Dataset d = load_dataset(kData / "tiny.json", DatasetFormat::structured);
  write_dataset(d, dir / "copy.json");
  CHECK(load_dataset(dir / "copy.json", DatasetFormat::structured) == canonicalize(d));

  write_dataset_tabular(d, dir / "copy.csv", dir / "copy.catalog.json");
  Dataset back = load_dataset(dir / "copy.csv", DatasetFormat::tabular, dir / "copy.catalog.json");
  CHECK(back.instances == canonicalize(d).instances);
  CHECK(back.catalog == d.catalog);
}

TEST_CASE("synthetic generator output reloads identically") {
  synth::SynthConfig cfg;
  cfg.topics = {{"kite", {"kite", "sky"}, {"flying"}, 30, 0.8, 0.2, {0.8, 0.9, {}}},
                {"tennis", {"racket", "ball"}, {"playing"}, 30, 0.8, 0.3, {0.9, 0.8, {}}}};
  cfg.background_objects = {"person"};
  cfg.votes.workers = 5;
  auto [ds, manifest] = synth::generate(cfg);
  TempDir dir("synthio");
  write_dataset(ds, dir / "s.json");
  CHECK(load_dataset(dir / "s.json", DatasetFormat::structured) == canonicalize(ds));
  write_dataset_tabular(ds, dir / "s.csv", dir / "s.catalog.json");
  Dataset back = load_dataset(dir / "s.csv", DatasetFormat::tabular, dir / "s.catalog.json");
  CHECK(back.instances == canonicalize(ds).instances);
  CHECK(dataset_digest(back) == dataset_digest(ds));
}

TEST_CASE("digest ignores instance order and tracks content") {
  Dataset d = load_dataset(kData / "tiny.json", DatasetFormat::structured);
  Dataset shuffled = d;
  std::reverse(shuffled.instances.begin(), shuffled.instances.end());
  CHECK(dataset_digest(d) == dataset_digest(shuffled));
  shuffled.instances[0].label = shuffled.instances[0].label == S ? U : S;
  CHECK(dataset_digest(d) != dataset_digest(shuffled));
}
