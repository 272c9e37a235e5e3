#include <doctest.h>

#include <algorithm>
#include <set>

#include "failscope/dtree.hpp"
#include "failscope/error.hpp"
#include "failscope/stats.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace failscope;
using namespace support;

namespace {

FeatureMatrix make_matrix(std::vector<std::string> names, std::vector<Dtype> dtypes,
                          std::vector<std::vector<double>> columns, std::vector<Label> labels) {
  FeatureMatrix m;
  m.names = std::move(names);
  m.dtypes = std::move(dtypes);
  m.columns = std::move(columns);
  m.labels = std::move(labels);
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "r%03zu", i);
    m.ids.push_back(id);
  }
  return m;
}

TreeParams loose() {
  TreeParams p;
  p.min_samples_leaf = 1;
  p.min_gain = 0.0;
  p.max_depth = 64;
  return p;
}

void check_structure(const DecisionTree& t, const FeatureMatrix& m, std::span<const std::size_t> rows) {
  std::set<std::string> seen;
  for (const auto& n : t.nodes) {
    if (n.is_leaf()) {
      CHECK(n.prediction == majority(n.n_unsat, n.n_sat));
      CHECK(n.members.size() == n.n_unsat + n.n_sat);
      for (const auto& id : n.members) CHECK(seen.insert(id).second);
    } else {
      CHECK(t.nodes[n.left].n_unsat + t.nodes[n.right].n_unsat == n.n_unsat);
      CHECK(t.nodes[n.left].n_sat + t.nodes[n.right].n_sat == n.n_sat);
    }
  }
  CHECK(seen.size() == rows.size());
  std::size_t u = 0;
  for (auto r : rows) u += m.labels[r] == U ? 1 : 0;
  CHECK(t.root().n_unsat == u);
}

}  // namespace

TEST_CASE("feature equal to the label splits with gain H(labels)") {
  std::vector<Label> y{S, U, U, S, S, U, S};
  std::vector<double> x;
  for (Label l : y) x.push_back(l == S ? 1 : 0);
  auto m = make_matrix({"a_noise", "label_copy"}, {Dtype::binary, Dtype::binary}, {{0, 1, 0, 1, 0, 1, 1}, x}, y);
  auto s = best_split(m, all_rows(7), loose());
  REQUIRE(s);
  CHECK(s->feature == "label_copy");
  CHECK(s->gain == doctest::Approx(entropy(y)).epsilon(1e-12));
}

TEST_CASE("constant features give no split") {
  auto m = make_matrix({"a", "b"}, {Dtype::binary, Dtype::continuous}, {{1, 1, 1, 1}, {2, 2, 2, 2}}, {S, U, S, U});
  CHECK_FALSE(best_split(m, all_rows(4), loose()).has_value());
  auto t = train(m, loose());
  CHECK(t.nodes.size() == 1);
}

TEST_CASE("best_split equals exhaustive enumeration") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 20;
    std::vector<Label> y(n);
    for (auto& l : y) l = rng.bernoulli(0.5) ? S : U;
    y[0] = S;
    y[1] = U;
    std::vector<std::vector<double>> cols(3, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      cols[0][i] = static_cast<double>(rng.below(2));
      cols[1][i] = static_cast<double>(rng.below(6));
      cols[2][i] = std::round(rng.normal(0, 2) * 4) / 4;
    }
    auto m = make_matrix({"bin", "cnt", "cont"}, {Dtype::binary, Dtype::count, Dtype::continuous}, cols, y);
    TreeParams p;
    p.min_samples_leaf = 1 + rng.below(4);
    p.min_gain = 0.0;
    auto got = best_split(m, all_rows(n), p);
    auto want = oracle::best_split(m, all_rows(n), p.min_samples_leaf, 0.0);
    REQUIRE(got.has_value() == want.has_value());
    if (!got) continue;
    CHECK(got->feature == want->feature);
    CHECK(got->threshold == doctest::Approx(want->threshold));
    CHECK(std::abs(got->gain - want->gain) < 1e-9);
  }
}

TEST_CASE("excluded features never split") {
  std::vector<Label> y{S, U, S, U, S, U, S, U};
  auto m = make_matrix({"perfect", "weak"}, {Dtype::binary, Dtype::binary},
                       {{1, 0, 1, 0, 1, 0, 1, 0}, {1, 0, 1, 1, 1, 0, 0, 0}}, y);
  TreeParams p = loose();
  p.excluded_features = {"perfect"};
  auto t = train(m, p);
  CHECK(t.features_used().count("perfect") == 0);
  CHECK(t.root().split->feature == "weak");
}

TEST_CASE("pure data is a single leaf; separable data is depth one") {
  auto pure = make_matrix({"f"}, {Dtype::binary}, {{0, 1, 0, 1}}, {S, S, S, S});
  auto t = train(pure, loose());
  CHECK(t.nodes.size() == 1);
  CHECK(t.root().prediction == S);

  auto sep = make_matrix({"f"}, {Dtype::binary}, {{0, 1, 0, 1}}, {U, S, U, S});
  auto t2 = train(sep, loose());
  CHECK(t2.depth() == 1);
  CHECK(t2.nodes[t2.root().left].n_sat == 0);
  CHECK(t2.nodes[t2.root().right].n_unsat == 0);
  CHECK_THROWS_AS(train(sep, std::vector<std::size_t>{}, loose()), InvalidArgument);
}

TEST_CASE("leaf ties predict unsatisfactory") {
  CHECK(majority(1, 1) == U);
  CHECK(majority(0, 0) == U);
  CHECK(majority(1, 2) == S);
}

TEST_CASE("unrestricted trees fit consistent data exactly") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 10 + rng.below(60), nf = 1 + rng.below(5);
    std::vector<std::vector<double>> cols(nf, std::vector<double>(n));
    std::vector<std::string> names;
    std::vector<Dtype> dtypes;
    for (std::size_t f = 0; f < nf; ++f) {
      names.push_back("f" + std::to_string(f));
      dtypes.push_back(f % 2 ? Dtype::continuous : Dtype::binary);
      for (auto& v : cols[f]) v = f % 2 ? std::round(rng.normal(0, 1) * 3) : static_cast<double>(rng.below(2));
    }
    // A label that is a function of the features keeps the data consistent.
    std::map<std::vector<double>, Label> fn;
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> key;
      for (std::size_t f = 0; f < nf; ++f) key.push_back(cols[f][i]);
      auto [it, fresh] = fn.emplace(key, rng.bernoulli(0.5) ? S : U);
      y[i] = it->second;
    }
    auto m = make_matrix(names, dtypes, cols, y);
    auto t = train(m, loose());
    TreePredictor predict_row(t, m);
    for (std::size_t i = 0; i < n; ++i) CHECK(predict_row(i).label == y[i]);
    check_structure(t, m, all_rows(n));
  }
}

TEST_CASE("tree structure invariants and preorder ids") {
  Rng rng(43);
  std::size_t n = 200;
  std::vector<std::vector<double>> cols(3, std::vector<double>(n));
  std::vector<Label> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    cols[0][i] = rng.uniform();
    cols[1][i] = static_cast<double>(rng.below(2));
    cols[2][i] = static_cast<double>(rng.below(10));
    bool fail = (cols[0][i] < 0.4 && cols[1][i] == 1) || rng.bernoulli(0.1);
    y[i] = fail ? U : S;
  }
  auto m = make_matrix({"a", "b", "c"}, {Dtype::continuous, Dtype::binary, Dtype::count}, cols, y);
  TreeParams p;
  auto t = train(m, p);
  check_structure(t, m, all_rows(n));
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    CHECK(t.nodes[i].id == i);
    if (!t.nodes[i].is_leaf()) {
      CHECK(t.nodes[i].left == i + 1);
      CHECK(t.nodes[i].right > t.nodes[i].left);
      CHECK(t.nodes[t.nodes[i].left].n_unsat + t.nodes[t.nodes[i].left].n_sat >= p.min_samples_leaf);
    }
    CHECK(t.nodes[i].depth <= p.max_depth);
  }
  CHECK(train(m, p) == t);
  CHECK(tree_from_json(tree_to_json(t)) == t);
}

TEST_CASE("predict and leaf membership agree on training instances") {
  Dataset d;
  d.catalog = FeatureCatalog({binary("kite"), continuous("prec")});
  Rng rng(47);
  for (int i = 0; i < 60; ++i) {
    bool kite = rng.bernoulli(0.5);
    double prec = std::round(rng.uniform() * 20) / 20;
    bool fail = kite && prec <= 0.5;
    std::map<std::string, double> f{{"prec", prec}};
    if (kite) f["kite"] = 1.0;
    d.instances.push_back(instance("i" + std::to_string(100 + i), fail ? U : S, f));
  }
  std::vector<std::string> names{"kite", "prec"};
  auto m = FeatureMatrix::build(d, names);
  auto t = train(m, loose());
  for (const auto& inst : d.instances) {
    auto p = predict(t, inst);
    auto members = leaf_instances(t, p.leaf);
    CHECK(std::binary_search(members.begin(), members.end(), inst.id));
  }
  std::set<std::string> all;
  for (auto leaf : t.leaf_ids()) {
    for (const auto& id : leaf_instances(t, leaf)) CHECK(all.insert(id).second);
  }
  CHECK(all.size() == d.instances.size());
  CHECK_THROWS_AS(leaf_instances(t, 0), NotFound);
  CHECK_THROWS_AS(leaf_instances(t, 999), NotFound);

  Instance missing = instance("x", S, {{"kite", 1.0}});
  CHECK_THROWS_AS(predict(t, missing), InvalidArgument);
}

TEST_CASE("root-only tree") {
  auto m = make_matrix({"f"}, {Dtype::binary}, {{1, 1, 1}}, {S, U, S});
  auto t = train(m, loose());
  CHECK(leaf_instances(t, 0) == m.ids);
  Instance any = instance("z", U, {});
  CHECK(predict(t, any).leaf == 0);
}

TEST_CASE("rule text") {
  DecisionTree single;
  TreeNode leaf;
  leaf.n_unsat = 19;
  leaf.n_sat = 1;
  single.nodes.push_back(leaf);
  auto rules = extract_rules(single);
  REQUIRE(rules.size() == 1);
  CHECK(rules[0].text == "(no conditions) ⇒ fails in 95% of cases");
  CHECK(rules[0].failure_rate == doctest::Approx(0.95));

  auto sep = make_matrix({"kite"}, {Dtype::binary}, {{0, 1, 0, 1}}, {U, S, U, S});
  auto two = extract_rules(train(sep, loose()));
  REQUIRE(two.size() == 2);
  CHECK(two[0].text == "kite = 0 ⇒ fails in 100% of cases");
  CHECK(two[1].text == "kite = 1 ⇒ fails in 0% of cases");

  auto cont = make_matrix({"prec", "top10"}, {Dtype::continuous, Dtype::count},
                          {{0.5, 0.5, 0.9, 0.9, 0.5, 0.5}, {2, 8, 2, 8, 3, 7}}, {U, S, S, S, U, S});
  auto t = train(cont, loose());
  bool found = false;
  for (const auto& r : extract_rules(t)) {
    if (r.text == "top10 <= 5 AND prec <= 0.7 ⇒ fails in 100% of cases") found = true;
  }
  CHECK(found);
}

TEST_CASE("cross-validation") {
  std::vector<Label> y;
  std::vector<double> x;
  for (int i = 0; i < 100; ++i) {
    y.push_back(i % 3 == 0 ? U : S);
    x.push_back(i % 3 == 0 ? 0 : 1);
  }
  auto m = make_matrix({"f"}, {Dtype::binary}, {x}, y);
  TreeParams p;
  p.seed = 5;
  auto cv = cross_validate(m, all_rows(100), p, 5);
  CHECK(cv.mean_accuracy == 1.0);
  CHECK(cv.fold_accuracies.size() == 5);
  CHECK(cv == cross_validate(m, all_rows(100), p, 5));

  // Folds partition the rows and are stratified to within one instance.
  std::map<int, std::pair<int, int>> per_fold;
  for (std::size_t i = 0; i < 100; ++i) {
    auto& c = per_fold[cv.fold_of.at(m.ids[i])];
    (y[i] == U ? c.first : c.second)++;
  }
  CHECK(per_fold.size() == 5);
  for (auto& [fold, c] : per_fold) {
    CHECK(c.first + c.second == 20);
    CHECK(std::abs(c.first - 34 / 5) <= 1);
  }
  double mean = 0.0;
  for (double a : cv.fold_accuracies) mean += a;
  CHECK(cv.mean_accuracy == doctest::Approx(mean / 5));

  CHECK_THROWS_AS(cross_validate(m, std::vector<std::size_t>{0, 1, 2}, p, 5), InvalidArgument);
  auto one = make_matrix({"f"}, {Dtype::binary}, {{0, 1, 0, 1, 0, 1}}, {S, S, S, S, S, S});
  CHECK_THROWS_AS(cross_validate(one, all_rows(6), p, 5), InvalidArgument);
  CHECK(cv_from_json(cv_to_json(cv)) == cv);
}

TEST_CASE("coin-flip labels cross-validate near the majority baseline") {
  double total = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(100 + s);
    std::size_t n = 2000;
    std::vector<std::vector<double>> cols(3, std::vector<double>(n));
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& c : cols) c[i] = static_cast<double>(rng.below(2));
      y[i] = rng.bernoulli(0.5) ? S : U;
    }
    auto m = make_matrix({"a", "b", "c"}, {Dtype::binary, Dtype::binary, Dtype::binary}, cols, y);
    TreeParams p;
    p.seed = static_cast<std::uint64_t>(s);
    total += cross_validate(m, all_rows(n), p, 5).mean_accuracy;
  }
  CHECK(std::abs(total / seeds - 0.5) <= 0.05);
}

TEST_CASE("params JSON round trip") {
  TreeParams p;
  p.max_depth = 3;
  p.excluded_features = {"a", "b"};
  p.seed = 1234567890123ULL;
  CHECK(params_from_json(params_to_json(p)) == p);
}
