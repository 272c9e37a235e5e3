#include "failscope/dtree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "failscope/error.hpp"
#include "failscope/rng.hpp"
#include "failscope/stats.hpp"

namespace failscope {

using nlohmann::json;

const TreeNode& DecisionTree::node(std::size_t id) const {
  if (id >= nodes.size()) throw NotFound("unknown tree node " + std::to_string(id));
  return nodes[id];
}

std::vector<std::size_t> DecisionTree::leaf_ids() const {
  std::vector<std::size_t> ids;
  for (const auto& n : nodes) {
    if (n.is_leaf()) ids.push_back(n.id);
  }
  return ids;
}

std::set<std::string> DecisionTree::features_used() const {
  std::set<std::string> out;
  for (const auto& n : nodes) {
    if (n.split) out.insert(n.split->feature);
  }
  return out;
}

int DecisionTree::depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

Label majority(std::size_t n_unsat, std::size_t n_sat) {
  return n_sat > n_unsat ? Label::satisfactory : Label::unsatisfactory;
}

namespace {

double split_gain(std::size_t lu, std::size_t ls, std::size_t ru, std::size_t rs) {
  const std::size_t table[4] = {lu, ls, ru, rs};
  return mutual_information_from_table(table, 2, 2);
}

// Strictly better candidate under (gain, name, threshold) ordering.
bool better(double gain, const std::string& name, double threshold, const Split& incumbent) {
  auto k = gain_key(gain);
  auto ki = gain_key(incumbent.gain);
  if (k != ki) return k > ki;
  if (name != incumbent.feature) return name < incumbent.feature;
  return threshold < incumbent.threshold;
}

}  // namespace

std::optional<Split> best_split(const FeatureMatrix& matrix, std::span<const std::size_t> rows,
                                const TreeParams& params) {
  if (rows.size() < 2) return std::nullopt;
  const std::size_t min_leaf = std::max<std::size_t>(1, params.min_samples_leaf);
  if (rows.size() < 2 * min_leaf) return std::nullopt;

  std::size_t total_sat = 0;
  for (auto r : rows) total_sat += matrix.labels[r] == Label::satisfactory ? 1 : 0;
  const std::size_t total_unsat = rows.size() - total_sat;
  if (total_sat == 0 || total_unsat == 0) return std::nullopt;

  std::optional<Split> best;
  std::vector<std::pair<double, Label>> sorted;
  for (std::size_t f = 0; f < matrix.features(); ++f) {
    const std::string& name = matrix.names[f];
    if (params.excluded_features.contains(name)) continue;
    const auto& column = matrix.columns[f];

    auto consider = [&](double threshold, std::size_t lu, std::size_t ls) {
      std::size_t left = lu + ls;
      std::size_t right = rows.size() - left;
      if (left < min_leaf || right < min_leaf) return;
      double gain = split_gain(lu, ls, total_unsat - lu, total_sat - ls);
      if (!best || better(gain, name, threshold, *best)) {
        best = Split{name, matrix.dtypes[f], threshold, gain};
      }
    };

    if (matrix.dtypes[f] == Dtype::binary) {
      std::size_t lu = 0;
      std::size_t ls = 0;
      for (auto r : rows) {
        if (column[r] > 0.5) continue;
        (matrix.labels[r] == Label::satisfactory ? ls : lu)++;
      }
      consider(0.5, lu, ls);
      continue;
    }

    sorted.clear();
    for (auto r : rows) sorted.emplace_back(column[r], matrix.labels[r]);
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t lu = 0;
    std::size_t ls = 0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      (sorted[i].second == Label::satisfactory ? ls : lu)++;
      double lo = sorted[i].first;
      double hi = sorted[i + 1].first;
      if (lo == hi) continue;
      double threshold = lo + (hi - lo) / 2.0;
      if (threshold >= hi) threshold = lo;
      consider(threshold, lu, ls);
    }
  }
  if (!best || best->gain < params.min_gain) return std::nullopt;
  return best;
}

namespace {

struct Builder {
  const FeatureMatrix& matrix;
  const TreeParams& params;
  DecisionTree tree;

  std::size_t grow(std::vector<std::size_t> rows, int depth) {
    const std::size_t id = tree.nodes.size();
    tree.nodes.emplace_back();
    TreeNode node;
    node.id = id;
    node.depth = depth;
    for (auto r : rows) (matrix.labels[r] == Label::satisfactory ? node.n_sat : node.n_unsat)++;

    std::optional<Split> split;
    if (depth < params.max_depth && node.n_sat > 0 && node.n_unsat > 0) {
      split = best_split(matrix, rows, params);
    }
    if (!split) {
      node.prediction = majority(node.n_unsat, node.n_sat);
      for (auto r : rows) node.members.push_back(matrix.ids[r]);
      std::sort(node.members.begin(), node.members.end());
      tree.nodes[id] = std::move(node);
      return id;
    }

    const auto& column = matrix.columns[matrix.column_of(split->feature)];
    std::vector<std::size_t> left_rows;
    std::vector<std::size_t> right_rows;
    for (auto r : rows) (column[r] <= split->threshold ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    node.split = std::move(split);
    node.prediction = majority(node.n_unsat, node.n_sat);
    tree.nodes[id] = std::move(node);
    std::size_t left = grow(std::move(left_rows), depth + 1);
    std::size_t right = grow(std::move(right_rows), depth + 1);
    tree.nodes[id].left = left;
    tree.nodes[id].right = right;
    return id;
  }
};

}  // namespace

DecisionTree train(const FeatureMatrix& matrix, std::span<const std::size_t> rows,
                   const TreeParams& params) {
  if (rows.empty()) throw InvalidArgument("train: empty training set");
  if (params.max_depth < 1) throw InvalidArgument("train: max_depth must be >= 1");
  if (params.min_samples_leaf < 1) throw InvalidArgument("train: min_samples_leaf must be >= 1");
  Builder b{matrix, params, {}};
  b.grow(std::vector<std::size_t>(rows.begin(), rows.end()), 0);
  return std::move(b.tree);
}

DecisionTree train(const FeatureMatrix& matrix, const TreeParams& params) {
  auto rows = all_rows(matrix.rows());
  return train(matrix, rows, params);
}

Prediction predict(const DecisionTree& tree, const Instance& instance) {
  std::size_t at = 0;
  while (true) {
    const TreeNode& n = tree.node(at);
    if (n.is_leaf()) return {n.prediction, n.id};
    double value = 0.0;
    auto it = instance.features.find(n.split->feature);
    if (it != instance.features.end()) {
      value = it->second;
    } else if (n.split->dtype != Dtype::binary) {
      throw InvalidArgument("instance '" + instance.id + "' lacks tested feature '" +
                            n.split->feature + "'");
    }
    at = value <= n.split->threshold ? n.left : n.right;
  }
}

TreePredictor::TreePredictor(const DecisionTree& tree, const FeatureMatrix& matrix)
    : tree_(tree), matrix_(matrix), columns_(tree.nodes.size(), 0) {
  for (const auto& n : tree.nodes) {
    if (!n.split) continue;
    std::size_t c = matrix.column_of(n.split->feature);
    if (c == matrix.features()) {
      throw InvalidArgument("matrix lacks tested feature '" + n.split->feature + "'");
    }
    columns_[n.id] = c;
  }
}

Prediction TreePredictor::operator()(std::size_t row) const {
  std::size_t at = 0;
  while (true) {
    const TreeNode& n = tree_.nodes[at];
    if (n.is_leaf()) return {n.prediction, n.id};
    at = matrix_.columns[columns_[at]][row] <= n.split->threshold ? n.left : n.right;
  }
}

std::vector<std::string> leaf_instances(const DecisionTree& tree, std::size_t leaf) {
  const TreeNode& n = tree.node(leaf);
  if (!n.is_leaf()) throw NotFound("node " + std::to_string(leaf) + " is not a leaf");
  return n.members;
}

// --- Rules ---------------------------------------------------------------------------

namespace {

std::string format_threshold(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", t);
  return buf;
}

}  // namespace

std::string Condition::text() const {
  if (dtype == Dtype::binary) return feature + (at_most ? " = 0" : " = 1");
  return feature + (at_most ? " <= " : " > ") + format_threshold(threshold);
}

std::vector<Condition> path_to(const DecisionTree& tree, std::size_t node) {
  tree.node(node);
  std::vector<std::size_t> parent(tree.nodes.size(), tree.nodes.size());
  for (const auto& n : tree.nodes) {
    if (!n.split) continue;
    parent[n.left] = n.id;
    parent[n.right] = n.id;
  }
  std::vector<Condition> conds;
  for (std::size_t at = node; parent[at] != tree.nodes.size(); at = parent[at]) {
    const TreeNode& p = tree.nodes[parent[at]];
    conds.push_back({p.split->feature, p.split->dtype, p.split->threshold, p.left == at});
  }
  std::reverse(conds.begin(), conds.end());
  return conds;
}

std::vector<Rule> extract_rules(const DecisionTree& tree) {
  std::vector<Rule> rules;
  for (std::size_t leaf : tree.leaf_ids()) {
    const TreeNode& n = tree.nodes[leaf];
    Rule r;
    r.leaf = leaf;
    r.conditions = path_to(tree, leaf);
    r.n_unsat = n.n_unsat;
    r.n_sat = n.n_sat;
    const std::size_t total = n.n_unsat + n.n_sat;
    r.failure_rate = total == 0 ? 0.0 : static_cast<double>(n.n_unsat) / static_cast<double>(total);
    std::string lhs;
    for (const auto& c : r.conditions) {
      if (!lhs.empty()) lhs += " AND ";
      lhs += c.text();
    }
    if (lhs.empty()) lhs = "(no conditions)";
    r.text = lhs + " ⇒ fails in " + std::to_string(std::lround(100.0 * r.failure_rate)) +
             "% of cases";
    rules.push_back(std::move(r));
  }
  return rules;
}

// --- Cross-validation ----------------------------------------------------------------

CvResult cross_validate(const FeatureMatrix& matrix, std::span<const std::size_t> rows,
                        const TreeParams& params, int folds) {
  if (folds < 2) throw InvalidArgument("cross_validate: need at least 2 folds");
  if (rows.size() < static_cast<std::size_t>(folds)) {
    throw InvalidArgument("cross_validate: " + std::to_string(rows.size()) +
                          " instances is fewer than " + std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> by_class[2];
  for (auto r : rows) by_class[static_cast<int>(matrix.labels[r])].push_back(r);
  if (by_class[0].empty() || by_class[1].empty()) {
    throw InvalidArgument("cross_validate: stratification needs both label classes");
  }

  Rng rng(params.seed);
  std::vector<int> fold_of_row(matrix.rows(), -1);
  std::size_t dealt = 0;
  for (auto& cls : by_class) {
    std::sort(cls.begin(), cls.end(),
              [&](std::size_t a, std::size_t b) { return matrix.ids[a] < matrix.ids[b]; });
    rng.shuffle(std::span<std::size_t>(cls));
    for (auto r : cls) fold_of_row[r] = static_cast<int>(dealt++ % static_cast<std::size_t>(folds));
  }

  CvResult result;
  for (auto r : rows) result.fold_of[matrix.ids[r]] = fold_of_row[r];
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    for (auto r : rows) (fold_of_row[r] == fold ? test_rows : train_rows).push_back(r);
    DecisionTree tree = train(matrix, train_rows, params);
    TreePredictor predictor(tree, matrix);
    std::size_t correct = 0;
    for (auto r : test_rows) correct += predictor(r).label == matrix.labels[r] ? 1 : 0;
    result.fold_accuracies.push_back(static_cast<double>(correct) /
                                     static_cast<double>(test_rows.size()));
  }
  double sum = 0.0;
  for (double a : result.fold_accuracies) sum += a;
  result.mean_accuracy = sum / static_cast<double>(folds);
  return result;
}

// --- JSON ----------------------------------------------------------------------------

namespace {

json node_to_json(const DecisionTree& tree, std::size_t id) {
  const TreeNode& n = tree.nodes[id];
  json out{{"id", n.id}, {"depth", n.depth}, {"samples", {n.n_unsat, n.n_sat}},
           {"label", to_string(n.prediction)}};
  if (n.is_leaf()) {
    out["type"] = "leaf";
    out["instances"] = n.members;
    return out;
  }
  out["type"] = "split";
  out["feature"] = n.split->feature;
  out["dtype"] = to_string(n.split->dtype);
  out["threshold"] = n.split->threshold;
  out["gain_bits"] = n.split->gain;
  out["left"] = node_to_json(tree, n.left);
  out["right"] = node_to_json(tree, n.right);
  return out;
}

std::size_t node_from_json(const json& doc, DecisionTree& tree) {
  const std::size_t id = tree.nodes.size();
  tree.nodes.emplace_back();
  TreeNode n;
  n.id = doc.at("id").get<std::size_t>();
  if (n.id != id) throw ParseError("tree node " + std::to_string(n.id), "nodes must be in preorder");
  n.depth = doc.at("depth").get<int>();
  n.n_unsat = doc.at("samples").at(0).get<std::size_t>();
  n.n_sat = doc.at("samples").at(1).get<std::size_t>();
  n.prediction = parse_label(doc.at("label").get<std::string>());
  if (doc.at("type") == "leaf") {
    n.members = doc.at("instances").get<std::vector<std::string>>();
    tree.nodes[id] = std::move(n);
    return id;
  }
  n.split = Split{doc.at("feature").get<std::string>(), parse_dtype(doc.at("dtype").get<std::string>()),
                  doc.at("threshold").get<double>(), doc.at("gain_bits").get<double>()};
  tree.nodes[id] = std::move(n);
  std::size_t left = node_from_json(doc.at("left"), tree);
  std::size_t right = node_from_json(doc.at("right"), tree);
  tree.nodes[id].left = left;
  tree.nodes[id].right = right;
  return id;
}

}  // namespace

json tree_to_json(const DecisionTree& tree) {
  if (tree.nodes.empty()) return nullptr;
  return node_to_json(tree, 0);
}

DecisionTree tree_from_json(const json& doc) {
  DecisionTree tree;
  node_from_json(doc, tree);
  return tree;
}

json rules_to_json(const std::vector<Rule>& rules) {
  json out = json::array();
  for (const auto& r : rules) {
    out.push_back({{"leaf", r.leaf},
                   {"samples", {r.n_unsat, r.n_sat}},
                   {"failure_rate", r.failure_rate},
                   {"text", r.text}});
  }
  return out;
}

json cv_to_json(const CvResult& cv) {
  return {{"fold_accuracies", cv.fold_accuracies},
          {"mean_accuracy", cv.mean_accuracy},
          {"fold_of", cv.fold_of}};
}

CvResult cv_from_json(const json& doc) {
  CvResult cv;
  cv.fold_accuracies = doc.at("fold_accuracies").get<std::vector<double>>();
  cv.mean_accuracy = doc.at("mean_accuracy").get<double>();
  cv.fold_of = doc.at("fold_of").get<std::map<std::string, int>>();
  return cv;
}

json params_to_json(const TreeParams& params) {
  return {{"max_depth", params.max_depth},
          {"min_samples_leaf", params.min_samples_leaf},
          {"min_gain", params.min_gain},
          {"excluded_features", params.excluded_features},
          {"seed", params.seed}};
}

TreeParams params_from_json(const json& doc) {
  TreeParams p;
  p.max_depth = doc.at("max_depth").get<int>();
  p.min_samples_leaf = doc.at("min_samples_leaf").get<std::size_t>();
  p.min_gain = doc.at("min_gain").get<double>();
  p.excluded_features = doc.at("excluded_features").get<std::set<std::string>>();
  p.seed = doc.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace failscope
