#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "failscope/dataset.hpp"
#include "failscope/feature_matrix.hpp"

namespace failscope {

struct TreeParams {
  int max_depth = 5;
  std::size_t min_samples_leaf = 10;
  double min_gain = 1e-6;  // bits
  std::set<std::string> excluded_features;
  std::uint64_t seed = 0;

  bool operator==(const TreeParams&) const = default;
};

// Rows with value <= threshold go left. Binary features split at 0.5, so the
// left branch reads "feature = 0" and the right "feature = 1".
struct Split {
  std::string feature;
  Dtype dtype = Dtype::binary;
  double threshold = 0.5;
  double gain = 0.0;  // bits

  bool operator==(const Split&) const = default;
};

struct TreeNode {
  std::size_t id = 0;  // preorder index; leaf ids are node ids
  int depth = 0;
  std::size_t n_unsat = 0;
  std::size_t n_sat = 0;
  std::optional<Split> split;
  std::size_t left = 0;
  std::size_t right = 0;
  // Leaf only.
  Label prediction = Label::unsatisfactory;
  std::vector<std::string> members;  // sorted

  bool is_leaf() const { return !split.has_value(); }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& root() const { return nodes.front(); }
  const TreeNode& node(std::size_t id) const;
  std::vector<std::size_t> leaf_ids() const;
  std::set<std::string> features_used() const;
  int depth() const;

  bool operator==(const DecisionTree&) const = default;
};

// Majority label, ties resolve to unsatisfactory.
Label majority(std::size_t n_unsat, std::size_t n_sat);

// Best binary partition of `rows` by mutual information with the labels.
// Candidates: binary features split on presence; count and continuous
// features at midpoints of consecutive distinct values. Both sides must hold
// at least min_samples_leaf rows. Ties break by feature name, then by the
// smaller threshold. Empty when no candidate reaches min_gain.
std::optional<Split> best_split(const FeatureMatrix& matrix, std::span<const std::size_t> rows,
                                const TreeParams& params);

DecisionTree train(const FeatureMatrix& matrix, std::span<const std::size_t> rows,
                   const TreeParams& params);
DecisionTree train(const FeatureMatrix& matrix, const TreeParams& params);

struct Prediction {
  Label label = Label::unsatisfactory;
  std::size_t leaf = 0;
};

// Absent binary features read as 0; a missing count/continuous feature that
// the tree tests throws InvalidArgument.
Prediction predict(const DecisionTree& tree, const Instance& instance);

// Routes rows of a matrix holding every feature the tree tests.
class TreePredictor {
 public:
  TreePredictor(const DecisionTree& tree, const FeatureMatrix& matrix);
  Prediction operator()(std::size_t row) const;

 private:
  const DecisionTree& tree_;
  const FeatureMatrix& matrix_;
  std::vector<std::size_t> columns_;
};

// Sorted ids of the training instances that landed in `leaf`.
std::vector<std::string> leaf_instances(const DecisionTree& tree, std::size_t leaf);

struct Condition {
  std::string feature;
  Dtype dtype = Dtype::binary;
  double threshold = 0.5;
  bool at_most = true;  // value <= threshold (the left branch)

  std::string text() const;
  bool holds(double value) const { return at_most ? value <= threshold : value > threshold; }
};

struct Rule {
  std::size_t leaf = 0;
  std::vector<Condition> conditions;
  std::size_t n_unsat = 0;
  std::size_t n_sat = 0;
  double failure_rate = 0.0;
  std::string text;
};

// One conjunction per leaf, in leaf id order.
std::vector<Rule> extract_rules(const DecisionTree& tree);

// Conditions on the path from the root to `node`.
std::vector<Condition> path_to(const DecisionTree& tree, std::size_t node);

struct CvResult {
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  std::map<std::string, int> fold_of;

  bool operator==(const CvResult&) const = default;
};

// Stratified k-fold: each class is shuffled with params.seed and dealt
// round-robin across folds. Throws InvalidArgument with fewer rows than folds
// or a single class.
CvResult cross_validate(const FeatureMatrix& matrix, std::span<const std::size_t> rows,
                        const TreeParams& params, int folds = 5);

nlohmann::json tree_to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const nlohmann::json& doc);
nlohmann::json rules_to_json(const std::vector<Rule>& rules);
nlohmann::json cv_to_json(const CvResult& cv);
CvResult cv_from_json(const nlohmann::json& doc);
nlohmann::json params_to_json(const TreeParams& params);
TreeParams params_from_json(const nlohmann::json& doc);

}  // namespace failscope
