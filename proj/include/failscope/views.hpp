#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "failscope/clustering.hpp"
#include "failscope/dataset.hpp"
#include "failscope/dtree.hpp"
#include "failscope/stats.hpp"

namespace failscope {

inline constexpr int kReportSchemaVersion = 1;

// One cell of the view grid plus the clustering and model settings.
struct ViewSpec {
  ViewKind view_kind = ViewKind::content;
  DataSource data_source = DataSource::crowd;
  DataSource clustering_source = DataSource::crowd;
  std::size_t k = 30;
  // Applied in order after the cut; ids refer to the assignment at that point.
  std::vector<std::vector<int>> merges;
  TreeParams tree;
  double good_threshold = 0.75;
  double bad_threshold = 0.65;
  int folds = 5;
  std::size_t top_terms = 5;

  bool operator==(const ViewSpec&) const = default;
};

nlohmann::json spec_to_json(const ViewSpec& spec);
ViewSpec spec_from_json(const nlohmann::json& doc);

enum class Highlight { good, bad, neutral };
std::string_view to_string(Highlight h);
Highlight parse_highlight(std::string_view text);

// good iff rate >= good_threshold, bad iff rate <= bad_threshold.
Highlight classify_highlight(double rate, double good_threshold, double bad_threshold);

// Tree, cross-validation and ranking over one instance set. Tree and CV are
// absent when the set is ineligible for training; `skip_reason` says why.
struct ModelBlock {
  std::optional<DecisionTree> tree;
  std::optional<CvResult> cv;
  FeatureRanking ranking;
  std::string skip_reason;

  bool skipped() const { return !tree.has_value(); }
  bool operator==(const ModelBlock&) const = default;
};

struct ClusterReport {
  int id = 0;
  std::string label;
  std::size_t size = 0;
  std::vector<std::string> top_terms;
  double satisfaction_rate = 0.0;
  std::optional<double> human_agreement;
  Highlight highlight = Highlight::neutral;
  ModelBlock model;

  bool operator==(const ClusterReport&) const = default;
};

struct GenericReport {
  std::size_t size = 0;
  double satisfaction_rate = 0.0;
  std::optional<double> human_agreement;
  ModelBlock model;

  bool operator==(const GenericReport&) const = default;
};

struct PerformanceReport {
  ViewSpec spec;
  std::string dataset_digest;
  std::string provenance;
  std::size_t dataset_size = 0;
  std::vector<std::string> features;  // the view's feature subset, excluded ones removed
  std::string config_hash;
  Dendrogram dendrogram;
  ClusterAssignment assignment;
  GenericReport generic;
  std::vector<ClusterReport> clusters;  // ordered by id
  // Instance-weighted mean of per-cluster CV accuracy over trained clusters.
  double all_clusters_accuracy = 0.0;

  const ClusterReport& cluster(int id) const;  // throws NotFound
  bool operator==(const PerformanceReport&) const = default;
};

struct BuildOptions {
  unsigned jobs = 1;
};

// Stable digest of (dataset digest, spec). The seed lives in spec.tree.
std::string config_hash(const std::string& dataset_digest, const ViewSpec& spec);

// Clusters the dataset on the spec's clustering source, then trains, cross-
// validates and ranks a generic model and one model per eligible cluster.
// Clusters smaller than 2 * min_samples_leaf, smaller than the fold count, or
// holding one label class are reported without a model.
PerformanceReport build_view(const Dataset& dataset, const ViewSpec& spec,
                             const BuildOptions& options = {});

struct WhatIfDelta {
  std::vector<std::string> excluded_features;
  std::vector<std::vector<int>> merges;
  std::optional<std::size_t> k;

  bool empty() const { return excluded_features.empty() && merges.empty() && !k; }
};

// The spec a delta produces. A k change re-cuts the dendrogram and drops the
// old merges; merges in the same delta then refer to the new cut.
ViewSpec apply_delta(const ViewSpec& spec, const WhatIfDelta& delta);

// Same result as build_view(dataset, apply_delta(report.spec, delta)), reusing
// the dendrogram and every cluster or generic block whose inputs are unchanged.
PerformanceReport what_if(const PerformanceReport& report, const Dataset& dataset,
                          const WhatIfDelta& delta, const BuildOptions& options = {});

struct ComparisonRow {
  int cluster_a = 0;
  int cluster_b = 0;
  std::string label_a;
  std::string label_b;
  double term_overlap = 0.0;  // Jaccard of top terms
  double rate_a = 0.0;
  double rate_b = 0.0;
  double rate_delta = 0.0;  // a - b
  std::optional<double> accuracy_a;
  std::optional<double> accuracy_b;
  std::optional<double> accuracy_delta;
};

struct ViewComparison {
  std::string config_hash_a;
  std::string config_hash_b;
  std::vector<ComparisonRow> rows;
  double generic_accuracy_delta = 0.0;
  double all_clusters_accuracy_delta = 0.0;
};

// Pairs every cluster of `a` with the cluster of `b` sharing the most top
// terms and tabulates the differences. Throws DatasetMismatch when the
// reports describe different datasets.
ViewComparison compare_views(const PerformanceReport& a, const PerformanceReport& b);

nlohmann::json report_to_json(const PerformanceReport& report);
PerformanceReport report_from_json(const nlohmann::json& doc);
std::string serialize_report(const PerformanceReport& report);
PerformanceReport load_report(const std::filesystem::path& path);

nlohmann::json comparison_to_json(const ViewComparison& comparison);
nlohmann::json ranking_to_json(const FeatureRanking& ranking);
FeatureRanking ranking_from_json(const nlohmann::json& doc);

// Self-contained HTML rendering of a report.
std::string render_html(const PerformanceReport& report);

}  // namespace failscope
