#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "failscope/dataset.hpp"

namespace failscope {

// Binary presence vectors of content terms, one row per instance in id order.
struct TermDocumentMatrix {
  std::vector<std::string> vocabulary;  // sorted
  std::vector<std::string> ids;         // sorted
  std::vector<std::vector<std::uint8_t>> rows;
  DataSource source = DataSource::crowd;
};

TermDocumentMatrix build_term_matrix(const Dataset& dataset, DataSource source);

// Node ids 0..n-1 are leaves (row order of the term matrix); merge i creates
// node n+i. `left < right` for every merge.
struct Merge {
  std::size_t left = 0;
  std::size_t right = 0;
  double distance = 0.0;
  std::size_t size = 0;

  bool operator==(const Merge&) const = default;
};

struct Dendrogram {
  std::vector<std::string> leaves;
  std::vector<Merge> merges;

  bool operator==(const Dendrogram&) const = default;
};

// Linkage values closer than this (relative to their magnitude) are treated
// as tied and ordered by node ids.
inline constexpr double kLinkageTieTolerance = 1e-9;

// True when linkage `a` orders strictly before linkage `b` ignoring ids.
bool linkage_less(double a, double b);
bool linkage_tied(double a, double b);

// Average-linkage agglomeration under Euclidean distance. At every step the
// closest pair of active clusters merges; tied pairs are ordered by
// (smaller node id, larger node id). `jobs` only parallelizes the initial
// pairwise distances.
Dendrogram agglomerate(const TermDocumentMatrix& matrix, unsigned jobs = 1);

// Cluster ids are arbitrary non-negative integers; after a cut they are
// 0..k-1 ordered by each cluster's first member id.
struct ClusterAssignment {
  std::map<std::string, int> assignment;  // instance id -> cluster id
  std::map<int, std::string> labels;

  std::size_t k() const { return cluster_ids().size(); }
  std::vector<int> cluster_ids() const;
  std::vector<std::string> members(int cluster) const;
  bool contains(int cluster) const;

  bool operator==(const ClusterAssignment&) const = default;
};

// Components after undoing the last k-1 merges.
ClusterAssignment cut(const Dendrogram& dendrogram, std::size_t k);

// Fuses `ids` into the smallest of them; every other cluster keeps its id.
ClusterAssignment merge_clusters(const ClusterAssignment& assignment, const std::set<int>& ids);

// The `n` most frequent terms among the cluster's rows, ties lexicographic.
std::vector<std::string> top_terms(const ClusterAssignment& assignment,
                                   const TermDocumentMatrix& matrix, int cluster, std::size_t n);

nlohmann::json dendrogram_to_json(const Dendrogram& dendrogram);
Dendrogram dendrogram_from_json(const nlohmann::json& doc);
nlohmann::json assignment_to_json(const ClusterAssignment& assignment);
ClusterAssignment assignment_from_json(const nlohmann::json& doc);

}  // namespace failscope
