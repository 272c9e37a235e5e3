#include "failscope/clustering.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "failscope/error.hpp"

namespace failscope {

using nlohmann::json;

TermDocumentMatrix build_term_matrix(const Dataset& dataset, DataSource source) {
  std::vector<const Instance*> ordered;
  ordered.reserve(dataset.instances.size());
  for (const auto& inst : dataset.instances) ordered.push_back(&inst);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Instance* a, const Instance* b) { return a->id < b->id; });

  std::set<std::string> vocab;
  for (const Instance* inst : ordered) {
    auto it = inst->content_terms.find(source);
    if (it == inst->content_terms.end()) {
      throw InvalidArgument("instance '" + inst->id + "' has no " +
                            std::string(to_string(source)) + " content terms");
    }
    vocab.insert(it->second.begin(), it->second.end());
  }

  TermDocumentMatrix m;
  m.source = source;
  m.vocabulary.assign(vocab.begin(), vocab.end());
  for (const Instance* inst : ordered) {
    std::vector<std::uint8_t> row(m.vocabulary.size(), 0);
    for (const auto& term : inst->content_terms.at(source)) {
      auto pos = std::lower_bound(m.vocabulary.begin(), m.vocabulary.end(), term);
      row[static_cast<std::size_t>(pos - m.vocabulary.begin())] = 1;
    }
    m.ids.push_back(inst->id);
    m.rows.push_back(std::move(row));
  }
  return m;
}

bool linkage_tied(double a, double b) {
  double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= kLinkageTieTolerance * scale;
}

bool linkage_less(double a, double b) { return !linkage_tied(a, b) && a < b; }

namespace {

// Orders candidate pairs: linkage first, then (smaller id, larger id).
struct PairKey {
  double distance;
  std::size_t lo;
  std::size_t hi;

  bool operator<(const PairKey& o) const {
    if (!linkage_tied(distance, o.distance)) return distance < o.distance;
    if (lo != o.lo) return lo < o.lo;
    return hi < o.hi;
  }
};

class CondensedMatrix {
 public:
  explicit CondensedMatrix(std::size_t n) : n_(n), data_(n * (n - 1) / 2, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return data_[index(i, j)]; }
  double get(std::size_t i, std::size_t j) const { return data_[index(i, j)]; }
  // Entries (i, i+1), (i, i+2), ... are contiguous.
  const double* row_tail(std::size_t i) const { return data_.data() + index(i, i + 1); }

 private:
  std::size_t index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    return i * n_ - i * (i + 1) / 2 + (j - i - 1);
  }
  std::size_t n_;
  std::vector<double> data_;
};

void pairwise_distances(const TermDocumentMatrix& m, CondensedMatrix& dist, unsigned jobs) {
  const std::size_t n = m.rows.size();
  const std::size_t words = (m.vocabulary.size() + 63) / 64;
  std::vector<std::uint64_t> packed(n * words, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < m.vocabulary.size(); ++t) {
      if (m.rows[i][t]) packed[i * words + t / 64] |= std::uint64_t{1} << (t % 64);
    }
  }
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      for (std::size_t j = i + 1; j < n; ++j) {
        int hamming = 0;
        for (std::size_t w = 0; w < words; ++w) {
          hamming += std::popcount(packed[i * words + w] ^ packed[j * words + w]);
        }
        dist.at(i, j) = std::sqrt(static_cast<double>(hamming));
      }
    }
  };
  jobs = std::max(1u, jobs);
  if (jobs == 1 || n < 64) {
    work(0, 1);
    return;
  }
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < jobs; ++t) threads.emplace_back(work, t, jobs);
  for (auto& th : threads) th.join();
}

}  // namespace

Dendrogram agglomerate(const TermDocumentMatrix& matrix, unsigned jobs) {
  const std::size_t n = matrix.rows.size();
  if (n < 2) throw InvalidArgument("agglomerate: need at least 2 instances");
  for (const auto& row : matrix.rows) {
    if (row.size() != matrix.vocabulary.size()) throw InvalidArgument("agglomerate: ragged term matrix");
  }

  CondensedMatrix dist(n);
  pairwise_distances(matrix, dist, jobs);

  std::vector<std::size_t> node(n);
  std::iota(node.begin(), node.end(), std::size_t{0});
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  // Nearest partner of each slot among active slots with a larger index.
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> nn(n, kNone);

  auto key = [&](std::size_t i, std::size_t j) {
    return PairKey{dist.get(i, j), std::min(node[i], node[j]), std::max(node[i], node[j])};
  };
  auto rescan = [&](std::size_t i) {
    nn[i] = kNone;
    const double* tail = dist.row_tail(i);
    PairKey best{0.0, 0, 0};
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!active[j]) continue;
      PairKey k{tail[j - i - 1], std::min(node[i], node[j]), std::max(node[i], node[j])};
      if (nn[i] == kNone || k < best) {
        best = k;
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i + 1 < n; ++i) rescan(i);

  Dendrogram dg;
  dg.leaves = matrix.ids;
  dg.merges.reserve(n - 1);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t a = kNone;
    PairKey best{0.0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i] || nn[i] == kNone) continue;
      PairKey k = key(i, nn[i]);
      if (a == kNone || k < best) {
        best = k;
        a = i;
      }
    }
    const std::size_t b = nn[a];
    dg.merges.push_back({best.lo, best.hi, best.distance, size[a] + size[b]});

    // Lance-Williams update for average linkage; the merged cluster takes slot a.
    const double wa = static_cast<double>(size[a]);
    const double wb = static_cast<double>(size[b]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      dist.at(a, k) = (wa * dist.get(a, k) + wb * dist.get(b, k)) / (wa + wb);
    }
    active[b] = false;
    size[a] += size[b];
    node[a] = n + step;

    rescan(a);
    for (std::size_t k = 0; k < b; ++k) {
      if (!active[k] || k == a) continue;
      if (nn[k] == a || nn[k] == b) {
        rescan(k);
      } else if (k < a && nn[k] != kNone && key(k, a) < key(k, nn[k])) {
        nn[k] = a;
      } else if (k < a && nn[k] == kNone) {
        nn[k] = a;
      }
    }
  }
  return dg;
}

// --- ClusterAssignment ------------------------------------------------------------

std::vector<int> ClusterAssignment::cluster_ids() const {
  std::set<int> ids;
  for (const auto& [_, c] : assignment) ids.insert(c);
  return {ids.begin(), ids.end()};
}

std::vector<std::string> ClusterAssignment::members(int cluster) const {
  std::vector<std::string> out;
  for (const auto& [id, c] : assignment) {
    if (c == cluster) out.push_back(id);
  }
  return out;
}

bool ClusterAssignment::contains(int cluster) const {
  return std::any_of(assignment.begin(), assignment.end(),
                     [&](const auto& kv) { return kv.second == cluster; });
}

ClusterAssignment cut(const Dendrogram& dendrogram, std::size_t k) {
  const std::size_t n = dendrogram.leaves.size();
  if (k < 1 || k > n) {
    throw InvalidArgument("cut: k=" + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  std::vector<std::size_t> parent(2 * n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t step = 0; step < n - k; ++step) {
    const Merge& m = dendrogram.merges[step];
    parent[find(m.left)] = n + step;
    parent[find(m.right)] = n + step;
  }
  // Number components by their first leaf in row order.
  std::map<std::size_t, int> root_to_cluster;
  ClusterAssignment out;
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    std::size_t root = find(leaf);
    auto [it, inserted] = root_to_cluster.emplace(root, static_cast<int>(root_to_cluster.size()));
    out.assignment[dendrogram.leaves[leaf]] = it->second;
  }
  return out;
}

ClusterAssignment merge_clusters(const ClusterAssignment& assignment, const std::set<int>& ids) {
  if (ids.empty()) throw InvalidArgument("merge_clusters: empty id set");
  for (int id : ids) {
    if (!assignment.contains(id)) throw NotFound("unknown cluster id " + std::to_string(id));
  }
  const int target = *ids.begin();
  ClusterAssignment out = assignment;
  for (auto& [_, c] : out.assignment) {
    if (ids.contains(c)) c = target;
  }
  std::string label;
  for (int id : ids) {
    auto it = assignment.labels.find(id);
    if (it == assignment.labels.end()) continue;
    if (!label.empty()) label += "+";
    label += it->second;
    out.labels.erase(id);
  }
  if (!label.empty()) out.labels[target] = label;
  return out;
}

std::vector<std::string> top_terms(const ClusterAssignment& assignment,
                                   const TermDocumentMatrix& matrix, int cluster, std::size_t n) {
  if (!assignment.contains(cluster)) throw NotFound("unknown cluster id " + std::to_string(cluster));
  std::vector<std::size_t> counts(matrix.vocabulary.size(), 0);
  for (std::size_t r = 0; r < matrix.ids.size(); ++r) {
    auto it = assignment.assignment.find(matrix.ids[r]);
    if (it == assignment.assignment.end() || it->second != cluster) continue;
    for (std::size_t t = 0; t < counts.size(); ++t) counts[t] += matrix.rows[r][t];
  }
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Vocabulary is sorted, so index order is lexicographic order.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < order.size() && i < n; ++i) out.push_back(matrix.vocabulary[order[i]]);
  return out;
}

json dendrogram_to_json(const Dendrogram& dendrogram) {
  json merges = json::array();
  for (const auto& m : dendrogram.merges) {
    merges.push_back({{"left", m.left}, {"right", m.right}, {"distance", m.distance}, {"size", m.size}});
  }
  return {{"leaves", dendrogram.leaves}, {"merges", std::move(merges)}};
}

Dendrogram dendrogram_from_json(const json& doc) {
  Dendrogram dg;
  dg.leaves = doc.at("leaves").get<std::vector<std::string>>();
  for (const auto& m : doc.at("merges")) {
    dg.merges.push_back({m.at("left").get<std::size_t>(), m.at("right").get<std::size_t>(),
                         m.at("distance").get<double>(), m.at("size").get<std::size_t>()});
  }
  return dg;
}

json assignment_to_json(const ClusterAssignment& assignment) {
  json labels = json::object();
  for (const auto& [id, label] : assignment.labels) labels[std::to_string(id)] = label;
  return {{"assignment", assignment.assignment}, {"labels", std::move(labels)}};
}

ClusterAssignment assignment_from_json(const json& doc) {
  ClusterAssignment a;
  a.assignment = doc.at("assignment").get<std::map<std::string, int>>();
  for (const auto& [id, label] : doc.at("labels").items()) a.labels[std::stoi(id)] = label.get<std::string>();
  return a;
}

}  // namespace failscope
