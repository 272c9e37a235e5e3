#pragma once

// Brute-force reference implementations. They share no code with the library
// beyond the data types, and favour the obvious formula over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "failscope/dataset.hpp"
#include "failscope/feature_matrix.hpp"

namespace oracle {

inline double entropy(const std::vector<std::size_t>& x) {
  std::map<std::size_t, double> p;
  for (auto v : x) p[v] += 1.0;
  double h = 0.0;
  for (auto& [v, c] : p) {
    double q = c / static_cast<double>(x.size());
    h -= q * std::log2(q);
  }
  return h;
}

// Sum over the joint histogram of p(x,y) log2(p(x,y) / (p(x) p(y))).
inline double mutual_information(const std::vector<std::size_t>& x, const std::vector<std::size_t>& y) {
  const double n = static_cast<double>(x.size());
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> px, py;
  for (std::size_t i = 0; i < x.size(); ++i) {
    joint[{x[i], y[i]}] += 1.0;
    px[x[i]] += 1.0;
    py[y[i]] += 1.0;
  }
  double mi = 0.0;
  for (auto& [xy, c] : joint) {
    double pxy = c / n;
    mi += pxy * std::log2(pxy / ((px[xy.first] / n) * (py[xy.second] / n)));
  }
  return mi;
}

inline std::vector<std::size_t> label_codes(const std::vector<failscope::Label>& labels) {
  std::vector<std::size_t> out;
  for (auto l : labels) out.push_back(l == failscope::Label::satisfactory ? 1 : 0);
  return out;
}

// --- Average linkage, recomputed from member lists at every step --------------

struct RefMerge {
  std::size_t left, right;
  double distance;
  std::size_t size;
};

inline double euclid(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Pairs whose linkage differs by less than `tol` (relative) are ordered by
// (smaller id, larger id).
inline std::vector<RefMerge> average_linkage(const std::vector<std::vector<std::uint8_t>>& rows,
                                             double tol = 1e-9) {
  const std::size_t n = rows.size();
  std::map<std::size_t, std::vector<std::size_t>> active;
  for (std::size_t i = 0; i < n; ++i) active[i] = {i};
  std::vector<RefMerge> out;
  std::size_t next = n;
  while (active.size() > 1) {
    bool found = false;
    double best = 0.0;
    std::size_t bi = 0, bj = 0;
    for (auto a = active.begin(); a != active.end(); ++a) {
      for (auto b = std::next(a); b != active.end(); ++b) {
        double sum = 0.0;
        for (auto i : a->second) {
          for (auto j : b->second) sum += euclid(rows[i], rows[j]);
        }
        double link = sum / static_cast<double>(a->second.size() * b->second.size());
        bool better;
        if (!found) {
          better = true;
        } else {
          double scale = std::max({1.0, std::abs(link), std::abs(best)});
          if (std::abs(link - best) <= tol * scale) {
            better = std::make_pair(a->first, b->first) < std::make_pair(bi, bj);
          } else {
            better = link < best;
          }
        }
        if (better) {
          found = true;
          best = link;
          bi = a->first;
          bj = b->first;
        }
      }
    }
    std::vector<std::size_t> members = active[bi];
    members.insert(members.end(), active[bj].begin(), active[bj].end());
    active.erase(bi);
    active.erase(bj);
    out.push_back({bi, bj, best, members.size()});
    active[next++] = members;
  }
  return out;
}

// --- Exhaustive split search --------------------------------------------------

struct RefSplit {
  std::string feature;
  double threshold;
  double gain;
};

inline double side_entropy(std::size_t u, std::size_t s) {
  double n = static_cast<double>(u + s), h = 0.0;
  for (double c : {static_cast<double>(u), static_cast<double>(s)}) {
    if (c > 0) h -= (c / n) * std::log2(c / n);
  }
  return h;
}

// Information gain H(Y) - sum |side|/n H(Y | side) over every feature and every
// midpoint threshold; best gain wins, then smaller name, then smaller threshold.
inline std::optional<RefSplit> best_split(const failscope::FeatureMatrix& m, const std::vector<std::size_t>& rows,
                                          std::size_t min_leaf, double min_gain) {
  std::size_t tu = 0, ts = 0;
  for (auto r : rows) (m.labels[r] == failscope::Label::satisfactory ? ts : tu)++;
  const double h = side_entropy(tu, ts);
  std::optional<RefSplit> best;
  for (std::size_t f = 0; f < m.features(); ++f) {
    std::set<double> values;
    for (auto r : rows) values.insert(m.columns[f][r]);
    std::vector<double> sorted(values.begin(), values.end());
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      double t = m.dtypes[f] == failscope::Dtype::binary ? 0.5 : (sorted[i] + sorted[i + 1]) / 2.0;
      std::size_t lu = 0, ls = 0, ru = 0, rs = 0;
      for (auto r : rows) {
        bool sat = m.labels[r] == failscope::Label::satisfactory;
        if (m.columns[f][r] <= t) {
          (sat ? ls : lu)++;
        } else {
          (sat ? rs : ru)++;
        }
      }
      if (lu + ls < min_leaf || ru + rs < min_leaf) continue;
      double n = static_cast<double>(rows.size());
      double gain = h - (static_cast<double>(lu + ls) / n) * side_entropy(lu, ls) -
                    (static_cast<double>(ru + rs) / n) * side_entropy(ru, rs);
      if (gain < min_gain - 1e-12) continue;
      bool better = false;
      if (!best || gain > best->gain + 1e-11) {
        better = true;
      } else if (std::abs(gain - best->gain) <= 1e-11) {
        better = std::make_pair(m.names[f], t) < std::make_pair(best->feature, best->threshold);
      }
      if (better) best = RefSplit{m.names[f], t, gain};
    }
  }
  return best;
}

}  // namespace oracle
