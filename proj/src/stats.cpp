#include "failscope/stats.hpp"

#include <algorithm>

#include "failscope/error.hpp"

namespace failscope {

double entropy_from_counts(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw InvalidArgument("entropy: empty input");
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return std::max(0.0, h);
}

double entropy(std::span<const Label> labels) {
  std::size_t counts[2] = {0, 0};
  for (Label l : labels) ++counts[static_cast<int>(l)];
  return entropy_from_counts(counts);
}

double mutual_information_from_table(std::span<const std::size_t> joint, std::size_t rows,
                                     std::size_t cols) {
  if (joint.size() != rows * cols) throw InvalidArgument("mutual_information: table shape mismatch");
  std::vector<std::size_t> row_sum(rows, 0);
  std::vector<std::size_t> col_sum(cols, 0);
  std::size_t total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      row_sum[r] += joint[r * cols + c];
      col_sum[c] += joint[r * cols + c];
      total += joint[r * cols + c];
    }
  }
  if (total == 0) throw InvalidArgument("mutual_information: empty input");
  const double n = static_cast<double>(total);
  double mi = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t nxy = joint[r * cols + c];
      if (nxy == 0) continue;
      // Integer products stay exact in a double for any realistic table.
      double ratio = (static_cast<double>(nxy) * n) /
                     (static_cast<double>(row_sum[r]) * static_cast<double>(col_sum[c]));
      mi += (static_cast<double>(nxy) / n) * std::log2(ratio);
    }
  }
  return std::max(0.0, mi);
}

DiscreteColumn label_column(std::span<const Label> labels) {
  DiscreteColumn col;
  col.arity = 2;
  col.values.reserve(labels.size());
  for (Label l : labels) col.values.push_back(static_cast<std::size_t>(l));
  return col;
}

double mutual_information(const DiscreteColumn& x, const DiscreteColumn& y) {
  if (x.values.size() != y.values.size()) throw InvalidArgument("mutual_information: length mismatch");
  if (x.values.empty()) throw InvalidArgument("mutual_information: empty input");
  std::vector<std::size_t> joint(x.arity * y.arity, 0);
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    if (x.values[i] >= x.arity || y.values[i] >= y.arity) {
      throw InvalidArgument("mutual_information: category index out of range");
    }
    ++joint[x.values[i] * y.arity + y.values[i]];
  }
  return mutual_information_from_table(joint, x.arity, y.arity);
}

double mutual_information(const DiscreteColumn& x, std::span<const Label> y) {
  if (x.values.size() != y.size()) throw InvalidArgument("mutual_information: length mismatch");
  return mutual_information(x, label_column(y));
}

DiscreteColumn discretize(std::span<const double> values, std::size_t bins) {
  if (values.empty()) throw InvalidArgument("discretize: empty input");
  if (bins < 2) throw InvalidArgument("discretize: need at least 2 bins");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  DiscreteColumn col;
  for (std::size_t i = 1; i < bins; ++i) {
    double edge = sorted[(i * n) / bins];
    if (edge <= sorted.front()) continue;
    if (!col.edges.empty() && edge <= col.edges.back()) continue;
    col.edges.push_back(edge);
  }
  col.arity = col.edges.size() + 1;
  col.values.reserve(n);
  for (double v : values) {
    auto bin = std::upper_bound(col.edges.begin(), col.edges.end(), v) - col.edges.begin();
    col.values.push_back(static_cast<std::size_t>(bin));
  }
  return col;
}

FeatureRanking rank_features(const FeatureMatrix& matrix, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InvalidArgument("rank_features: empty instance subset");
  std::vector<Label> labels;
  labels.reserve(rows.size());
  for (auto r : rows) labels.push_back(matrix.labels[r]);

  FeatureRanking ranking;
  ranking.degenerate = std::all_of(labels.begin(), labels.end(),
                                   [&](Label l) { return l == labels.front(); });

  std::vector<double> values(rows.size());
  for (std::size_t f = 0; f < matrix.features(); ++f) {
    double mi = 0.0;
    if (!ranking.degenerate) {
      for (std::size_t i = 0; i < rows.size(); ++i) values[i] = matrix.columns[f][rows[i]];
      DiscreteColumn x;
      if (matrix.dtypes[f] == Dtype::binary) {
        x.arity = 2;
        x.values.reserve(values.size());
        for (double v : values) x.values.push_back(v > 0.5 ? 1 : 0);
      } else {
        x = discretize(values, kRankingBins);
      }
      mi = mutual_information(x, labels);
    }
    ranking.entries.push_back({matrix.names[f], mi});
  }
  std::sort(ranking.entries.begin(), ranking.entries.end(),
            [](const RankedFeature& a, const RankedFeature& b) {
              auto ka = gain_key(a.mi_bits);
              auto kb = gain_key(b.mi_bits);
              if (ka != kb) return ka > kb;
              return a.name < b.name;
            });
  return ranking;
}

FeatureRanking rank_features(const Dataset& dataset, std::span<const std::string> features,
                             std::span<const std::size_t> rows) {
  return rank_features(FeatureMatrix::build(dataset, features), rows);
}

}  // namespace failscope
