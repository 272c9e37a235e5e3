#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "failscope/dataset.hpp"
#include "failscope/feature_matrix.hpp"

namespace failscope {

// Categorical variable over a row set. When produced by discretize(), bin i
// holds values v with edges[i-1] <= v < edges[i].
struct DiscreteColumn {
  std::vector<std::size_t> values;
  std::size_t arity = 1;
  std::vector<double> edges;
};

// All logarithms are base 2.
double entropy(std::span<const Label> labels);
double entropy_from_counts(std::span<const std::size_t> counts);

// Plug-in estimate from a row-major `rows x cols` contingency table.
double mutual_information_from_table(std::span<const std::size_t> joint, std::size_t rows,
                                     std::size_t cols);

double mutual_information(const DiscreteColumn& x, std::span<const Label> y);
double mutual_information(const DiscreteColumn& x, const DiscreteColumn& y);

// Label vector as a two-category column (unsatisfactory = 0).
DiscreteColumn label_column(std::span<const Label> labels);

// Quantile binning into at most `bins` bins; coinciding edges collapse, so a
// constant input yields arity 1. `bins = 2` is the median split.
DiscreteColumn discretize(std::span<const double> values, std::size_t bins);

inline constexpr std::size_t kRankingBins = 4;

// Information values that differ by less than 1e-12 bits compare equal, so
// mathematically tied candidates fall through to the name/threshold
// tie-breaks instead of rounding noise.
inline std::int64_t gain_key(double bits) { return std::llround(bits * 1e12); }

struct RankedFeature {
  std::string name;
  double mi_bits = 0.0;

  bool operator==(const RankedFeature&) const = default;
};

struct FeatureRanking {
  std::vector<RankedFeature> entries;
  // Set when the row subset holds a single label class: every MI is 0.
  bool degenerate = false;

  bool operator==(const FeatureRanking&) const = default;
};

// MI between every matrix column and the labels over `rows`. Binary columns
// are used as-is; count and continuous columns are binned into quartiles
// computed on `rows`. Sorted by MI descending, then by name.
FeatureRanking rank_features(const FeatureMatrix& matrix, std::span<const std::size_t> rows);

FeatureRanking rank_features(const Dataset& dataset, std::span<const std::string> features,
                             std::span<const std::size_t> rows);

}  // namespace failscope
