#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "failscope/dataset.hpp"

namespace failscope {

// Dense column-major copy of a feature subset over a fixed row order. Trees
// and rankings index rows of this matrix instead of walking instance maps.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<Dtype> dtypes;
  std::vector<std::vector<double>> columns;  // columns[feature][row]
  std::vector<std::string> ids;
  std::vector<Label> labels;

  std::size_t rows() const { return ids.size(); }
  std::size_t features() const { return names.size(); }
  // Column index of `name`, or features() when absent.
  std::size_t column_of(std::string_view name) const;

  // Rows follow `dataset.instances` order; features follow `feature_names`.
  static FeatureMatrix build(const Dataset& dataset, std::span<const std::string> feature_names);
};

// 0, 1, ..., n-1.
std::vector<std::size_t> all_rows(std::size_t n);

}  // namespace failscope
