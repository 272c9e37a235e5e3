#include "failscope/feature_matrix.hpp"

#include <numeric>

namespace failscope {

std::size_t FeatureMatrix::column_of(std::string_view name) const {
  for (std::size_t f = 0; f < names.size(); ++f) {
    if (names[f] == name) return f;
  }
  return names.size();
}

FeatureMatrix FeatureMatrix::build(const Dataset& dataset,
                                   std::span<const std::string> feature_names) {
  FeatureMatrix m;
  const std::size_t n = dataset.instances.size();
  m.ids.reserve(n);
  m.labels.reserve(n);
  for (const auto& inst : dataset.instances) {
    m.ids.push_back(inst.id);
    m.labels.push_back(inst.label);
  }
  for (const auto& name : feature_names) {
    const FeatureDescriptor& f = dataset.catalog.at(name);
    std::vector<double> column(n);
    for (std::size_t r = 0; r < n; ++r) column[r] = feature_value(dataset.instances[r], f);
    m.names.push_back(name);
    m.dtypes.push_back(f.dtype);
    m.columns.push_back(std::move(column));
  }
  return m;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace failscope
