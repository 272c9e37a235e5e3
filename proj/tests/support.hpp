#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "failscope/dataset.hpp"
#include "failscope/rng.hpp"

namespace support {

using namespace failscope;

inline FeatureDescriptor binary(std::string name, ViewKind v = ViewKind::content,
                                DataSource s = DataSource::crowd) {
  return {std::move(name), v, s, Dtype::binary, ""};
}
inline FeatureDescriptor count(std::string name, ViewKind v = ViewKind::component,
                               DataSource s = DataSource::crowd) {
  return {std::move(name), v, s, Dtype::count, ""};
}
inline FeatureDescriptor continuous(std::string name, ViewKind v = ViewKind::component,
                                    DataSource s = DataSource::crowd) {
  return {std::move(name), v, s, Dtype::continuous, ""};
}

inline Instance instance(std::string id, Label label, std::map<std::string, double> features,
                         std::vector<std::string> crowd_terms = {}) {
  Instance i;
  i.id = std::move(id);
  i.label = label;
  i.features = std::move(features);
  if (!crowd_terms.empty()) {
    i.content_terms[DataSource::crowd] = crowd_terms;
    i.content_terms[DataSource::system] = std::move(crowd_terms);
  }
  return i;
}

inline constexpr Label U = Label::unsatisfactory;
inline constexpr Label S = Label::satisfactory;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("failscope-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace support
