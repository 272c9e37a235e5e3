#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace failscope {

// Content views describe when the system fails (input terms); component views
// describe how it fails (per-component quality and confidence).
enum class ViewKind { content, component };

// Crowd data is human ground truth; system data is the pipeline's own signal.
enum class DataSource { crowd, system };

enum class Dtype { binary, count, continuous };

enum class Label { unsatisfactory = 0, satisfactory = 1 };

std::string_view to_string(ViewKind kind);
std::string_view to_string(DataSource source);
std::string_view to_string(Dtype dtype);
std::string_view to_string(Label label);
ViewKind parse_view_kind(std::string_view text);
DataSource parse_data_source(std::string_view text);
Dtype parse_dtype(std::string_view text);
Label parse_label(std::string_view text);

struct FeatureDescriptor {
  std::string name;
  ViewKind view_kind = ViewKind::content;
  DataSource data_source = DataSource::crowd;
  Dtype dtype = Dtype::binary;
  std::string description;

  bool operator==(const FeatureDescriptor&) const = default;
};

// Ordered set of feature descriptors with unique names.
class FeatureCatalog {
 public:
  FeatureCatalog() = default;
  // Throws InvalidArgument on a duplicate name.
  explicit FeatureCatalog(std::vector<FeatureDescriptor> features);

  const std::vector<FeatureDescriptor>& features() const { return features_; }
  std::size_t size() const { return features_.size(); }
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  const FeatureDescriptor* find(std::string_view name) const;
  // Throws UnknownFeatureError.
  const FeatureDescriptor& at(std::string_view name) const;

  // Names of the features in one cell of the view grid, sorted.
  std::vector<std::string> select(ViewKind kind, DataSource source) const;

  bool operator==(const FeatureCatalog& other) const {
    return features_ == other.features_;
  }

 private:
  std::vector<FeatureDescriptor> features_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Instance {
  std::string id;
  // Sparse: an absent binary feature reads as 0.
  std::map<std::string, double> features;
  Label label = Label::unsatisfactory;
  // Per-worker judgments, 1 = satisfactory.
  std::optional<std::vector<int>> votes;
  std::map<DataSource, std::vector<std::string>> content_terms;

  bool operator==(const Instance&) const = default;
};

struct Dataset {
  FeatureCatalog catalog;
  std::vector<Instance> instances;
  std::string provenance;

  bool operator==(const Dataset&) const = default;
};

// Value of `feature` for `instance`. Absent binary features are 0; an absent
// count or continuous feature throws InvalidArgument.
double feature_value(const Instance& instance, const FeatureDescriptor& feature);

// --- Serialization ---------------------------------------------------------

enum class DatasetFormat { tabular, structured };

// Picks the format from the extension: `.csv` is tabular, anything else is
// the structured JSON document.
DatasetFormat format_for_path(const std::filesystem::path& path);

// Tabular files need the sidecar catalog; structured files carry their own.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::optional<std::filesystem::path>& catalog_path = {});
FeatureCatalog load_catalog(const std::filesystem::path& path);

Dataset dataset_from_json(const nlohmann::json& doc);
nlohmann::json dataset_to_json(const Dataset& dataset);
nlohmann::json catalog_to_json(const FeatureCatalog& catalog);
FeatureCatalog catalog_from_json(const nlohmann::json& doc, const std::string& locus);

Dataset parse_tabular(std::string_view text, const FeatureCatalog& catalog);
std::string write_tabular(const Dataset& dataset);

// Writes instances sorted by id.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
void write_dataset_tabular(const Dataset& dataset, const std::filesystem::path& csv_path,
                           const std::filesystem::path& catalog_path);

// Instances sorted by id, explicit binary zeros dropped.
Dataset canonicalize(Dataset dataset);

// Stable hex digest of the canonical serialization, provenance excluded.
std::string dataset_digest(const Dataset& dataset);

// --- Validation ------------------------------------------------------------

enum class ViolationKind {
  duplicate_id,
  unknown_feature,
  dtype_violation,
  missing_value,
  label_vote_mismatch,
  empty_votes,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string instance_id;
  std::string feature;
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool clean() const { return violations.empty(); }
};

ValidationReport validate(const Dataset& dataset);

// --- Metrics ---------------------------------------------------------------

struct ConfidenceAggregates {
  double avg = 0.0;
  double std = 0.0;  // population standard deviation
  double max = 0.0;
  double min = 0.0;
};

ConfidenceAggregates aggregate_confidences(std::span<const double> scores);

// Ties resolve to unsatisfactory.
Label majority_label(std::span<const int> votes);

// Fraction of `votes` that agree with their own majority label.
double agreement_with_majority(std::span<const int> votes);

double satisfaction_rate(std::span<const Label> labels);
double satisfaction_rate(std::span<const Instance> instances);

double human_agreement(std::span<const Instance> instances);

}  // namespace failscope
