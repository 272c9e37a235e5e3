#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "failscope/dataset.hpp"

namespace failscope {

struct PerformanceReport;

namespace synth {

inline constexpr int kConfigSchemaVersion = 1;

// Feature names produced by the generator. Content features are one binary
// column per vocabulary term plus term counts; component features follow the
// pipeline stages (visual detector, language model, caption reranker).
inline constexpr const char* kCrowdTermPrefix = "gt:";
inline constexpr const char* kSystemTermPrefix = "det:";
inline constexpr const char* kDetectorPrecisionObjects = "vd_precision_objects";
inline constexpr const char* kDetectorRecallObjects = "vd_recall_objects";
inline constexpr const char* kDetectorPrecisionActivities = "vd_precision_activities";
inline constexpr const char* kDetectorRecallActivities = "vd_recall_activities";
inline constexpr const char* kLanguageErrors = "lm_language_errors";
inline constexpr const char* kCommonsenseErrors = "lm_commonsense_errors";
inline constexpr const char* kSatisfactoryTop10 = "cr_satisfactory_top10";

enum class CompareOp { le, lt, gt, ge, eq, ne };

struct Predicate {
  std::string feature;
  CompareOp op = CompareOp::le;
  double value = 0.0;

  bool holds(double x) const;
  bool operator==(const Predicate&) const = default;
};

// Fires when every predicate holds for an instance in scope. The scope is
// "global" or a topic name.
struct FailureRule {
  std::string scope = "global";
  std::vector<Predicate> conditions;
  double failure_probability = 1.0;

  bool operator==(const FailureRule&) const = default;
};

// Per-topic detector behaviour relative to the crowd terms. Each crowd term
// is detected with probability `recall`; false detections are added at a
// rate that makes the expected micro precision equal `precision`, drawn from
// `confusion_terms` (or the whole vocabulary when empty).
struct DetectorNoise {
  double precision = 1.0;
  double recall = 1.0;
  std::vector<std::string> confusion_terms;

  bool operator==(const DetectorNoise&) const = default;
};

struct TopicConfig {
  std::string name;
  std::vector<std::string> objects;
  std::vector<std::string> activities;
  std::size_t instances = 100;
  double term_probability = 0.8;
  double base_failure = 0.2;
  DetectorNoise detector;

  bool operator==(const TopicConfig&) const = default;
};

struct ConfidenceModel {
  double correct_mean = 0.85;
  double correct_spread = 0.08;
  double false_mean = 0.45;
  double false_spread = 0.12;

  bool operator==(const ConfidenceModel&) const = default;
};

// workers = 0 disables votes; otherwise each worker reports the latent label
// with probability `accuracy` and the final label is the vote majority.
struct VoteModel {
  int workers = 0;
  double accuracy = 0.9;

  bool operator==(const VoteModel&) const = default;
};

struct SynthConfig {
  std::vector<TopicConfig> topics;
  std::vector<std::string> background_objects;
  std::vector<std::string> background_activities;
  double background_probability = 0.1;
  ConfidenceModel confidence;
  VoteModel votes;
  // The first rule in scope whose conditions hold sets the failure
  // probability; otherwise the topic's base_failure applies.
  std::vector<FailureRule> rules;
  std::uint64_t seed = 1;

  bool operator==(const SynthConfig&) const = default;
};

struct ManifestEntry {
  std::string id;
  std::string topic;
  int rule = -1;  // index into SynthConfig::rules, -1 when none fired
  double failure_probability = 0.0;
  Label latent_label = Label::unsatisfactory;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  SynthConfig config;
  std::string dataset_digest;
  std::vector<ManifestEntry> entries;

  const ManifestEntry& entry(const std::string& id) const;
  bool operator==(const Manifest&) const = default;
};

// Throws InvalidArgument on probabilities outside [0, 1], empty topics,
// duplicate topic names, or rules naming unknown features or topics.
void validate_config(const SynthConfig& config);

// Sorted union of every term the config can emit.
std::vector<std::string> vocabulary(const SynthConfig& config);
FeatureCatalog make_catalog(const SynthConfig& config);

// Pure function of the config (including its seed).
std::pair<Dataset, Manifest> generate(const SynthConfig& config);

bool rule_fires(const FailureRule& rule, const Instance& instance, const std::string& topic,
                const FeatureCatalog& catalog);

struct RuleRecovery {
  int rule = 0;
  std::string scope;
  std::vector<std::string> features;
  int cluster = -1;  // -1 for the generic model
  bool in_view = false;
  bool in_tree = false;
  bool in_top5 = false;
  bool recovered = false;
};

struct RecoveryScore {
  std::vector<RuleRecovery> rules;
  double purity = 0.0;  // instance-weighted majority-topic fraction
  std::optional<double> accuracy_gap;  // all clusters minus generic
  bool gap_positive = false;
  bool no_signal = false;

  bool passed() const;
};

// Throws DatasetMismatch when the report was not built from the manifest's
// dataset.
RecoveryScore evaluate_recovery(const PerformanceReport& report, const Manifest& manifest);

nlohmann::json config_to_json(const SynthConfig& config);
SynthConfig config_from_json(const nlohmann::json& doc);
SynthConfig load_config(const std::filesystem::path& path);

nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& doc);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

nlohmann::json recovery_to_json(const RecoveryScore& score);

}  // namespace synth
}  // namespace failscope
