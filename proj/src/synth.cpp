#include "failscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "failscope/error.hpp"
#include "failscope/rng.hpp"
#include "failscope/views.hpp"

namespace failscope::synth {

using nlohmann::json;

namespace {

constexpr int kCandidateCaptions = 10;
constexpr std::size_t kBestCaptionDetections = 3;

enum class TermKind { object, activity };

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(what + " must be in [0, 1]");
}

void check_term(const std::string& term) {
  if (term.empty() || term.find_first_of(";,\n\r\"") != std::string::npos) {
    throw InvalidArgument("invalid term '" + term + "'");
  }
}

std::map<std::string, TermKind> term_kinds(const SynthConfig& config) {
  std::map<std::string, TermKind> kinds;
  auto add = [&](const std::string& term, TermKind kind) {
    check_term(term);
    auto [it, inserted] = kinds.emplace(term, kind);
    if (!inserted && it->second != kind) {
      throw InvalidArgument("term '" + term + "' is both an object and an activity");
    }
  };
  for (const auto& t : config.topics) {
    for (const auto& o : t.objects) add(o, TermKind::object);
    for (const auto& a : t.activities) add(a, TermKind::activity);
  }
  for (const auto& o : config.background_objects) add(o, TermKind::object);
  for (const auto& a : config.background_activities) add(a, TermKind::activity);
  // Confusion-only terms count as objects.
  for (const auto& t : config.topics) {
    for (const auto& c : t.detector.confusion_terms) {
      check_term(c);
      kinds.emplace(c, TermKind::object);
    }
  }
  return kinds;
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void put_aggregates(Instance& inst, const std::string& prefix, std::span<const double> scores) {
  ConfidenceAggregates a;
  if (!scores.empty()) a = aggregate_confidences(scores);
  inst.features[prefix + "_avg"] = a.avg;
  inst.features[prefix + "_std"] = a.std;
  inst.features[prefix + "_max"] = a.max;
  inst.features[prefix + "_min"] = a.min;
}

// Precision is 1 with no detections, recall is 1 with nothing to detect.
double ratio_or_one(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

const char* op_text(CompareOp op) {
  switch (op) {
    case CompareOp::le: return "<=";
    case CompareOp::lt: return "<";
    case CompareOp::gt: return ">";
    case CompareOp::ge: return ">=";
    case CompareOp::eq: return "==";
    case CompareOp::ne: return "!=";
  }
  return "?";
}

CompareOp parse_op(const std::string& text) {
  for (CompareOp op : {CompareOp::le, CompareOp::lt, CompareOp::gt, CompareOp::ge, CompareOp::eq,
                       CompareOp::ne}) {
    if (text == op_text(op)) return op;
  }
  throw InvalidArgument("unknown comparison '" + text + "'");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + " byte " + std::to_string(e.byte), e.what());
  }
}

}  // namespace

bool Predicate::holds(double x) const {
  switch (op) {
    case CompareOp::le: return x <= value;
    case CompareOp::lt: return x < value;
    case CompareOp::gt: return x > value;
    case CompareOp::ge: return x >= value;
    case CompareOp::eq: return x == value;
    case CompareOp::ne: return x != value;
  }
  return false;
}

const ManifestEntry& Manifest::entry(const std::string& id) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), id,
                             [](const ManifestEntry& e, const std::string& k) { return e.id < k; });
  if (it == entries.end() || it->id != id) throw NotFound("no manifest entry for '" + id + "'");
  return *it;
}

std::vector<std::string> vocabulary(const SynthConfig& config) {
  std::vector<std::string> out;
  for (const auto& [term, kind] : term_kinds(config)) out.push_back(term);
  return out;
}

FeatureCatalog make_catalog(const SynthConfig& config) {
  std::vector<FeatureDescriptor> f;
  auto add = [&](std::string name, ViewKind v, DataSource s, Dtype d, std::string desc) {
    f.push_back({std::move(name), v, s, d, std::move(desc)});
  };
  using enum ViewKind;
  using enum DataSource;
  for (const auto& term : vocabulary(config)) {
    add(kCrowdTermPrefix + term, content, crowd, Dtype::binary, "crowd mentions " + term);
    add(kSystemTermPrefix + term, content, system, Dtype::binary, "detector reports " + term);
  }
  add("gt_count_objects", content, crowd, Dtype::count, "objects named by the crowd");
  add("gt_count_activities", content, crowd, Dtype::count, "activities named by the crowd");
  add("det_count_objects", content, system, Dtype::count, "objects reported by the detector");
  add("det_count_activities", content, system, Dtype::count, "activities reported by the detector");

  add(kDetectorPrecisionObjects, component, crowd, Dtype::continuous, "detector precision, objects");
  add(kDetectorRecallObjects, component, crowd, Dtype::continuous, "detector recall, objects");
  add(kDetectorPrecisionActivities, component, crowd, Dtype::continuous, "detector precision, activities");
  add(kDetectorRecallActivities, component, crowd, Dtype::continuous, "detector recall, activities");
  add(kLanguageErrors, component, crowd, Dtype::count, "candidate captions with language errors");
  add(kCommonsenseErrors, component, crowd, Dtype::count, "candidate captions with commonsense errors");
  add(kSatisfactoryTop10, component, crowd, Dtype::count, "satisfactory captions in the reranker top 10");

  for (const char* stage : {"vd_conf", "lm_conf", "cr_conf"}) {
    for (const char* agg : {"avg", "std", "max", "min"}) {
      add(std::string(stage) + "_" + agg, component, system, Dtype::continuous,
          std::string(agg) + " of " + stage + " scores");
    }
  }
  add("best_caption_vd_conf", component, system, Dtype::continuous,
      "mean detector confidence of the words in the best caption");
  add("best_caption_lm_loglik", component, system, Dtype::continuous,
      "language model log-likelihood of the best caption");
  return FeatureCatalog(std::move(f));
}

void validate_config(const SynthConfig& config) {
  if (config.topics.empty()) throw InvalidArgument("config has no topics");
  std::set<std::string> names;
  for (const auto& t : config.topics) {
    const std::string where = "topic '" + t.name + "'";
    if (t.name.empty() || t.name == "global") throw InvalidArgument("invalid topic name '" + t.name + "'");
    if (!names.insert(t.name).second) throw InvalidArgument("duplicate " + where);
    if (t.objects.empty() && t.activities.empty()) throw InvalidArgument(where + " has no terms");
    if (t.instances == 0) throw InvalidArgument(where + " has no instances");
    check_probability(t.term_probability, where + " term_probability");
    check_probability(t.base_failure, where + " base_failure");
    check_probability(t.detector.recall, where + " detector recall");
    check_probability(t.detector.precision, where + " detector precision");
    if (t.detector.precision == 0.0) throw InvalidArgument(where + " detector precision must be > 0");
  }
  check_probability(config.background_probability, "background_probability");
  const auto& c = config.confidence;
  check_probability(c.correct_mean, "confidence correct_mean");
  check_probability(c.false_mean, "confidence false_mean");
  if (!(c.correct_spread >= 0.0) || !(c.false_spread >= 0.0)) {
    throw InvalidArgument("confidence spreads must be >= 0");
  }
  if (config.votes.workers < 0) throw InvalidArgument("votes workers must be >= 0");
  check_probability(config.votes.accuracy, "votes accuracy");

  const FeatureCatalog catalog = make_catalog(config);
  for (std::size_t i = 0; i < config.rules.size(); ++i) {
    const auto& r = config.rules[i];
    const std::string where = "rule " + std::to_string(i);
    check_probability(r.failure_probability, where + " failure_probability");
    if (r.scope != "global" && !names.count(r.scope)) {
      throw InvalidArgument(where + " has unknown scope '" + r.scope + "'");
    }
    if (r.conditions.empty()) throw InvalidArgument(where + " has no conditions");
    for (const auto& p : r.conditions) {
      if (!catalog.contains(p.feature)) {
        throw InvalidArgument(where + " references unknown feature '" + p.feature + "'");
      }
    }
  }
}

bool rule_fires(const FailureRule& rule, const Instance& instance, const std::string& topic,
                const FeatureCatalog& catalog) {
  if (rule.scope != "global" && rule.scope != topic) return false;
  for (const auto& p : rule.conditions) {
    if (!p.holds(feature_value(instance, catalog.at(p.feature)))) return false;
  }
  return true;
}

std::pair<Dataset, Manifest> generate(const SynthConfig& config) {
  validate_config(config);
  const auto kinds = term_kinds(config);
  std::vector<std::string> vocab;
  for (const auto& [term, kind] : kinds) vocab.push_back(term);

  Dataset ds;
  ds.catalog = make_catalog(config);
  ds.provenance = "synthetic, seed " + std::to_string(config.seed);
  Manifest manifest;
  manifest.config = config;

  Rng rng(config.seed);
  const auto& conf = config.confidence;
  std::size_t counter = 0;
  for (const auto& topic : config.topics) {
    for (std::size_t n = 0; n < topic.instances; ++n) {
      Instance inst;
      char id[32];
      std::snprintf(id, sizeof id, "i%05zu", counter++);
      inst.id = id;

      // Crowd terms: topic terms, at least one, plus background.
      std::set<std::string> crowd;
      for (const auto& o : topic.objects) {
        if (rng.bernoulli(topic.term_probability)) crowd.insert(o);
      }
      for (const auto& a : topic.activities) {
        if (rng.bernoulli(topic.term_probability)) crowd.insert(a);
      }
      if (crowd.empty()) {
        const auto& pool = topic.objects.empty() ? topic.activities : topic.objects;
        crowd.insert(pool[rng.below(pool.size())]);
      }
      for (const auto& o : config.background_objects) {
        if (rng.bernoulli(config.background_probability)) crowd.insert(o);
      }
      for (const auto& a : config.background_activities) {
        if (rng.bernoulli(config.background_probability)) crowd.insert(a);
      }

      // Detections: each crowd term survives with `recall`; every true
      // detection brings (1 - p) / p false ones on average.
      std::set<std::string> correct;
      for (const auto& t : crowd) {
        if (rng.bernoulli(topic.detector.recall)) correct.insert(t);
      }
      const double fp_rate = (1.0 - topic.detector.precision) / topic.detector.precision;
      const double fp_whole = std::floor(fp_rate);
      std::size_t n_false = 0;
      for (std::size_t i = 0; i < correct.size(); ++i) {
        n_false += static_cast<std::size_t>(fp_whole) + (rng.bernoulli(fp_rate - fp_whole) ? 1 : 0);
      }
      std::vector<std::string> pool;
      const auto& source = topic.detector.confusion_terms.empty() ? vocab : topic.detector.confusion_terms;
      for (const auto& t : source) {
        if (!crowd.count(t)) pool.push_back(t);
      }
      std::sort(pool.begin(), pool.end());
      pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
      std::set<std::string> wrong;
      for (std::size_t i = 0; i < n_false && !pool.empty(); ++i) {
        std::size_t j = rng.below(pool.size());
        wrong.insert(pool[j]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
      }
      std::set<std::string> detected = correct;
      detected.insert(wrong.begin(), wrong.end());

      std::size_t crowd_obj = 0, crowd_act = 0, det_obj = 0, det_act = 0, tp_obj = 0, tp_act = 0;
      for (const auto& t : crowd) {
        inst.features[kCrowdTermPrefix + t] = 1.0;
        (kinds.at(t) == TermKind::object ? crowd_obj : crowd_act)++;
      }
      for (const auto& t : detected) {
        inst.features[kSystemTermPrefix + t] = 1.0;
        const bool obj = kinds.at(t) == TermKind::object;
        (obj ? det_obj : det_act)++;
        if (correct.count(t)) (obj ? tp_obj : tp_act)++;
      }
      inst.features["gt_count_objects"] = static_cast<double>(crowd_obj);
      inst.features["gt_count_activities"] = static_cast<double>(crowd_act);
      inst.features["det_count_objects"] = static_cast<double>(det_obj);
      inst.features["det_count_activities"] = static_cast<double>(det_act);
      const double prec_obj = ratio_or_one(tp_obj, det_obj);
      inst.features[kDetectorPrecisionObjects] = prec_obj;
      inst.features[kDetectorRecallObjects] = ratio_or_one(tp_obj, crowd_obj);
      inst.features[kDetectorPrecisionActivities] = ratio_or_one(tp_act, det_act);
      inst.features[kDetectorRecallActivities] = ratio_or_one(tp_act, crowd_act);

      std::vector<double> vd;
      for (const auto& t : detected) {
        vd.push_back(correct.count(t) ? clamp01(rng.normal(conf.correct_mean, conf.correct_spread))
                                      : clamp01(rng.normal(conf.false_mean, conf.false_spread)));
      }

      // Crowd judgments of the component outputs.
      const double quality = rng.uniform();
      const int sat_top10 = rng.binomial(kCandidateCaptions, quality);
      inst.features[kSatisfactoryTop10] = sat_top10;
      inst.features[kLanguageErrors] = rng.binomial(kCandidateCaptions, 0.1);
      inst.features[kCommonsenseErrors] = rng.binomial(kCandidateCaptions, 0.05 + 0.3 * (1.0 - prec_obj));

      std::vector<double> lm(kCandidateCaptions), cr(kCandidateCaptions);
      for (auto& s : lm) s = rng.normal(-8.0 - 6.0 * (1.0 - prec_obj), 1.5);
      for (auto& s : cr) s = clamp01(rng.normal(0.2 + 0.06 * sat_top10, 0.05));
      put_aggregates(inst, "vd_conf", vd);
      put_aggregates(inst, "lm_conf", lm);
      put_aggregates(inst, "cr_conf", cr);
      std::vector<double> top = vd;
      std::sort(top.begin(), top.end(), std::greater<>());
      top.resize(std::min(top.size(), kBestCaptionDetections));
      double best_vd = 0.0;
      for (double s : top) best_vd += s;
      inst.features["best_caption_vd_conf"] = top.empty() ? 0.0 : best_vd / static_cast<double>(top.size());
      inst.features["best_caption_lm_loglik"] = *std::max_element(lm.begin(), lm.end());

      inst.content_terms[DataSource::crowd] = {crowd.begin(), crowd.end()};
      inst.content_terms[DataSource::system] = {detected.begin(), detected.end()};

      ManifestEntry entry;
      entry.id = inst.id;
      entry.topic = topic.name;
      entry.failure_probability = topic.base_failure;
      for (std::size_t r = 0; r < config.rules.size(); ++r) {
        if (rule_fires(config.rules[r], inst, topic.name, ds.catalog)) {
          entry.rule = static_cast<int>(r);
          entry.failure_probability = config.rules[r].failure_probability;
          break;
        }
      }
      entry.latent_label =
          rng.bernoulli(entry.failure_probability) ? Label::unsatisfactory : Label::satisfactory;
      inst.label = entry.latent_label;
      if (config.votes.workers > 0) {
        std::vector<int> votes;
        const int truth = entry.latent_label == Label::satisfactory ? 1 : 0;
        for (int w = 0; w < config.votes.workers; ++w) {
          votes.push_back(rng.bernoulli(config.votes.accuracy) ? truth : 1 - truth);
        }
        inst.label = majority_label(votes);
        inst.votes = std::move(votes);
      }
      ds.instances.push_back(std::move(inst));
      manifest.entries.push_back(std::move(entry));
    }
  }
  std::sort(manifest.entries.begin(), manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  manifest.dataset_digest = dataset_digest(ds);
  return {std::move(ds), std::move(manifest)};
}

// --- Recovery ---------------------------------------------------------------

bool RecoveryScore::passed() const {
  if (no_signal || rules.empty()) return false;
  return std::all_of(rules.begin(), rules.end(), [](const RuleRecovery& r) { return r.recovered; });
}

RecoveryScore evaluate_recovery(const PerformanceReport& report, const Manifest& manifest) {
  if (report.dataset_digest != manifest.dataset_digest) {
    throw DatasetMismatch("report dataset " + report.dataset_digest + " does not match manifest dataset " +
                          manifest.dataset_digest);
  }
  RecoveryScore score;

  // Topic counts per cluster.
  std::map<int, std::map<std::string, std::size_t>> counts;
  for (const auto& [id, cluster] : report.assignment.assignment) {
    counts[cluster][manifest.entry(id).topic]++;
  }
  std::size_t majority_total = 0, total = 0;
  for (const auto& [cluster, by_topic] : counts) {
    std::size_t best = 0;
    for (const auto& [topic, n] : by_topic) {
      best = std::max(best, n);
      total += n;
    }
    majority_total += best;
  }
  score.purity = total == 0 ? 0.0 : static_cast<double>(majority_total) / static_cast<double>(total);

  const std::set<std::string> view(report.features.begin(), report.features.end());
  const auto& rules = manifest.config.rules;
  for (std::size_t r = 0; r < rules.size(); ++r) {
    RuleRecovery rec;
    rec.rule = static_cast<int>(r);
    rec.scope = rules[r].scope;
    for (const auto& p : rules[r].conditions) {
      if (std::find(rec.features.begin(), rec.features.end(), p.feature) == rec.features.end()) {
        rec.features.push_back(p.feature);
      }
    }
    const ModelBlock* block = &report.generic.model;
    if (rec.scope != "global") {
      std::size_t best = 0;
      for (const auto& [cluster, by_topic] : counts) {
        auto it = by_topic.find(rec.scope);
        if (it != by_topic.end() && it->second > best) {
          best = it->second;
          rec.cluster = cluster;
        }
      }
      block = rec.cluster >= 0 ? &report.cluster(rec.cluster).model : nullptr;
    }
    rec.in_view = std::all_of(rec.features.begin(), rec.features.end(),
                              [&](const std::string& f) { return view.count(f) > 0; });
    if (block != nullptr) {
      std::set<std::string> used;
      if (block->tree) used = block->tree->features_used();
      std::set<std::string> top5;
      for (std::size_t i = 0; i < block->ranking.entries.size() && i < 5; ++i) {
        top5.insert(block->ranking.entries[i].name);
      }
      rec.in_tree = std::all_of(rec.features.begin(), rec.features.end(),
                                [&](const std::string& f) { return used.count(f) > 0; });
      rec.in_top5 = std::all_of(rec.features.begin(), rec.features.end(),
                                [&](const std::string& f) { return top5.count(f) > 0; });
      rec.recovered = rec.in_view && std::all_of(rec.features.begin(), rec.features.end(),
                                                 [&](const std::string& f) {
                                                   return used.count(f) > 0 || top5.count(f) > 0;
                                                 });
    }
    score.rules.push_back(std::move(rec));
  }

  if (report.generic.model.cv && std::any_of(report.clusters.begin(), report.clusters.end(),
                                             [](const ClusterReport& c) { return c.model.cv.has_value(); })) {
    score.accuracy_gap = report.all_clusters_accuracy - report.generic.model.cv->mean_accuracy;
    score.gap_positive = *score.accuracy_gap > 0.0;
  }

  // Labels carry no signal when every instance had the same failure probability.
  score.no_signal = std::all_of(manifest.entries.begin(), manifest.entries.end(), [&](const ManifestEntry& e) {
    return e.failure_probability == manifest.entries.front().failure_probability;
  });
  return score;
}

// --- JSON -------------------------------------------------------------------

json config_to_json(const SynthConfig& config) {
  json topics = json::array();
  for (const auto& t : config.topics) {
    topics.push_back({{"name", t.name},
                      {"objects", t.objects},
                      {"activities", t.activities},
                      {"instances", t.instances},
                      {"term_probability", t.term_probability},
                      {"base_failure", t.base_failure},
                      {"detector",
                       {{"precision", t.detector.precision},
                        {"recall", t.detector.recall},
                        {"confusion_terms", t.detector.confusion_terms}}}});
  }
  json rules = json::array();
  for (const auto& r : config.rules) {
    json conds = json::array();
    for (const auto& p : r.conditions) {
      conds.push_back({{"feature", p.feature}, {"op", op_text(p.op)}, {"value", p.value}});
    }
    rules.push_back({{"scope", r.scope}, {"conditions", conds}, {"failure_probability", r.failure_probability}});
  }
  return {{"schema", "failscope.synth_config"},
          {"schema_version", kConfigSchemaVersion},
          {"seed", config.seed},
          {"topics", topics},
          {"background",
           {{"objects", config.background_objects},
            {"activities", config.background_activities},
            {"probability", config.background_probability}}},
          {"confidence",
           {{"correct_mean", config.confidence.correct_mean},
            {"correct_spread", config.confidence.correct_spread},
            {"false_mean", config.confidence.false_mean},
            {"false_spread", config.confidence.false_spread}}},
          {"votes", {{"workers", config.votes.workers}, {"accuracy", config.votes.accuracy}}},
          {"rules", rules}};
}

SynthConfig config_from_json(const json& doc) {
  try {
    if (doc.value("schema", "") != "failscope.synth_config") {
      throw ParseError("schema", "not a synth config document");
    }
    if (doc.value("schema_version", 0) != kConfigSchemaVersion) {
      throw ParseError("schema_version", "unsupported synth config version");
    }
    SynthConfig c;
    c.seed = doc.value("seed", c.seed);
    for (const auto& t : doc.at("topics")) {
      TopicConfig topic;
      topic.name = t.at("name").get<std::string>();
      topic.objects = t.value("objects", std::vector<std::string>{});
      topic.activities = t.value("activities", std::vector<std::string>{});
      topic.instances = t.value("instances", topic.instances);
      topic.term_probability = t.value("term_probability", topic.term_probability);
      topic.base_failure = t.value("base_failure", topic.base_failure);
      if (t.contains("detector")) {
        const auto& d = t.at("detector");
        topic.detector.precision = d.value("precision", 1.0);
        topic.detector.recall = d.value("recall", 1.0);
        topic.detector.confusion_terms = d.value("confusion_terms", std::vector<std::string>{});
      }
      c.topics.push_back(std::move(topic));
    }
    if (doc.contains("background")) {
      const auto& b = doc.at("background");
      c.background_objects = b.value("objects", std::vector<std::string>{});
      c.background_activities = b.value("activities", std::vector<std::string>{});
      c.background_probability = b.value("probability", c.background_probability);
    }
    if (doc.contains("confidence")) {
      const auto& m = doc.at("confidence");
      c.confidence.correct_mean = m.value("correct_mean", c.confidence.correct_mean);
      c.confidence.correct_spread = m.value("correct_spread", c.confidence.correct_spread);
      c.confidence.false_mean = m.value("false_mean", c.confidence.false_mean);
      c.confidence.false_spread = m.value("false_spread", c.confidence.false_spread);
    }
    if (doc.contains("votes")) {
      c.votes.workers = doc.at("votes").value("workers", 0);
      c.votes.accuracy = doc.at("votes").value("accuracy", c.votes.accuracy);
    }
    for (const auto& r : doc.value("rules", json::array())) {
      FailureRule rule;
      rule.scope = r.value("scope", std::string("global"));
      rule.failure_probability = r.at("failure_probability").get<double>();
      for (const auto& p : r.at("conditions")) {
        rule.conditions.push_back(
            {p.at("feature").get<std::string>(), parse_op(p.at("op").get<std::string>()), p.at("value").get<double>()});
      }
      c.rules.push_back(std::move(rule));
    }
    return c;
  } catch (const json::exception& e) {
    throw ParseError("synth config", e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError("synth config", e.what());
  }
}

SynthConfig load_config(const std::filesystem::path& path) {
  SynthConfig c = config_from_json(read_json_file(path));
  try {
    validate_config(c);
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), e.what());
  }
  return c;
}

json manifest_to_json(const Manifest& manifest) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"id", e.id},
                       {"topic", e.topic},
                       {"rule", e.rule},
                       {"failure_probability", e.failure_probability},
                       {"latent_label", to_string(e.latent_label)}});
  }
  return {{"schema", "failscope.manifest"},
          {"schema_version", kConfigSchemaVersion},
          {"dataset_digest", manifest.dataset_digest},
          {"config", config_to_json(manifest.config)},
          {"entries", entries}};
}

Manifest manifest_from_json(const json& doc) {
  try {
    if (doc.value("schema", "") != "failscope.manifest") throw ParseError("schema", "not a manifest document");
    Manifest m;
    m.dataset_digest = doc.at("dataset_digest").get<std::string>();
    m.config = config_from_json(doc.at("config"));
    for (const auto& e : doc.at("entries")) {
      m.entries.push_back({e.at("id").get<std::string>(), e.at("topic").get<std::string>(), e.at("rule").get<int>(),
                           e.at("failure_probability").get<double>(),
                           parse_label(e.at("latent_label").get<std::string>())});
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
    return m;
  } catch (const json::exception& e) {
    throw ParseError("manifest", e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError("manifest", e.what());
  }
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << manifest_to_json(manifest).dump(1) << "\n";
}

Manifest load_manifest(const std::filesystem::path& path) { return manifest_from_json(read_json_file(path)); }

json recovery_to_json(const RecoveryScore& score) {
  json rules = json::array();
  for (const auto& r : score.rules) {
    rules.push_back({{"rule", r.rule},
                     {"scope", r.scope},
                     {"features", r.features},
                     {"cluster", r.cluster >= 0 ? json(r.cluster) : json("generic")},
                     {"in_view", r.in_view},
                     {"in_tree", r.in_tree},
                     {"in_top5", r.in_top5},
                     {"recovered", r.recovered}});
  }
  return {{"rules", rules},
          {"purity", score.purity},
          {"accuracy_gap", score.accuracy_gap ? json(*score.accuracy_gap) : json(nullptr)},
          {"gap_positive", score.gap_positive},
          {"no_signal", score.no_signal},
          {"passed", score.passed()}};
}

}  // namespace failscope::synth
