#include "failscope/views.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include "failscope/error.hpp"
#include "failscope/rng.hpp"

namespace failscope {

using nlohmann::json;

std::string_view to_string(Highlight h) {
  switch (h) {
    case Highlight::good: return "good";
    case Highlight::bad: return "bad";
    case Highlight::neutral: return "neutral";
  }
  return "neutral";
}

Highlight parse_highlight(std::string_view text) {
  if (text == "good") return Highlight::good;
  if (text == "bad") return Highlight::bad;
  if (text == "neutral") return Highlight::neutral;
  throw InvalidArgument("unknown highlight '" + std::string(text) + "'");
}

Highlight classify_highlight(double rate, double good_threshold, double bad_threshold) {
  if (rate >= good_threshold) return Highlight::good;
  if (rate <= bad_threshold) return Highlight::bad;
  return Highlight::neutral;
}

const ClusterReport& PerformanceReport::cluster(int id) const {
  for (const auto& c : clusters) {
    if (c.id == id) return c;
  }
  throw NotFound("unknown cluster id " + std::to_string(id));
}

json spec_to_json(const ViewSpec& spec) {
  return {{"view_kind", to_string(spec.view_kind)},
          {"data_source", to_string(spec.data_source)},
          {"clustering_source", to_string(spec.clustering_source)},
          {"k", spec.k},
          {"merges", spec.merges},
          {"tree", params_to_json(spec.tree)},
          {"good_threshold", spec.good_threshold},
          {"bad_threshold", spec.bad_threshold},
          {"folds", spec.folds},
          {"top_terms", spec.top_terms}};
}

ViewSpec spec_from_json(const json& doc) {
  ViewSpec s;
  s.view_kind = parse_view_kind(doc.at("view_kind").get<std::string>());
  s.data_source = parse_data_source(doc.at("data_source").get<std::string>());
  s.clustering_source = parse_data_source(doc.at("clustering_source").get<std::string>());
  s.k = doc.at("k").get<std::size_t>();
  s.merges = doc.at("merges").get<std::vector<std::vector<int>>>();
  s.tree = params_from_json(doc.at("tree"));
  s.good_threshold = doc.at("good_threshold").get<double>();
  s.bad_threshold = doc.at("bad_threshold").get<double>();
  s.folds = doc.at("folds").get<int>();
  s.top_terms = doc.at("top_terms").get<std::size_t>();
  return s;
}

std::string config_hash(const std::string& dataset_digest, const ViewSpec& spec) {
  std::uint64_t h = fnv1a(dataset_digest);
  h = fnv1a("|", h);
  h = fnv1a(spec_to_json(spec).dump(), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& body) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

constexpr std::uint64_t kGenericSeedTag = 0x67656e65726963ULL;  // "generic"

ModelBlock build_model(const FeatureMatrix& matrix, std::span<const std::size_t> rows,
                       const ViewSpec& spec, std::uint64_t cv_seed) {
  ModelBlock block;
  block.ranking = rank_features(matrix, rows);
  std::size_t n_sat = 0;
  for (auto r : rows) n_sat += matrix.labels[r] == Label::satisfactory ? 1 : 0;
  const std::size_t min_size = 2 * spec.tree.min_samples_leaf;
  if (rows.size() < min_size) {
    block.skip_reason = "size " + std::to_string(rows.size()) + " below 2 x min_samples_leaf (" +
                        std::to_string(min_size) + ")";
  } else if (rows.size() < static_cast<std::size_t>(spec.folds)) {
    block.skip_reason = "size " + std::to_string(rows.size()) + " below fold count " +
                        std::to_string(spec.folds);
  } else if (n_sat == 0 || n_sat == rows.size()) {
    block.skip_reason = "single-class instance set";
  } else {
    block.tree = train(matrix, rows, spec.tree);
    TreeParams cv_params = spec.tree;
    cv_params.seed = cv_seed;
    block.cv = cross_validate(matrix, rows, cv_params, spec.folds);
  }
  return block;
}

bool same_model_inputs(const PerformanceReport& base, const std::vector<std::string>& features,
                       const ViewSpec& spec) {
  return base.features == features && base.spec.tree == spec.tree && base.spec.folds == spec.folds &&
         base.spec.view_kind == spec.view_kind && base.spec.data_source == spec.data_source;
}

std::vector<std::string> view_features(const Dataset& dataset, const ViewSpec& spec) {
  std::vector<std::string> all = dataset.catalog.select(spec.view_kind, spec.data_source);
  for (const auto& name : spec.tree.excluded_features) {
    if (std::find(all.begin(), all.end(), name) == all.end()) {
      throw UnknownFeatureError("excluded feature '" + name + "' is not part of the " +
                                std::string(to_string(spec.view_kind)) + "/" +
                                std::string(to_string(spec.data_source)) + " view");
    }
  }
  std::vector<std::string> kept;
  for (auto& name : all) {
    if (!spec.tree.excluded_features.contains(name)) kept.push_back(std::move(name));
  }
  if (kept.empty()) throw InvalidArgument("view has no features");
  return kept;
}

PerformanceReport build_impl(const Dataset& input, const ViewSpec& spec, const BuildOptions& options,
                             const PerformanceReport* base) {
  if (spec.k < 1) throw InvalidArgument("k must be >= 1");
  if (spec.folds < 2) throw InvalidArgument("folds must be >= 2");
  ValidationReport vr = validate(input);
  if (!vr.clean()) {
    const auto& v = vr.violations.front();
    throw InvalidArgument("dataset does not validate (" + std::to_string(vr.violations.size()) +
                          " violations; first: " + std::string(to_string(v.kind)) + " at '" +
                          v.instance_id + "': " + v.message + ")");
  }
  const Dataset dataset = canonicalize(input);
  const std::vector<std::string> features = view_features(dataset, spec);
  const FeatureMatrix matrix = FeatureMatrix::build(dataset, features);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t r = 0; r < matrix.rows(); ++r) row_of.emplace(matrix.ids[r], r);

  PerformanceReport report;
  report.spec = spec;
  report.dataset_digest = dataset_digest(dataset);
  report.provenance = dataset.provenance;
  report.dataset_size = dataset.instances.size();
  report.features = features;
  report.config_hash = config_hash(report.dataset_digest, spec);

  const TermDocumentMatrix terms = build_term_matrix(dataset, spec.clustering_source);
  if (base != nullptr && base->spec.clustering_source == spec.clustering_source &&
      base->dendrogram.leaves == terms.ids) {
    report.dendrogram = base->dendrogram;
  } else {
    report.dendrogram = agglomerate(terms, options.jobs);
  }

  ClusterAssignment assignment = cut(report.dendrogram, spec.k);
  for (const auto& group : spec.merges) {
    assignment = merge_clusters(assignment, std::set<int>(group.begin(), group.end()));
  }
  assignment.labels.clear();

  const bool reuse_models = base != nullptr && same_model_inputs(*base, features, spec);
  const std::vector<int> ids = assignment.cluster_ids();
  std::vector<std::vector<std::size_t>> cluster_rows(ids.size());
  std::vector<std::optional<ModelBlock>> blocks(ids.size() + 1);
  std::vector<std::size_t> pending;

  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<std::string> members = assignment.members(ids[i]);
    for (const auto& id : members) cluster_rows[i].push_back(row_of.at(id));
    std::sort(cluster_rows[i].begin(), cluster_rows[i].end());
    if (reuse_models && base->assignment.contains(ids[i]) &&
        base->assignment.members(ids[i]) == members) {
      blocks[i] = base->cluster(ids[i]).model;
    } else {
      pending.push_back(i);
    }
  }
  const std::size_t generic_slot = ids.size();
  const std::vector<std::size_t> every_row = all_rows(matrix.rows());
  if (reuse_models) {
    blocks[generic_slot] = base->generic.model;
  } else {
    pending.push_back(generic_slot);
  }

  parallel_for(pending.size(), options.jobs, [&](std::size_t p) {
    const std::size_t slot = pending[p];
    if (slot == generic_slot) {
      blocks[slot] = build_model(matrix, every_row, spec, derive_seed(spec.tree.seed, kGenericSeedTag));
    } else {
      blocks[slot] = build_model(matrix, cluster_rows[slot], spec,
                                 derive_seed(spec.tree.seed, static_cast<std::uint64_t>(ids[slot]) + 1));
    }
  });

  auto summarize = [&](std::span<const std::size_t> rows, double& rate, std::optional<double>& agreement) {
    std::vector<Label> labels;
    labels.reserve(rows.size());
    bool all_votes = true;
    double agree = 0.0;
    for (auto r : rows) {
      labels.push_back(matrix.labels[r]);
      const auto& votes = dataset.instances[r].votes;
      if (votes && !votes->empty()) {
        agree += agreement_with_majority(*votes);
      } else {
        all_votes = false;
      }
    }
    rate = satisfaction_rate(labels);
    agreement.reset();
    if (all_votes) agreement = agree / static_cast<double>(rows.size());
  };

  report.generic.size = matrix.rows();
  summarize(every_row, report.generic.satisfaction_rate, report.generic.human_agreement);
  report.generic.model = std::move(*blocks[generic_slot]);

  double weighted = 0.0;
  std::size_t trained = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ClusterReport c;
    c.id = ids[i];
    c.size = cluster_rows[i].size();
    c.top_terms = top_terms(assignment, terms, ids[i], spec.top_terms);
    c.label = c.top_terms.empty() ? "cluster " + std::to_string(ids[i]) : c.top_terms.front();
    summarize(cluster_rows[i], c.satisfaction_rate, c.human_agreement);
    c.highlight = classify_highlight(c.satisfaction_rate, spec.good_threshold, spec.bad_threshold);
    c.model = std::move(*blocks[i]);
    if (c.model.cv) {
      weighted += c.model.cv->mean_accuracy * static_cast<double>(c.size);
      trained += c.size;
    }
    assignment.labels[c.id] = c.label;
    report.clusters.push_back(std::move(c));
  }
  if (trained == 0) throw InvalidArgument("all clusters are ineligible for tree training");
  report.all_clusters_accuracy = weighted / static_cast<double>(trained);
  report.assignment = std::move(assignment);
  return report;
}

}  // namespace

PerformanceReport build_view(const Dataset& dataset, const ViewSpec& spec, const BuildOptions& options) {
  return build_impl(dataset, spec, options, nullptr);
}

ViewSpec apply_delta(const ViewSpec& spec, const WhatIfDelta& delta) {
  ViewSpec out = spec;
  out.tree.excluded_features.insert(delta.excluded_features.begin(), delta.excluded_features.end());
  if (delta.k && *delta.k != spec.k) {
    out.k = *delta.k;
    out.merges.clear();
  }
  for (const auto& group : delta.merges) {
    if (group.empty()) throw InvalidArgument("what-if merge group is empty");
    // Group order carries no meaning; sorting keeps equal deltas on one hash.
    std::vector<int> sorted = group;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    out.merges.push_back(std::move(sorted));
  }
  return out;
}

PerformanceReport what_if(const PerformanceReport& report, const Dataset& dataset,
                          const WhatIfDelta& delta, const BuildOptions& options) {
  if (dataset_digest(dataset) != report.dataset_digest) {
    throw DatasetMismatch("dataset digest differs from the report's");
  }
  const std::vector<std::string> view = dataset.catalog.select(report.spec.view_kind, report.spec.data_source);
  for (const auto& name : delta.excluded_features) {
    if (std::find(view.begin(), view.end(), name) == view.end()) {
      throw UnknownFeatureError("unknown feature '" + name + "' in what-if delta");
    }
  }
  if (!delta.k || *delta.k == report.spec.k) {
    for (const auto& group : delta.merges) {
      for (int id : group) {
        if (!report.assignment.contains(id)) {
          throw NotFound("unknown cluster id " + std::to_string(id) + " in what-if delta");
        }
      }
    }
  }
  if (delta.empty()) return report;
  return build_impl(dataset, apply_delta(report.spec, delta), options, &report);
}

ViewComparison compare_views(const PerformanceReport& a, const PerformanceReport& b) {
  if (a.dataset_digest != b.dataset_digest) {
    throw DatasetMismatch("reports were built from different datasets (" + a.dataset_digest + " vs " +
                          b.dataset_digest + ")");
  }
  ViewComparison cmp;
  cmp.config_hash_a = a.config_hash;
  cmp.config_hash_b = b.config_hash;
  auto accuracy = [](const ClusterReport& c) -> std::optional<double> {
    if (!c.model.cv) return std::nullopt;
    return c.model.cv->mean_accuracy;
  };
  for (const auto& ca : a.clusters) {
    std::set<std::string> ta(ca.top_terms.begin(), ca.top_terms.end());
    const ClusterReport* best = nullptr;
    double best_overlap = -1.0;
    for (const auto& cb : b.clusters) {
      std::set<std::string> tb(cb.top_terms.begin(), cb.top_terms.end());
      std::size_t inter = 0;
      for (const auto& t : ta) inter += tb.contains(t) ? 1 : 0;
      std::size_t uni = ta.size() + tb.size() - inter;
      double overlap = uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
      if (overlap > best_overlap || (overlap == best_overlap && cb.size > best->size)) {
        best = &cb;
        best_overlap = overlap;
      }
    }
    if (best == nullptr) continue;
    ComparisonRow row;
    row.cluster_a = ca.id;
    row.cluster_b = best->id;
    row.label_a = ca.label;
    row.label_b = best->label;
    row.term_overlap = best_overlap;
    row.rate_a = ca.satisfaction_rate;
    row.rate_b = best->satisfaction_rate;
    row.rate_delta = ca.satisfaction_rate - best->satisfaction_rate;
    row.accuracy_a = accuracy(ca);
    row.accuracy_b = accuracy(*best);
    if (row.accuracy_a && row.accuracy_b) row.accuracy_delta = *row.accuracy_a - *row.accuracy_b;
    cmp.rows.push_back(std::move(row));
  }
  if (a.generic.model.cv && b.generic.model.cv) {
    cmp.generic_accuracy_delta = a.generic.model.cv->mean_accuracy - b.generic.model.cv->mean_accuracy;
  }
  cmp.all_clusters_accuracy_delta = a.all_clusters_accuracy - b.all_clusters_accuracy;
  return cmp;
}

// --- JSON ------------------------------------------------------------------------------

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json model_to_json(const ModelBlock& m) {
  json out{{"skipped", m.skipped()}, {"skip_reason", m.skip_reason}};
  out["tree"] = m.tree ? tree_to_json(*m.tree) : json(nullptr);
  out["rules"] = m.tree ? rules_to_json(extract_rules(*m.tree)) : json::array();
  out["cv"] = m.cv ? cv_to_json(*m.cv) : json(nullptr);
  out["ranking"] = ranking_to_json(m.ranking);
  return out;
}

ModelBlock model_from_json(const json& doc) {
  ModelBlock m;
  m.skip_reason = doc.at("skip_reason").get<std::string>();
  if (!doc.at("tree").is_null()) m.tree = tree_from_json(doc.at("tree"));
  if (!doc.at("cv").is_null()) m.cv = cv_from_json(doc.at("cv"));
  m.ranking = ranking_from_json(doc.at("ranking"));
  return m;
}

std::optional<double> optional_from(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

json ranking_to_json(const FeatureRanking& r) {
  json entries = json::array();
  for (const auto& e : r.entries) entries.push_back({{"name", e.name}, {"mi_bits", e.mi_bits}});
  return {{"degenerate", r.degenerate}, {"entries", std::move(entries)}};
}

FeatureRanking ranking_from_json(const json& doc) {
  FeatureRanking r;
  r.degenerate = doc.at("degenerate").get<bool>();
  for (const auto& e : doc.at("entries")) {
    r.entries.push_back({e.at("name").get<std::string>(), e.at("mi_bits").get<double>()});
  }
  return r;
}

json report_to_json(const PerformanceReport& report) {
  json clusters = json::array();
  for (const auto& c : report.clusters) {
    clusters.push_back({{"id", c.id},
                        {"label", c.label},
                        {"size", c.size},
                        {"top_terms", c.top_terms},
                        {"satisfaction_rate", c.satisfaction_rate},
                        {"human_agreement", optional_number(c.human_agreement)},
                        {"highlight", to_string(c.highlight)},
                        {"cv_accuracy", c.model.cv ? json(c.model.cv->mean_accuracy) : json(nullptr)},
                        {"model", model_to_json(c.model)}});
  }
  const auto& g = report.generic;
  return {{"schema", "failscope.report"},
          {"schema_version", kReportSchemaVersion},
          {"config_hash", report.config_hash},
          {"dataset",
           {{"digest", report.dataset_digest},
            {"provenance", report.provenance},
            {"size", report.dataset_size}}},
          {"spec", spec_to_json(report.spec)},
          {"features", report.features},
          {"aggregation", "instance-weighted mean of per-cluster cv accuracy over trained clusters"},
          {"generic",
           {{"size", g.size},
            {"satisfaction_rate", g.satisfaction_rate},
            {"human_agreement", optional_number(g.human_agreement)},
            {"cv_accuracy", g.model.cv ? json(g.model.cv->mean_accuracy) : json(nullptr)},
            {"model", model_to_json(g.model)}}},
          {"clusters", std::move(clusters)},
          {"all_clusters_accuracy", report.all_clusters_accuracy},
          {"dendrogram", dendrogram_to_json(report.dendrogram)},
          {"assignment", assignment_to_json(report.assignment)}};
}

PerformanceReport report_from_json(const json& doc) {
  try {
    if (doc.at("schema") != "failscope.report") throw ParseError("schema", "not a report document");
    if (doc.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw ParseError("schema_version", "unsupported report schema version");
    }
    PerformanceReport r;
    r.config_hash = doc.at("config_hash").get<std::string>();
    r.dataset_digest = doc.at("dataset").at("digest").get<std::string>();
    r.provenance = doc.at("dataset").at("provenance").get<std::string>();
    r.dataset_size = doc.at("dataset").at("size").get<std::size_t>();
    r.spec = spec_from_json(doc.at("spec"));
    r.features = doc.at("features").get<std::vector<std::string>>();
    const json& g = doc.at("generic");
    r.generic.size = g.at("size").get<std::size_t>();
    r.generic.satisfaction_rate = g.at("satisfaction_rate").get<double>();
    r.generic.human_agreement = optional_from(g.at("human_agreement"));
    r.generic.model = model_from_json(g.at("model"));
    for (const auto& c : doc.at("clusters")) {
      ClusterReport cr;
      cr.id = c.at("id").get<int>();
      cr.label = c.at("label").get<std::string>();
      cr.size = c.at("size").get<std::size_t>();
      cr.top_terms = c.at("top_terms").get<std::vector<std::string>>();
      cr.satisfaction_rate = c.at("satisfaction_rate").get<double>();
      cr.human_agreement = optional_from(c.at("human_agreement"));
      cr.highlight = parse_highlight(c.at("highlight").get<std::string>());
      cr.model = model_from_json(c.at("model"));
      r.clusters.push_back(std::move(cr));
    }
    r.all_clusters_accuracy = doc.at("all_clusters_accuracy").get<double>();
    r.dendrogram = dendrogram_from_json(doc.at("dendrogram"));
    r.assignment = assignment_from_json(doc.at("assignment"));
    return r;
  } catch (const json::exception& e) {
    throw ParseError("report", e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError("report", e.what());
  }
}

std::string serialize_report(const PerformanceReport& report) {
  return report_to_json(report).dump(1) + "\n";
}

PerformanceReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  json doc;
  try {
    doc = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + " byte " + std::to_string(e.byte), e.what());
  }
  return report_from_json(doc);
}

json comparison_to_json(const ViewComparison& comparison) {
  json rows = json::array();
  for (const auto& r : comparison.rows) {
    rows.push_back({{"cluster_a", r.cluster_a},
                    {"cluster_b", r.cluster_b},
                    {"label_a", r.label_a},
                    {"label_b", r.label_b},
                    {"term_overlap", r.term_overlap},
                    {"rate_a", r.rate_a},
                    {"rate_b", r.rate_b},
                    {"rate_delta", r.rate_delta},
                    {"accuracy_a", optional_number(r.accuracy_a)},
                    {"accuracy_b", optional_number(r.accuracy_b)},
                    {"accuracy_delta", optional_number(r.accuracy_delta)}});
  }
  return {{"schema", "failscope.comparison"},
          {"schema_version", kReportSchemaVersion},
          {"config_hash_a", comparison.config_hash_a},
          {"config_hash_b", comparison.config_hash_b},
          {"generic_accuracy_delta", comparison.generic_accuracy_delta},
          {"all_clusters_accuracy_delta", comparison.all_clusters_accuracy_delta},
          {"rows", std::move(rows)}};
}

}  // namespace failscope
