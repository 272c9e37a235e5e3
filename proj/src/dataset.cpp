#include "failscope/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "failscope/error.hpp"
#include "failscope/rng.hpp"

namespace failscope {

using nlohmann::json;

std::string_view to_string(ViewKind kind) {
  return kind == ViewKind::content ? "content" : "component";
}
std::string_view to_string(DataSource source) {
  return source == DataSource::crowd ? "crowd" : "system";
}
std::string_view to_string(Dtype dtype) {
  switch (dtype) {
    case Dtype::binary: return "binary";
    case Dtype::count: return "count";
    case Dtype::continuous: return "continuous";
  }
  return "binary";
}
std::string_view to_string(Label label) {
  return label == Label::satisfactory ? "satisfactory" : "unsatisfactory";
}

ViewKind parse_view_kind(std::string_view text) {
  if (text == "content") return ViewKind::content;
  if (text == "component") return ViewKind::component;
  throw InvalidArgument("unknown view kind '" + std::string(text) + "'");
}
DataSource parse_data_source(std::string_view text) {
  if (text == "crowd") return DataSource::crowd;
  if (text == "system") return DataSource::system;
  throw InvalidArgument("unknown data source '" + std::string(text) + "'");
}
Dtype parse_dtype(std::string_view text) {
  if (text == "binary") return Dtype::binary;
  if (text == "count") return Dtype::count;
  if (text == "continuous") return Dtype::continuous;
  throw InvalidArgument("unknown dtype '" + std::string(text) + "'");
}
Label parse_label(std::string_view text) {
  if (text == "satisfactory") return Label::satisfactory;
  if (text == "unsatisfactory") return Label::unsatisfactory;
  throw InvalidArgument("unknown label '" + std::string(text) + "'");
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::duplicate_id: return "duplicate_id";
    case ViolationKind::unknown_feature: return "unknown_feature";
    case ViolationKind::dtype_violation: return "dtype_violation";
    case ViolationKind::missing_value: return "missing_value";
    case ViolationKind::label_vote_mismatch: return "label_vote_mismatch";
    case ViolationKind::empty_votes: return "empty_votes";
  }
  return "unknown";
}

// --- FeatureCatalog ---------------------------------------------------------

FeatureCatalog::FeatureCatalog(std::vector<FeatureDescriptor> features)
    : features_(std::move(features)) {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (!index_.emplace(features_[i].name, i).second) {
      throw InvalidArgument("duplicate feature name '" + features_[i].name + "'");
    }
  }
}

const FeatureDescriptor* FeatureCatalog::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &features_[it->second];
}

const FeatureDescriptor& FeatureCatalog::at(std::string_view name) const {
  const FeatureDescriptor* f = find(name);
  if (f == nullptr) throw UnknownFeatureError("unknown feature '" + std::string(name) + "'");
  return *f;
}

std::vector<std::string> FeatureCatalog::select(ViewKind kind, DataSource source) const {
  std::vector<std::string> names;
  for (const auto& f : features_) {
    if (f.view_kind == kind && f.data_source == source) names.push_back(f.name);
  }
  std::sort(names.begin(), names.end());
  return names;
}

double feature_value(const Instance& instance, const FeatureDescriptor& feature) {
  auto it = instance.features.find(feature.name);
  if (it != instance.features.end()) return it->second;
  if (feature.dtype == Dtype::binary) return 0.0;
  throw InvalidArgument("instance '" + instance.id + "' has no value for " +
                        std::string(to_string(feature.dtype)) + " feature '" +
                        feature.name + "'");
}

// --- dtype checks -------------------------------------------------------------

namespace {

// Empty when `value` is legal for `dtype`, otherwise the reason.
std::string dtype_problem(Dtype dtype, double value) {
  if (!std::isfinite(value)) return "value is not finite";
  switch (dtype) {
    case Dtype::binary:
      if (value != 0.0 && value != 1.0) return "binary feature must be 0 or 1";
      break;
    case Dtype::count:
      if (value < 0.0 || std::floor(value) != value) {
        return "count feature must be a non-negative integer";
      }
      break;
    case Dtype::continuous: break;
  }
  return {};
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void check_value(const FeatureCatalog& catalog, const std::string& name, double value,
                 const std::string& locus) {
  const FeatureDescriptor* f = catalog.find(name);
  if (f == nullptr) throw UnknownFeatureError(locus + ": unknown feature '" + name + "'");
  std::string problem = dtype_problem(f->dtype, value);
  if (!problem.empty()) {
    throw DtypeError(locus + ": " + problem + " (feature '" + name + "', value " +
                     format_number(value) + ")");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json_file(const std::filesystem::path& path) {
  std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + " byte " + std::to_string(e.byte), e.what());
  }
}

template <typename T>
T require(const json& obj, const char* key, const std::string& locus) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError(locus, std::string("missing field '") + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(locus + "." + key, e.what());
  }
}

template <typename F>
auto with_locus(const std::string& locus, F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw ParseError(locus, e.what());
  }
}

}  // namespace

// --- JSON -----------------------------------------------------------------------

FeatureCatalog catalog_from_json(const json& doc, const std::string& locus) {
  if (!doc.is_array()) throw ParseError(locus, "catalog must be a list");
  std::vector<FeatureDescriptor> features;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    std::string at = locus + "[" + std::to_string(i) + "]";
    const json& d = doc[i];
    FeatureDescriptor f;
    f.name = require<std::string>(d, "name", at);
    f.view_kind = with_locus(at, [&] { return parse_view_kind(require<std::string>(d, "view_kind", at)); });
    f.data_source = with_locus(at, [&] { return parse_data_source(require<std::string>(d, "data_source", at)); });
    f.dtype = with_locus(at, [&] { return parse_dtype(require<std::string>(d, "dtype", at)); });
    if (d.contains("description")) f.description = require<std::string>(d, "description", at);
    features.push_back(std::move(f));
  }
  return with_locus(locus, [&] { return FeatureCatalog(std::move(features)); });
}

json catalog_to_json(const FeatureCatalog& catalog) {
  json out = json::array();
  for (const auto& f : catalog.features()) {
    out.push_back({{"name", f.name},
                   {"view_kind", to_string(f.view_kind)},
                   {"data_source", to_string(f.data_source)},
                   {"dtype", to_string(f.dtype)},
                   {"description", f.description}});
  }
  return out;
}

Dataset dataset_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("$", "dataset must be an object");
  Dataset d;
  if (!doc.contains("catalog")) throw ParseError("$", "missing field 'catalog'");
  d.catalog = catalog_from_json(doc["catalog"], "catalog");
  if (doc.contains("provenance")) d.provenance = require<std::string>(doc, "provenance", "$");
  if (!doc.contains("instances") || !doc["instances"].is_array()) {
    throw ParseError("$", "missing list 'instances'");
  }
  const json& instances = doc["instances"];
  d.instances.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    std::string at = "instances[" + std::to_string(i) + "]";
    const json& r = instances[i];
    Instance inst;
    inst.id = require<std::string>(r, "id", at);
    inst.label = with_locus(at, [&] { return parse_label(require<std::string>(r, "label", at)); });
    if (r.contains("features")) {
      if (!r["features"].is_object()) throw ParseError(at + ".features", "must be an object");
      for (const auto& [name, value] : r["features"].items()) {
        if (!value.is_number()) throw ParseError(at + ".features." + name, "value must be a number");
        double v = value.get<double>();
        check_value(d.catalog, name, v, at + ".features." + name);
        inst.features.emplace(name, v);
      }
    }
    if (r.contains("votes")) {
      std::vector<int> votes;
      const json& vs = r["votes"];
      if (!vs.is_array()) throw ParseError(at + ".votes", "must be a list");
      for (const auto& v : vs) {
        if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
          throw ParseError(at + ".votes", "votes must be 0 or 1");
        }
        votes.push_back(v.get<int>());
      }
      inst.votes = std::move(votes);
    }
    if (r.contains("content_terms")) {
      const json& ct = r["content_terms"];
      if (!ct.is_object()) throw ParseError(at + ".content_terms", "must be an object");
      for (const auto& [source, terms] : ct.items()) {
        DataSource s = with_locus(at + ".content_terms", [&] { return parse_data_source(source); });
        inst.content_terms[s] = require<std::vector<std::string>>(ct, source.c_str(), at + ".content_terms");
      }
    }
    d.instances.push_back(std::move(inst));
  }
  return d;
}

json dataset_to_json(const Dataset& dataset) {
  json instances = json::array();
  for (const auto& inst : dataset.instances) {
    json r;
    r["id"] = inst.id;
    r["label"] = to_string(inst.label);
    json features = json::object();
    for (const auto& [name, value] : inst.features) features[name] = value;
    r["features"] = std::move(features);
    if (inst.votes) r["votes"] = *inst.votes;
    if (!inst.content_terms.empty()) {
      json ct = json::object();
      for (const auto& [source, terms] : inst.content_terms) ct[std::string(to_string(source))] = terms;
      r["content_terms"] = std::move(ct);
    }
    instances.push_back(std::move(r));
  }
  return {{"schema", "failscope.dataset"},
          {"schema_version", 1},
          {"provenance", dataset.provenance},
          {"catalog", catalog_to_json(dataset.catalog)},
          {"instances", std::move(instances)}};
}

FeatureCatalog load_catalog(const std::filesystem::path& path) {
  json doc = parse_json_file(path);
  if (doc.is_object() && doc.contains("catalog")) return catalog_from_json(doc["catalog"], "catalog");
  return catalog_from_json(doc, "catalog");
}

DatasetFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::tabular : DatasetFormat::structured;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::optional<std::filesystem::path>& catalog_path) {
  if (format == DatasetFormat::structured) {
    json doc = parse_json_file(path);
    try {
      return dataset_from_json(doc);
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ": " + e.locus(), e.what());
    }
  }
  if (!catalog_path) throw InvalidArgument("tabular dataset requires a sidecar catalog file");
  FeatureCatalog catalog = load_catalog(*catalog_path);
  Dataset d = parse_tabular(read_file(path), catalog);
  d.provenance = path.filename().string();
  return d;
}

// --- Tabular --------------------------------------------------------------------

namespace {

constexpr std::string_view kVotesColumn = "votes";
constexpr std::string_view kCrowdTermsColumn = "terms.crowd";
constexpr std::string_view kSystemTermsColumn = "terms.system";

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(line_no), "unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::vector<std::string> split_list(std::string_view cell) {
  std::vector<std::string> out;
  if (cell.empty()) return out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = cell.find(';', start);
    out.emplace_back(cell.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.push_back(';');
    out += items[i];
  }
  return out;
}

}  // namespace

Dataset parse_tabular(std::string_view text, const FeatureCatalog& catalog) {
  Dataset d;
  d.catalog = catalog;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  std::size_t start = 0;
  int id_col = -1;
  int label_col = -1;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::string locus = "line " + std::to_string(line_no);
    auto fields = split_csv_line(line, line_no);
    if (header.empty()) {
      header = std::move(fields);
      for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& name = header[c];
        if (name == "id") id_col = static_cast<int>(c);
        else if (name == "label") label_col = static_cast<int>(c);
        else if (name != kVotesColumn && name != kCrowdTermsColumn && name != kSystemTermsColumn &&
                 !catalog.contains(name)) {
          throw UnknownFeatureError(locus + ": unknown feature '" + name + "'");
        }
      }
      if (id_col < 0 || label_col < 0) throw ParseError(locus, "header must contain 'id' and 'label'");
      continue;
    }
    if (fields.size() != header.size()) {
      throw ParseError(locus, "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    Instance inst;
    for (std::size_t c = 0; c < header.size(); ++c) {
      const std::string& col = header[c];
      const std::string& cell = fields[c];
      if (static_cast<int>(c) == id_col) {
        inst.id = cell;
      } else if (static_cast<int>(c) == label_col) {
        inst.label = with_locus(locus, [&] { return parse_label(cell); });
      } else if (col == kVotesColumn) {
        if (cell.empty()) continue;
        std::vector<int> votes;
        for (const auto& v : split_list(cell)) {
          if (v != "0" && v != "1") throw ParseError(locus, "votes must be 0 or 1");
          votes.push_back(v == "1" ? 1 : 0);
        }
        inst.votes = std::move(votes);
      } else if (col == kCrowdTermsColumn || col == kSystemTermsColumn) {
        if (cell.empty()) continue;
        inst.content_terms[col == kCrowdTermsColumn ? DataSource::crowd : DataSource::system] = split_list(cell);
      } else {
        if (cell.empty()) continue;
        double v = 0.0;
        auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
          throw ParseError(locus + " column '" + col + "'", "not a number: '" + cell + "'");
        }
        check_value(catalog, col, v, locus + " column '" + col + "'");
        inst.features.emplace(col, v);
      }
    }
    d.instances.push_back(std::move(inst));
  }
  if (header.empty()) throw ParseError("line 1", "missing header row");
  return d;
}

std::string write_tabular(const Dataset& dataset) {
  Dataset sorted = canonicalize(dataset);
  bool any_votes = false;
  bool any_crowd = false;
  bool any_system = false;
  for (const auto& inst : sorted.instances) {
    any_votes |= inst.votes.has_value();
    any_crowd |= inst.content_terms.contains(DataSource::crowd);
    any_system |= inst.content_terms.contains(DataSource::system);
  }
  std::ostringstream out;
  out << "id,label";
  for (const auto& f : sorted.catalog.features()) out << ',' << csv_escape(f.name);
  if (any_votes) out << ',' << kVotesColumn;
  if (any_crowd) out << ',' << kCrowdTermsColumn;
  if (any_system) out << ',' << kSystemTermsColumn;
  out << '\n';
  for (const auto& inst : sorted.instances) {
    out << csv_escape(inst.id) << ',' << to_string(inst.label);
    for (const auto& f : sorted.catalog.features()) {
      out << ',';
      auto it = inst.features.find(f.name);
      if (it != inst.features.end()) out << format_number(it->second);
    }
    if (any_votes) {
      out << ',';
      if (inst.votes) {
        for (std::size_t i = 0; i < inst.votes->size(); ++i) out << (i ? ";" : "") << (*inst.votes)[i];
      }
    }
    auto terms_cell = [&](DataSource s) {
      auto it = inst.content_terms.find(s);
      return it == inst.content_terms.end() ? std::string() : csv_escape(join_list(it->second));
    };
    if (any_crowd) out << ',' << terms_cell(DataSource::crowd);
    if (any_system) out << ',' << terms_cell(DataSource::system);
    out << '\n';
  }
  return out.str();
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << dataset_to_json(canonicalize(dataset)).dump(1) << '\n';
}

void write_dataset_tabular(const Dataset& dataset, const std::filesystem::path& csv_path,
                           const std::filesystem::path& catalog_path) {
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error("cannot write " + csv_path.string());
    out << write_tabular(dataset);
  }
  std::ofstream out(catalog_path, std::ios::binary);
  if (!out) throw Error("cannot write " + catalog_path.string());
  out << json{{"catalog", catalog_to_json(dataset.catalog)}}.dump(1) << '\n';
}

Dataset canonicalize(Dataset dataset) {
  std::stable_sort(dataset.instances.begin(), dataset.instances.end(),
                   [](const Instance& a, const Instance& b) { return a.id < b.id; });
  // An absent binary feature reads as 0, so explicit zeros carry nothing.
  for (auto& inst : dataset.instances) {
    std::erase_if(inst.features, [&](const auto& kv) {
      const FeatureDescriptor* f = dataset.catalog.find(kv.first);
      return f && f->dtype == Dtype::binary && kv.second == 0.0;
    });
  }
  return dataset;
}

std::string dataset_digest(const Dataset& dataset) {
  // Provenance is a note, not content; tabular files do not carry it.
  json doc = dataset_to_json(canonicalize(dataset));
  doc.erase("provenance");
  std::uint64_t h = fnv1a(doc.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- Validation -----------------------------------------------------------------

ValidationReport validate(const Dataset& dataset) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, const std::string& id, const std::string& feature, std::string msg) {
    report.violations.push_back({kind, id, feature, std::move(msg)});
  };

  std::set<std::string> seen;
  std::set<std::string> reported_dupes;
  for (const auto& inst : dataset.instances) {
    if (!seen.insert(inst.id).second && reported_dupes.insert(inst.id).second) {
      add(ViolationKind::duplicate_id, inst.id, "", "duplicate instance id '" + inst.id + "'");
    }
  }

  for (const auto& inst : dataset.instances) {
    for (const auto& [name, value] : inst.features) {
      const FeatureDescriptor* f = dataset.catalog.find(name);
      if (f == nullptr) {
        add(ViolationKind::unknown_feature, inst.id, name, "feature not in catalog");
        continue;
      }
      std::string problem = dtype_problem(f->dtype, value);
      if (!problem.empty()) add(ViolationKind::dtype_violation, inst.id, name, problem);
    }
    for (const auto& f : dataset.catalog.features()) {
      if (f.dtype != Dtype::binary && !inst.features.contains(f.name)) {
        add(ViolationKind::missing_value, inst.id, f.name,
            "missing " + std::string(to_string(f.dtype)) + " value");
      }
    }
    if (inst.votes) {
      if (inst.votes->empty()) {
        add(ViolationKind::empty_votes, inst.id, "", "vote list is empty");
      } else if (majority_label(*inst.votes) != inst.label) {
        add(ViolationKind::label_vote_mismatch, inst.id, "",
            "label '" + std::string(to_string(inst.label)) + "' disagrees with vote majority");
      }
    }
  }
  return report;
}

// --- Metrics --------------------------------------------------------------------

ConfidenceAggregates aggregate_confidences(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("aggregate_confidences: empty score list");
  ConfidenceAggregates a;
  a.max = *std::max_element(scores.begin(), scores.end());
  a.min = *std::min_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += s;
  const double n = static_cast<double>(scores.size());
  a.avg = sum / n;
  double ss = 0.0;
  for (double s : scores) ss += (s - a.avg) * (s - a.avg);
  a.std = std::sqrt(ss / n);
  // Keep min <= avg <= max exact under rounding of the mean.
  a.avg = std::clamp(a.avg, a.min, a.max);
  if (a.min == a.max) a.std = 0.0;
  return a;
}

Label majority_label(std::span<const int> votes) {
  std::size_t yes = 0;
  for (int v : votes) yes += v == 1 ? 1 : 0;
  return 2 * yes > votes.size() ? Label::satisfactory : Label::unsatisfactory;
}

double agreement_with_majority(std::span<const int> votes) {
  if (votes.empty()) throw InvalidArgument("agreement_with_majority: no votes");
  int majority = majority_label(votes) == Label::satisfactory ? 1 : 0;
  std::size_t agree = 0;
  for (int v : votes) agree += v == majority ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(votes.size());
}

double satisfaction_rate(std::span<const Label> labels) {
  if (labels.empty()) throw InvalidArgument("satisfaction_rate: empty instance list");
  std::size_t sat = 0;
  for (Label l : labels) sat += l == Label::satisfactory ? 1 : 0;
  return static_cast<double>(sat) / static_cast<double>(labels.size());
}

double satisfaction_rate(std::span<const Instance> instances) {
  std::vector<Label> labels;
  labels.reserve(instances.size());
  for (const auto& inst : instances) labels.push_back(inst.label);
  return satisfaction_rate(labels);
}

double human_agreement(std::span<const Instance> instances) {
  if (instances.empty()) throw InvalidArgument("human_agreement: empty instance list");
  double sum = 0.0;
  for (const auto& inst : instances) {
    if (!inst.votes || inst.votes->empty()) {
      throw InvalidArgument("human_agreement: instance '" + inst.id + "' has no votes");
    }
    sum += agreement_with_majority(*inst.votes);
  }
  return sum / static_cast<double>(instances.size());
}

}  // namespace failscope
