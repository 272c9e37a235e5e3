#include "failscope/server.hpp"

#include <charconv>
#include <vector>

#include <httplib.h>

#include "failscope/error.hpp"

namespace failscope::server {

using nlohmann::json;

namespace {

class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

Response json_response(int status, const json& body) { return {status, body.dump(), "application/json"}; }

Response error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}, {"status", status}});
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i <= path.size()) {
    std::size_t j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    if (j > i) parts.emplace_back(path.substr(i, j - i));
    i = j + 1;
  }
  return parts;
}

std::map<std::string, std::string> parse_query(std::string_view query) {
  std::map<std::string, std::string> out;
  std::size_t i = 0;
  while (i < query.size()) {
    std::size_t j = query.find('&', i);
    if (j == std::string_view::npos) j = query.size();
    std::string_view item = query.substr(i, j - i);
    std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      out[std::string(item)] = "";
    } else {
      out[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    }
    i = j + 1;
  }
  return out;
}

std::optional<std::size_t> parse_index(const std::string& text) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) return std::nullopt;
  return v;
}

// "generic" or a cluster id.
const ModelBlock& model_for(const PerformanceReport& report, const std::string& tree) {
  if (tree == "generic") return report.generic.model;
  auto id = parse_index(tree);
  if (!id || *id > static_cast<std::size_t>(std::numeric_limits<int>::max())) {
    throw NotFound("unknown tree '" + tree + "'");
  }
  return report.cluster(static_cast<int>(*id)).model;
}

json tree_identifier(const std::string& tree) {
  if (tree == "generic") return tree;
  return static_cast<int>(*parse_index(tree));
}

json envelope(const PerformanceReport& report, const char* schema) {
  return {{"schema", schema}, {"schema_version", kApiSchemaVersion}, {"config_hash", report.config_hash}};
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json clusters_body(const PerformanceReport& report) {
  json out = envelope(report, "failscope.clusters");
  json rows = json::array();
  for (const auto& c : report.clusters) {
    rows.push_back({{"id", c.id},
                    {"label", c.label},
                    {"size", c.size},
                    {"top_terms", c.top_terms},
                    {"satisfaction_rate", c.satisfaction_rate},
                    {"human_agreement", optional_number(c.human_agreement)},
                    {"highlight", to_string(c.highlight)},
                    {"cv_accuracy", c.model.cv ? json(c.model.cv->mean_accuracy) : json(nullptr)}});
  }
  out["clusters"] = std::move(rows);
  out["generic"] = {{"size", report.generic.size},
                    {"satisfaction_rate", report.generic.satisfaction_rate},
                    {"human_agreement", optional_number(report.generic.human_agreement)},
                    {"cv_accuracy", report.generic.model.cv ? json(report.generic.model.cv->mean_accuracy)
                                                            : json(nullptr)}};
  out["all_clusters_accuracy"] = report.all_clusters_accuracy;
  return out;
}

json tree_body(const PerformanceReport& report, const std::string& tree) {
  const ModelBlock& m = model_for(report, tree);
  json out = envelope(report, "failscope.tree");
  out["tree_id"] = tree_identifier(tree);
  out["skipped"] = m.skipped();
  out["skip_reason"] = m.skip_reason;
  out["tree"] = m.tree ? tree_to_json(*m.tree) : json(nullptr);
  out["rules"] = m.tree ? rules_to_json(extract_rules(*m.tree)) : json::array();
  out["cv"] = m.cv ? cv_to_json(*m.cv) : json(nullptr);
  return out;
}

json ranking_body(const PerformanceReport& report, const std::string& tree) {
  const ModelBlock& m = model_for(report, tree);
  json out = envelope(report, "failscope.ranking");
  out["tree_id"] = tree_identifier(tree);
  out["ranking"] = ranking_to_json(m.ranking);
  return out;
}

WhatIfDelta parse_delta(const json& doc) {
  if (!doc.is_object()) throw HttpError(400, "body must be an object");
  WhatIfDelta d;
  try {
    if (doc.contains("excluded_features")) {
      d.excluded_features = doc.at("excluded_features").get<std::vector<std::string>>();
    }
    if (doc.contains("merges")) d.merges = doc.at("merges").get<std::vector<std::vector<int>>>();
    if (doc.contains("k") && !doc.at("k").is_null()) {
      const auto& k = doc.at("k");
      if (!k.is_number_integer() || k.get<long long>() < 1) throw HttpError(400, "k must be a positive integer");
      d.k = k.get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw HttpError(400, std::string("malformed delta: ") + e.what());
  }
  return d;
}

}  // namespace

int status_for(const std::exception& e) {
  if (auto* h = dynamic_cast<const HttpError*>(&e)) return h->status();
  if (dynamic_cast<const NotFound*>(&e)) return 404;
  if (dynamic_cast<const DatasetMismatch*>(&e)) return 409;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const UnknownFeatureError*>(&e) || dynamic_cast<const DtypeError*>(&e)) {
    return 400;
  }
  return 500;
}

Service::Service(Dataset dataset, PerformanceReport base, ServiceOptions options)
    : dataset_(canonicalize(std::move(dataset))), options_(options) {
  const std::string digest = dataset_digest(dataset_);
  if (digest != base.dataset_digest) {
    throw DatasetMismatch("report was built from dataset " + base.dataset_digest + ", server holds " + digest);
  }
  for (const auto& inst : dataset_.instances) by_id_.emplace(inst.id, &inst);
  base_ = make_entry(std::move(base));
}

Service::~Service() {
  // Outstanding builds reference dataset_; let them finish first.
  std::lock_guard lock(mutex_);
  for (auto& [hash, job] : cache_) job.wait();
}

std::size_t Service::computations() const {
  std::lock_guard lock(mutex_);
  return computations_;
}

std::shared_ptr<const Service::Entry> Service::make_entry(PerformanceReport report) const {
  auto e = std::make_shared<Entry>();
  e->report = std::move(report);
  e->body = serialize_report(e->report);
  return e;
}

std::shared_ptr<const Service::Entry> Service::lookup(const std::string& hash, bool* pending) const {
  if (pending) *pending = false;
  if (hash.empty() || hash == base_->report.config_hash) return base_;
  Pending job;
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(hash);
    if (it == cache_.end()) return nullptr;
    job = it->second;
  }
  if (job.wait_for(std::chrono::seconds(0)) != std::future_status::ready) {
    if (pending) *pending = true;
    return nullptr;
  }
  return job.get();
}

Response Service::handle(std::string_view method, std::string_view target, std::string_view body) {
  try {
    std::string_view path = target;
    std::string_view query;
    if (auto q = target.find('?'); q != std::string_view::npos) {
      path = target.substr(0, q);
      query = target.substr(q + 1);
    }
    const auto parts = split_path(path);
    const auto params = parse_query(query);
    if (parts.size() < 2 || parts[0] != "api") throw NotFound("no such endpoint");

    if (parts[1] == "whatif") {
      if (method == "POST" && parts.size() == 2) return post_whatif(body);
      if (method == "GET" && parts.size() == 3) return get_whatif(parts[2]);
      throw NotFound("no such endpoint");
    }
    if (method != "GET") throw HttpError(405, "method not allowed");

    bool pending = false;
    auto it = params.find("report");
    const std::string hash = it == params.end() ? "" : it->second;
    auto entry = lookup(hash, &pending);
    if (pending) return json_response(202, {{"status", "pending"}, {"config_hash", hash}, {"poll", "/api/whatif/" + hash}});
    if (!entry) throw NotFound("unknown report '" + hash + "'");
    const PerformanceReport& report = entry->report;

    if (parts[1] == "report" && parts.size() == 2) return {200, entry->body, "application/json"};
    if (parts[1] == "clusters" && parts.size() == 2) return json_response(200, clusters_body(report));
    if (parts[1] == "clusters" && parts.size() == 4 && parts[3] == "tree") {
      return json_response(200, tree_body(report, parts[2]));
    }
    if (parts[1] == "clusters" && parts.size() == 4 && parts[3] == "ranking") {
      return json_response(200, ranking_body(report, parts[2]));
    }
    if (parts[1] == "dendrogram" && parts.size() == 2) {
      json out = envelope(report, "failscope.dendrogram");
      out["dendrogram"] = dendrogram_to_json(report.dendrogram);
      out["assignment"] = assignment_to_json(report.assignment);
      return json_response(200, out);
    }
    if (parts[1] == "trees" && parts.size() == 6 && parts[3] == "leaves" && parts[5] == "instances") {
      const ModelBlock& m = model_for(report, parts[2]);
      if (!m.tree) throw NotFound("tree '" + parts[2] + "' was not trained: " + m.skip_reason);
      auto leaf = parse_index(parts[4]);
      if (!leaf || *leaf >= m.tree->nodes.size() || !m.tree->nodes[*leaf].is_leaf()) {
        throw NotFound("unknown leaf '" + parts[4] + "'");
      }
      const TreeNode& node = m.tree->nodes[*leaf];
      json rows = json::array();
      for (const auto& id : leaf_instances(*m.tree, *leaf)) {
        const Instance& inst = *by_id_.at(id);
        json values = json::object();
        for (const auto& f : report.features) {
          const auto& desc = dataset_.catalog.at(f);
          auto v = inst.features.find(f);
          if (v != inst.features.end()) {
            values[f] = v->second;
          } else if (desc.dtype == Dtype::binary) {
            values[f] = 0.0;
          } else {
            values[f] = nullptr;
          }
        }
        rows.push_back({{"id", id}, {"label", to_string(inst.label)}, {"features", std::move(values)}});
      }
      json out = envelope(report, "failscope.leaf_instances");
      out["tree_id"] = tree_identifier(parts[2]);
      out["leaf"] = *leaf;
      out["samples"] = {node.n_unsat, node.n_sat};
      out["instances"] = std::move(rows);
      return json_response(200, out);
    }
    throw NotFound("no such endpoint");
  } catch (const std::exception& e) {
    return error_response(status_for(e), e.what());
  }
}

Response Service::post_whatif(std::string_view body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw HttpError(400, std::string("malformed body: ") + e.what());
  }
  WhatIfDelta delta = parse_delta(doc);
  if (doc.contains("dataset_digest")) {
    if (!doc.at("dataset_digest").is_string()) throw HttpError(400, "dataset_digest must be a string");
    if (doc.at("dataset_digest").get<std::string>() != base_->report.dataset_digest) {
      throw DatasetMismatch("request targets dataset " + doc.at("dataset_digest").get<std::string>() +
                            ", server holds " + base_->report.dataset_digest);
    }
  }
  std::shared_ptr<const Entry> from = base_;
  if (doc.contains("base") && !doc.at("base").is_null()) {
    if (!doc.at("base").is_string()) throw HttpError(400, "base must be a config hash");
    bool pending = false;
    from = lookup(doc.at("base").get<std::string>(), &pending);
    if (pending) throw HttpError(409, "base report is still being computed");
    if (!from) throw NotFound("unknown report '" + doc.at("base").get<std::string>() + "'");
  }

  const ViewSpec spec = apply_delta(from->report.spec, delta);
  const std::string hash = config_hash(from->report.dataset_digest, spec);
  if (hash == base_->report.config_hash) return finished({}, hash);

  Pending job;
  {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(hash);
    if (it == cache_.end()) {
      ++computations_;
      auto source = from;
      job = std::async(std::launch::async, [this, source, delta] {
              return make_entry(what_if(source->report, dataset_, delta, {options_.jobs}));
            }).share();
      cache_.emplace(hash, job);
    } else {
      job = it->second;
    }
  }
  if (job.wait_for(options_.whatif_budget) != std::future_status::ready) {
    return json_response(202, {{"status", "pending"}, {"config_hash", hash}, {"poll", "/api/whatif/" + hash}});
  }
  return finished(job, hash);
}

Response Service::get_whatif(const std::string& hash) {
  bool pending = false;
  auto entry = lookup(hash, &pending);
  if (pending) return json_response(202, {{"status", "pending"}, {"config_hash", hash}, {"poll", "/api/whatif/" + hash}});
  if (!entry) throw NotFound("unknown report '" + hash + "'");
  return {200, "{\"config_hash\":" + json(hash).dump() + ",\"report\":" + entry->body + "}", "application/json"};
}

// Builds the POST answer. The report body is embedded verbatim so that it is
// byte-identical to GET /api/whatif/{hash}.
Response Service::finished(const Pending& job, const std::string& hash) {
  std::shared_ptr<const Entry> entry = job.valid() ? job.get() : base_;
  std::string body = "{\"config_hash\":" + json(hash).dump() + ",\"report\":" + entry->body + "}";
  return {200, std::move(body), "application/json"};
}

// --- HTTP ---------------------------------------------------------------------

struct HttpServer::Impl {
  Service& service;
  httplib::Server http;
  explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    Response r = impl_->service.handle(req.method, req.target, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  impl_->http.Get(R"(/api/.*)", forward);
  impl_->http.Post(R"(/api/.*)", forward);
  if (static_dir) impl_->http.set_mount_point("/", static_dir->string());
}

HttpServer::~HttpServer() = default;

bool HttpServer::run(const std::string& host, int port, const std::function<void(int)>& on_ready) {
  int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) return false;
  if (on_ready) on_ready(bound);
  return impl_->http.listen_after_bind();
}

void HttpServer::stop() { impl_->http.stop(); }

}  // namespace failscope::server
