#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "failscope/dataset.hpp"
#include "failscope/views.hpp"

namespace failscope::server {

inline constexpr int kApiSchemaVersion = 1;

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ServiceOptions {
  // What-if requests still running after this long answer 202 with a poll URL.
  std::chrono::milliseconds whatif_budget{2000};
  unsigned jobs = 1;
};

// Request handling without sockets. Safe to call from several threads; the
// dataset and the base report never change after construction.
class Service {
 public:
  // Throws DatasetMismatch when the report was built from another dataset.
  Service(Dataset dataset, PerformanceReport base, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // `target` is the request path with an optional query string. Reports
  // other than the base are selected with `?report=<config hash>`.
  Response handle(std::string_view method, std::string_view target, std::string_view body);

  const PerformanceReport& base() const { return base_->report; }
  // Distinct what-if builds started so far.
  std::size_t computations() const;

 private:
  struct Entry {
    PerformanceReport report;
    std::string body;  // serialized once so repeated reads are byte-identical
  };
  using Pending = std::shared_future<std::shared_ptr<const Entry>>;

  std::shared_ptr<const Entry> make_entry(PerformanceReport report) const;
  // nullptr when unknown; throws the build error of a failed what-if.
  std::shared_ptr<const Entry> lookup(const std::string& hash, bool* pending) const;
  Response post_whatif(std::string_view body);
  Response get_whatif(const std::string& hash);
  Response finished(const Pending& job, const std::string& hash);

  Dataset dataset_;
  std::unordered_map<std::string, const Instance*> by_id_;
  ServiceOptions options_;
  std::shared_ptr<const Entry> base_;
  mutable std::mutex mutex_;
  std::map<std::string, Pending> cache_;
  std::size_t computations_ = 0;
};

// Maps a library exception to an HTTP status: 400 for bad input, 404 for
// unknown objects, 409 for dataset mismatches, 500 otherwise.
int status_for(const std::exception& e);

// Blocks serving HTTP until stop() is called from another thread or the
// process ends. `on_ready` receives the bound port (useful with port 0).
// Files under `static_dir`, when given, are served at "/".
class HttpServer {
 public:
  explicit HttpServer(Service& service, std::optional<std::filesystem::path> static_dir = {});
  ~HttpServer();
  // Returns false if the address cannot be bound.
  bool run(const std::string& host, int port, const std::function<void(int)>& on_ready = {});
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace failscope::server
