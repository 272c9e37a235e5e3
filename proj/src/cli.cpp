#include "failscope/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "failscope/dataset.hpp"
#include "failscope/error.hpp"
#include "failscope/server.hpp"
#include "failscope/synth.hpp"
#include "failscope/views.hpp"

namespace failscope::cli {

namespace {

struct StageFailure {
  std::string stage;
  std::string message;
};

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageFailure&) {
    throw;
  } catch (const std::exception& e) {
    throw StageFailure{name, e.what()};
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << text;
  if (!out) throw InvalidArgument("failed writing " + path);
}

// Writes to `path`, or to `out` when the path is empty.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text(path, text);
  }
}

struct InputFlags {
  std::string input;
  std::string catalog;

  void add(CLI::App* app, bool required = true) {
    auto* opt = app->add_option("--input", input, "Dataset file (.csv is tabular, otherwise structured)");
    if (required) opt->required();
    app->add_option("--catalog", catalog, "Feature catalog for tabular input");
  }

  Dataset load() const {
    return stage("load", [&] {
      std::optional<std::filesystem::path> cat;
      if (!catalog.empty()) cat = catalog;
      return load_dataset(input, format_for_path(input), cat);
    });
  }
};

struct SpecFlags {
  std::string view = "content";
  std::string source = "crowd";
  std::string cluster_source;
  std::size_t k = ViewSpec{}.k;
  int max_depth = TreeParams{}.max_depth;
  std::size_t min_leaf = TreeParams{}.min_samples_leaf;
  double min_gain = TreeParams{}.min_gain;
  std::vector<std::string> exclude;
  std::uint64_t seed = 0;
  double good = ViewSpec{}.good_threshold;
  double bad = ViewSpec{}.bad_threshold;
  int folds = ViewSpec{}.folds;
  std::size_t top_terms = ViewSpec{}.top_terms;
  std::vector<std::string> merges;

  void add(CLI::App* app) {
    app->add_option("--view", view, "content or component")->check(CLI::IsMember({"content", "component"}));
    app->add_option("--source", source, "crowd or system")->check(CLI::IsMember({"crowd", "system"}));
    app->add_option("--cluster-source", cluster_source, "Terms used for clustering (default: --source)")
        ->check(CLI::IsMember({"crowd", "system"}));
    app->add_option("--k", k, "Number of clusters")->check(CLI::PositiveNumber);
    app->add_option("--max-depth", max_depth, "Maximum tree depth")->check(CLI::NonNegativeNumber);
    app->add_option("--min-leaf", min_leaf, "Minimum instances per leaf")->check(CLI::PositiveNumber);
    app->add_option("--min-gain", min_gain, "Minimum split gain in bits")->check(CLI::NonNegativeNumber);
    app->add_option("--exclude", exclude, "Feature left out of trees and rankings (repeatable)");
    app->add_option("--merge", merges, "Comma-separated cluster ids to merge after the cut (repeatable)");
    app->add_option("--seed", seed, "Seed for cross-validation folds");
    app->add_option("--good-threshold", good, "Satisfaction rate at or above which a cluster is good");
    app->add_option("--bad-threshold", bad, "Satisfaction rate at or below which a cluster is bad");
    app->add_option("--folds", folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
    app->add_option("--top-terms", top_terms, "Top terms listed per cluster")->check(CLI::PositiveNumber);
  }
};

std::vector<int> parse_merge(const std::string& text) {
  std::vector<int> ids;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      ids.push_back(v);
    } catch (const std::logic_error&) {
      throw InvalidArgument("bad cluster id '" + item + "' in --merge " + text);
    }
  }
  if (ids.size() < 2) throw InvalidArgument("--merge needs at least two cluster ids");
  return ids;
}

ViewSpec make_spec(const SpecFlags& f) {
  ViewSpec s;
  s.view_kind = parse_view_kind(f.view);
  s.data_source = parse_data_source(f.source);
  s.clustering_source = parse_data_source(f.cluster_source.empty() ? f.source : f.cluster_source);
  s.k = f.k;
  for (const auto& m : f.merges) s.merges.push_back(parse_merge(m));
  s.tree.max_depth = f.max_depth;
  s.tree.min_samples_leaf = f.min_leaf;
  s.tree.min_gain = f.min_gain;
  s.tree.excluded_features = {f.exclude.begin(), f.exclude.end()};
  s.tree.seed = f.seed;
  s.good_threshold = f.good;
  s.bad_threshold = f.bad;
  s.folds = f.folds;
  s.top_terms = f.top_terms;
  return s;
}

// host:port, host alone (port 8080) or :port.
std::pair<std::string, int> parse_bind(const std::string& bind) {
  auto colon = bind.rfind(':');
  if (colon == std::string::npos) return {bind, 8080};
  std::string host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::logic_error&) {
    throw InvalidArgument("bad port in --bind " + bind);
  }
  if (port < 0 || port > 65535) throw InvalidArgument("bad port in --bind " + bind);
  return {host.empty() ? "127.0.0.1" : host, port};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Failure analysis for component-based ML systems", "failscope"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Check a dataset for violations");
  InputFlags validate_in;
  validate_in.add(validate_cmd);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset and its manifest");
  std::string synth_config, synth_out, synth_manifest, synth_catalog;
  std::optional<std::uint64_t> synth_seed;
  synth_cmd->add_option("--config", synth_config, "Generator config file")->required();
  synth_cmd->add_option("--out", synth_out, "Dataset file to write (.csv writes tabular)")->required();
  synth_cmd->add_option("--manifest", synth_manifest, "Manifest file (default: <out stem>.manifest.json)");
  synth_cmd->add_option("--catalog", synth_catalog, "Catalog sidecar for tabular output (default: <out stem>.catalog.json)");
  synth_cmd->add_option("--seed", synth_seed, "Override the config seed");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Build a performance report for one view");
  InputFlags analyze_in;
  SpecFlags analyze_spec;
  std::string analyze_out, analyze_html;
  unsigned analyze_jobs = 1;
  analyze_in.add(analyze_cmd);
  analyze_spec.add(analyze_cmd);
  analyze_cmd->add_option("--out", analyze_out, "Report file (default: stdout)");
  analyze_cmd->add_option("--html", analyze_html, "Also write a rendered report");
  analyze_cmd->add_option("--jobs", analyze_jobs, "Parallel model builds")->check(CLI::PositiveNumber);

  // whatif
  auto* whatif_cmd = app.add_subcommand("whatif", "Apply a delta to a report");
  InputFlags whatif_in;
  std::string whatif_report, whatif_out;
  std::vector<std::string> whatif_exclude, whatif_merges;
  std::optional<std::size_t> whatif_k;
  unsigned whatif_jobs = 1;
  whatif_in.add(whatif_cmd);
  whatif_cmd->add_option("--report", whatif_report, "Base report")->required();
  whatif_cmd->add_option("--exclude", whatif_exclude, "Feature to leave out (repeatable)");
  whatif_cmd->add_option("--merge", whatif_merges, "Comma-separated cluster ids to merge (repeatable)");
  whatif_cmd->add_option("--k", whatif_k, "Re-cut the dendrogram at k clusters")->check(CLI::PositiveNumber);
  whatif_cmd->add_option("--out", whatif_out, "Report file (default: stdout)");
  whatif_cmd->add_option("--jobs", whatif_jobs, "Parallel model builds")->check(CLI::PositiveNumber);

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "Compare two reports cluster by cluster");
  std::string compare_a, compare_b, compare_out;
  compare_cmd->add_option("a", compare_a, "First report")->required();
  compare_cmd->add_option("b", compare_b, "Second report")->required();
  compare_cmd->add_option("--out", compare_out, "Comparison file (default: stdout)");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render a report as a standalone HTML page");
  std::string render_report, render_out;
  render_cmd->add_option("--report", render_report, "Report file")->required();
  render_cmd->add_option("--out", render_out, "HTML file (default: stdout)");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve reports and what-if analysis over HTTP");
  InputFlags serve_in;
  SpecFlags serve_spec;
  std::string serve_report, serve_bind = "127.0.0.1:8080", serve_static;
  unsigned serve_jobs = 1;
  double serve_budget = 2.0;
  serve_in.add(serve_cmd);
  serve_spec.add(serve_cmd);
  serve_cmd->add_option("--report", serve_report, "Base report (default: analyze with the view flags)");
  serve_cmd->add_option("--bind", serve_bind, "host:port");
  serve_cmd->add_option("--static", serve_static, "Directory served at /");
  serve_cmd->add_option("--jobs", serve_jobs, "Parallel model builds")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--budget", serve_budget, "Seconds before a what-if answers 202")->check(CLI::NonNegativeNumber);

  // recover
  auto* recover_cmd = app.add_subcommand("recover", "Score a report against a synthetic manifest");
  std::string recover_report, recover_manifest, recover_out;
  recover_cmd->add_option("--report", recover_report, "Report built from the synthetic dataset")->required();
  recover_cmd->add_option("--manifest", recover_manifest, "Generator manifest")->required();
  recover_cmd->add_option("--out", recover_out, "Score file (default: stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*validate_cmd) {
      Dataset ds = validate_in.load();
      auto report = stage("validate", [&] { return validate(ds); });
      for (const auto& v : report.violations) {
        out << to_string(v.kind) << '\t' << v.instance_id << '\t' << v.feature << '\t' << v.message << '\n';
      }
      if (!report.clean()) {
        throw StageFailure{"validate", std::to_string(report.violations.size()) + " violation(s)"};
      }
      out << "ok: " << ds.instances.size() << " instances, " << ds.catalog.size() << " features\n";
    } else if (*synth_cmd) {
      auto config = stage("config", [&] { return synth::load_config(synth_config); });
      if (synth_seed) config.seed = *synth_seed;
      auto [ds, manifest] = stage("synth", [&] { return synth::generate(config); });
      std::filesystem::path target(synth_out);
      std::filesystem::path stem = target.parent_path() / target.stem();
      std::string manifest_path = synth_manifest.empty() ? stem.string() + ".manifest.json" : synth_manifest;
      stage("write", [&] {
        if (format_for_path(target) == DatasetFormat::tabular) {
          write_dataset_tabular(ds, target, synth_catalog.empty() ? stem.string() + ".catalog.json" : synth_catalog);
        } else {
          write_dataset(ds, target);
        }
        synth::write_manifest(manifest, manifest_path);
      });
      out << "wrote " << ds.instances.size() << " instances (digest " << manifest.dataset_digest << ")\n";
    } else if (*analyze_cmd) {
      Dataset ds = analyze_in.load();
      ViewSpec spec = stage("spec", [&] { return make_spec(analyze_spec); });
      auto report = stage("analyze", [&] { return build_view(ds, spec, {analyze_jobs}); });
      stage("write", [&] {
        emit(analyze_out, serialize_report(report), out);
        if (!analyze_html.empty()) write_text(analyze_html, render_html(report));
      });
    } else if (*whatif_cmd) {
      Dataset ds = whatif_in.load();
      auto base = stage("load", [&] { return load_report(whatif_report); });
      WhatIfDelta delta = stage("delta", [&] {
        WhatIfDelta d;
        d.excluded_features = whatif_exclude;
        for (const auto& m : whatif_merges) d.merges.push_back(parse_merge(m));
        d.k = whatif_k;
        return d;
      });
      auto report = stage("whatif", [&] { return what_if(base, ds, delta, {whatif_jobs}); });
      stage("write", [&] { emit(whatif_out, serialize_report(report), out); });
    } else if (*compare_cmd) {
      auto a = stage("load", [&] { return load_report(compare_a); });
      auto b = stage("load", [&] { return load_report(compare_b); });
      auto cmp = stage("compare", [&] { return compare_views(a, b); });
      stage("write", [&] { emit(compare_out, comparison_to_json(cmp).dump(1) + "\n", out); });
    } else if (*render_cmd) {
      auto report = stage("load", [&] { return load_report(render_report); });
      stage("write", [&] { emit(render_out, render_html(report), out); });
    } else if (*serve_cmd) {
      Dataset ds = serve_in.load();
      PerformanceReport base = stage("analyze", [&] {
        if (!serve_report.empty()) return load_report(serve_report);
        return build_view(ds, make_spec(serve_spec), {serve_jobs});
      });
      auto [host, port] = stage("bind", [&] { return parse_bind(serve_bind); });
      server::ServiceOptions options;
      options.jobs = serve_jobs;
      options.whatif_budget = std::chrono::milliseconds(static_cast<long long>(serve_budget * 1000.0));
      std::optional<server::Service> service;
      stage("serve", [&] { service.emplace(std::move(ds), std::move(base), options); });
      std::optional<std::filesystem::path> static_dir;
      if (!serve_static.empty()) static_dir = serve_static;
      server::HttpServer http(*service, static_dir);
      bool ok = http.run(host, port, [&](int bound) {
        out << "listening on http://" << host << ':' << bound << " (config " << service->base().config_hash
            << ")" << std::endl;
      });
      if (!ok) throw StageFailure{"serve", "cannot listen on " + serve_bind};
    } else if (*recover_cmd) {
      auto report = stage("load", [&] { return load_report(recover_report); });
      auto manifest = stage("load", [&] { return synth::load_manifest(recover_manifest); });
      auto score = stage("recover", [&] { return synth::evaluate_recovery(report, manifest); });
      stage("write", [&] { emit(recover_out, synth::recovery_to_json(score).dump(1) + "\n", out); });
      if (!score.passed()) {
        throw StageFailure{"recover", score.no_signal ? "no planted signal" : "planted rules not recovered"};
      }
    }
  } catch (const StageFailure& f) {
    err << "error [" << f.stage << "]: " << f.message << '\n';
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace failscope::cli
