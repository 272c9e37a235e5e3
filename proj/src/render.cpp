#include <cstdio>
#include <sstream>

#include "failscope/views.hpp"

namespace failscope {

namespace {

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string fixed(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string optional_fixed(const std::optional<double>& v) { return v ? fixed(*v) : "&ndash;"; }

void render_tree(std::ostringstream& out, const DecisionTree& tree, std::size_t id,
                 const std::string& edge) {
  const TreeNode& n = tree.nodes[id];
  const char* cls = n.prediction == Label::satisfactory ? "sat" : "unsat";
  out << "<li><span class=\"node " << cls << "\">";
  if (!edge.empty()) out << "<em>" << escape(edge) << "</em> &rarr; ";
  out << "samples (" << n.n_unsat << ", " << n.n_sat << ")";
  if (n.is_leaf()) out << " leaf " << n.id << ", " << n.members.size() << " instances";
  out << "</span>";
  if (!n.is_leaf()) {
    Condition left{n.split->feature, n.split->dtype, n.split->threshold, true};
    Condition right{n.split->feature, n.split->dtype, n.split->threshold, false};
    out << "<ul>";
    render_tree(out, tree, n.left, left.text());
    render_tree(out, tree, n.right, right.text());
    out << "</ul>";
  }
  out << "</li>";
}

void render_model(std::ostringstream& out, const ModelBlock& m, std::size_t ranking_rows) {
  if (m.skipped()) {
    out << "<p class=\"skip\">No model: " << escape(m.skip_reason) << "</p>";
  } else {
    out << "<p>Cross-validated accuracy: " << fixed(m.cv->mean_accuracy) << " (folds:";
    for (double a : m.cv->fold_accuracies) out << ' ' << fixed(a);
    out << ")</p><ul class=\"tree\">";
    render_tree(out, *m.tree, 0, "");
    out << "</ul><h4>Rules</h4><ol>";
    for (const auto& r : extract_rules(*m.tree)) {
      out << "<li>" << escape(r.text) << " <small>(" << r.n_unsat << ", " << r.n_sat << ")</small></li>";
    }
    out << "</ol>";
  }
  out << "<h4>Feature ranking</h4>";
  if (m.ranking.degenerate) out << "<p class=\"skip\">Single label class; all MI values are 0.</p>";
  out << "<table><tr><th>feature</th><th>MI (bits)</th></tr>";
  for (std::size_t i = 0; i < m.ranking.entries.size() && i < ranking_rows; ++i) {
    out << "<tr><td>" << escape(m.ranking.entries[i].name) << "</td><td>"
        << fixed(m.ranking.entries[i].mi_bits, 4) << "</td></tr>";
  }
  out << "</table>";
}

}  // namespace

std::string render_html(const PerformanceReport& report) {
  std::ostringstream out;
  const auto& spec = report.spec;
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Failure report "
      << escape(report.config_hash) << "</title><style>"
      << "body{font-family:sans-serif;margin:2em;max-width:70em}"
      << "table{border-collapse:collapse;margin:.5em 0}td,th{border:1px solid #bbb;padding:.2em .6em}"
      << "tr.good{background:#d4f4d4}tr.bad{background:#f8d0d0}"
      << ".node.sat{color:#1a7f1a}.node.unsat{color:#b22222}.skip{color:#777}"
      << "ul.tree,ul.tree ul{list-style:none;padding-left:1.2em}"
      << "</style></head><body>\n";
  out << "<h1>Failure report</h1><p>config " << escape(report.config_hash) << " &middot; dataset "
      << escape(report.dataset_digest) << " (" << report.dataset_size << " instances, "
      << escape(report.provenance) << ")</p>";
  out << "<p>view " << to_string(spec.view_kind) << " / " << to_string(spec.data_source)
      << ", clusters from " << to_string(spec.clustering_source) << " terms, k=" << spec.k
      << ", max_depth=" << spec.tree.max_depth << ", min_samples_leaf=" << spec.tree.min_samples_leaf
      << ", seed=" << spec.tree.seed;
  if (!spec.tree.excluded_features.empty()) {
    out << ", excluded:";
    for (const auto& f : spec.tree.excluded_features) out << ' ' << escape(f);
  }
  out << "</p>\n";

  out << "<h2>Clusters</h2><table><tr><th>id</th><th>label</th><th>size</th><th>top terms</th>"
      << "<th>satisfactory</th><th>agreement</th><th>cv accuracy</th></tr>";
  for (const auto& c : report.clusters) {
    out << "<tr class=\"" << to_string(c.highlight) << "\"><td>" << c.id << "</td><td>" << escape(c.label)
        << "</td><td>" << c.size << "</td><td>";
    for (std::size_t i = 0; i < c.top_terms.size(); ++i) out << (i ? ", " : "") << escape(c.top_terms[i]);
    out << "</td><td>" << fixed(c.satisfaction_rate) << "</td><td>" << optional_fixed(c.human_agreement)
        << "</td><td>"
        << (c.model.cv ? fixed(c.model.cv->mean_accuracy) : std::string("skipped")) << "</td></tr>";
  }
  out << "<tr><th colspan=\"6\">all clusters (instance-weighted)</th><td>"
      << fixed(report.all_clusters_accuracy) << "</td></tr>";
  out << "<tr><th colspan=\"6\">generic model</th><td>"
      << (report.generic.model.cv ? fixed(report.generic.model.cv->mean_accuracy) : std::string("skipped"))
      << "</td></tr></table>\n";

  out << "<h2>Generic model</h2><p>satisfaction rate " << fixed(report.generic.satisfaction_rate) << "</p>";
  render_model(out, report.generic.model, 10);
  for (const auto& c : report.clusters) {
    out << "\n<h2>Cluster " << c.id << ": " << escape(c.label) << "</h2>";
    render_model(out, c.model, 10);
  }
  out << "\n</body></html>\n";
  return out.str();
}

}  // namespace failscope
