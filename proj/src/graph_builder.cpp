#include "betamix/graph_builder.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <set>

#include "betamix/errors.hpp"
#include "betamix/special_functions.hpp"

namespace betamix {

Graph::Graph(std::size_t p, std::vector<Edge> edges, std::vector<std::string> node_names)
    : p_(p), edges_(std::move(edges)), names_(std::move(node_names)), adjacency_(p) {
  if (names_.empty()) {
    for (std::size_t j = 0; j < p_; ++j) names_.push_back("V" + std::to_string(j + 1));
  }
  if (names_.size() != p_) throw InputError("node name count does not match graph size");
  for (const Edge& e : edges_) {
    if (e.i >= e.k || e.k >= p_) throw InputError("edge endpoints must satisfy i < k < P");
    adjacency_[e.i].push_back(e.k);
    adjacency_[e.k].push_back(e.i);
  }
  for (auto& nb : adjacency_) {
    std::sort(nb.begin(), nb.end());
    if (std::adjacent_find(nb.begin(), nb.end()) != nb.end()) throw InputError("duplicate edge");
  }
}

bool Graph::adjacent(std::size_t u, std::size_t v) const {
  const auto& nb = adjacency_.at(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

std::size_t Graph::node_by_name(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw InputError("unknown node '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

namespace {

template <class Keep>
std::vector<Edge> filter_pairs(const ZVector& z, std::span<const double> posteriors, Keep keep) {
  const std::size_t m = z.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  // Mark in parallel, collect in index order.
  std::vector<char> take(m, 0);
  const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < mm; ++j) take[static_cast<std::size_t>(j)] = keep(static_cast<std::size_t>(j)) ? 1 : 0;

  std::vector<Edge> edges;
  for (std::size_t i = 0, j = 0; i + 1 < z.index.p(); ++i) {
    for (std::size_t k = i + 1; k < z.index.p(); ++k, ++j) {
      if (!take[j]) continue;
      edges.push_back(Edge{i, k, z.z[j], z.r[j], posteriors.empty() ? nan : posteriors[j]});
    }
  }
  return edges;
}

}  // namespace

Graph frequentist_edges(const ZVector& z, double nu, double epsilon, std::span<const double> posteriors,
                        const std::vector<std::string>& node_names) {
  if (!(nu > 1.0)) throw DomainError("effective sample size must exceed 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must lie in (0, 1)");
  if (!posteriors.empty() && posteriors.size() != z.size()) throw InputError("posterior vector does not match z");
  const double q = beta_quantile(epsilon, (nu - 1.0) / 2.0, 0.5);
  Graph g(z.index.p(), filter_pairs(z, posteriors, [&](std::size_t j) { return z.z[j] < q; }), node_names);
  g.z_threshold = q;
  return g;
}

Graph bayes_edges(const ZVector& z, std::span<const double> posteriors, double tau,
                  const std::vector<std::string>& node_names) {
  if (posteriors.size() != z.size()) throw InputError("posterior vector does not match z");
  Graph g(z.index.p(), filter_pairs(z, posteriors, [&](std::size_t j) { return posteriors[j] < tau; }),
          node_names);
  for (const Edge& e : g.edges()) {
    if (!g.z_threshold || e.z > *g.z_threshold) g.z_threshold = e.z;
  }
  return g;
}

std::vector<std::size_t> select_predictors(const Graph& g, std::size_t response) {
  if (response >= g.p()) throw InputError("response node out of range");
  return g.neighbors(response);
}

std::vector<std::size_t> select_predictors(const Graph& g, const std::string& response) {
  return select_predictors(g, g.node_by_name(response));
}

std::vector<NodeStats> graph_stats(const Graph& g) {
  std::vector<NodeStats> stats(g.p());
  const auto p = static_cast<std::ptrdiff_t>(g.p());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t v = 0; v < p; ++v) {
    const auto& nb = g.neighbors(static_cast<std::size_t>(v));
    const std::size_t d = nb.size();
    std::size_t links = 0;
    for (std::size_t x = 0; x < d; ++x) {
      for (std::size_t y = x + 1; y < d; ++y) {
        if (g.adjacent(nb[x], nb[y])) ++links;
      }
    }
    NodeStats& s = stats[static_cast<std::size_t>(v)];
    s.degree = d;
    s.clustering_coeff = d < 2 ? 0.0 : static_cast<double>(links) / (static_cast<double>(d) * (d - 1) / 2.0);
    s.centrality = static_cast<double>(d) * s.clustering_coeff;
  }
  return stats;
}

ClusterAssignment centrality_clusters(const Graph& g, double min_centrality, bool overlap) {
  const auto stats = graph_stats(g);
  std::vector<std::size_t> order(g.p());
  for (std::size_t v = 0; v < g.p(); ++v) order[v] = v;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return stats[x].centrality > stats[y].centrality;
  });

  ClusterAssignment out;
  std::vector<bool> clustered(g.p(), false);
  for (std::size_t v : order) {
    if (clustered[v]) continue;
    if (stats[v].centrality < min_centrality) break;
    Cluster c;
    c.center = v;
    c.members.push_back(v);
    for (std::size_t u : g.neighbors(v)) {
      if (overlap || !clustered[u]) c.members.push_back(u);
    }
    std::sort(c.members.begin(), c.members.end());
    for (std::size_t u : c.members) clustered[u] = true;
    out.clusters.push_back(std::move(c));
  }
  for (std::size_t v = 0; v < g.p(); ++v) {
    if (!clustered[v]) out.unassigned.push_back(v);
  }
  return out;
}

std::map<std::size_t, std::string> classify_majority(const Graph& g,
                                                     const std::map<std::size_t, std::string>& train_labels,
                                                     std::size_t min_neighbors, const std::string& default_label) {
  for (const auto& [node, label] : train_labels) {
    if (node >= g.p()) throw InputError("labeled node out of range");
  }
  std::map<std::size_t, std::string> predicted;
  for (std::size_t v = 0; v < g.p(); ++v) {
    if (train_labels.count(v)) continue;
    std::map<std::string, std::size_t> votes;
    std::size_t labeled = 0;
    for (std::size_t u : g.neighbors(v)) {
      const auto it = train_labels.find(u);
      if (it == train_labels.end()) continue;
      ++votes[it->second];
      ++labeled;
    }
    std::string label = default_label;
    if (labeled >= min_neighbors && labeled > 0) {
      std::size_t best = 0;
      bool tie = false;
      for (const auto& [candidate, count] : votes) {
        if (count > best) {
          best = count;
          label = candidate;
          tie = false;
        } else if (count == best) {
          tie = true;
        }
      }
      if (tie) label = default_label;
    }
    predicted.emplace(v, label);
  }
  return predicted;
}

void write_edge_list(std::ostream& out, const Graph& g) {
  std::vector<const Edge*> order;
  order.reserve(g.edges().size());
  for (const Edge& e : g.edges()) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(),
                   [](const Edge* x, const Edge* y) { return x->posterior_null < y->posterior_null; });
  const auto& names = g.node_names();
  out << "node_i,node_j,r,z,posterior_null\n" << std::setprecision(17);
  for (const Edge* e : order) {
    out << names[e->i] << ',' << names[e->k] << ',' << e->r << ',' << e->z << ',';
    if (std::isnan(e->posterior_null)) {
      out << "NA";
    } else {
      out << e->posterior_null;
    }
    out << '\n';
  }
}

void write_clusters(std::ostream& out, const Graph& g, const ClusterAssignment& clusters) {
  const auto& names = g.node_names();
  out << "cluster_id,center,member\n";
  for (std::size_t c = 0; c < clusters.clusters.size(); ++c) {
    const Cluster& cl = clusters.clusters[c];
    for (std::size_t m : cl.members) out << c + 1 << ',' << names[cl.center] << ',' << names[m] << '\n';
  }
}

std::map<std::string, std::string> read_labels(std::istream& in) {
  std::map<std::string, std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    const auto pos = line.find(delim);
    if (pos == std::string::npos) throw InputError("labels line " + std::to_string(lineno) + ": expected node,label");
    const std::string node = line.substr(0, pos);
    const std::string label = line.substr(pos + 1);
    if (lineno == 1 && node == "node" && label == "label") continue;
    if (node.empty() || label.empty()) throw InputError("labels line " + std::to_string(lineno) + ": empty field");
    labels[node] = label;
  }
  return labels;
}

}  // namespace betamix
