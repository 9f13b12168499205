#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "betamix/angle_engine.hpp"

namespace betamix {

struct Edge {
  std::size_t i = 0;  // i < k
  std::size_t k = 0;
  double z = 1.0;
  double r = 0.0;
  double posterior_null = 1.0;
};

// Undirected simple graph over P named nodes.
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t p, std::vector<Edge> edges, std::vector<std::string> node_names = {});

  std::size_t p() const noexcept { return p_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& node_names() const noexcept { return names_; }
  const std::vector<std::size_t>& neighbors(std::size_t node) const { return adjacency_.at(node); }
  bool adjacent(std::size_t u, std::size_t v) const;
  std::size_t node_by_name(const std::string& name) const;

  // z cut-off used to build the graph (frequentist rule) or the largest z
  // admitted (Bayesian rule); empty when no edges were admitted.
  std::optional<double> z_threshold;

 private:
  std::size_t p_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> adjacency_;  // sorted neighbor lists
};

// Edge iff z < Q_epsilon, the epsilon quantile of Beta((nu - 1)/2, 1/2).
// Posteriors, when given, are attached to the edges.
Graph frequentist_edges(const ZVector& z, double nu, double epsilon,
                        std::span<const double> posteriors = {},
                        const std::vector<std::string>& node_names = {});

// Edge iff the posterior null probability is below tau.
Graph bayes_edges(const ZVector& z, std::span<const double> posteriors, double tau,
                  const std::vector<std::string>& node_names = {});

std::vector<std::size_t> select_predictors(const Graph& g, std::size_t response);
std::vector<std::size_t> select_predictors(const Graph& g, const std::string& response);

struct NodeStats {
  std::size_t degree = 0;
  double clustering_coeff = 0.0;
  double centrality = 0.0;  // degree * clustering coefficient
};

std::vector<NodeStats> graph_stats(const Graph& g);

struct Cluster {
  std::size_t center = 0;
  std::vector<std::size_t> members;  // sorted, includes the center
};

struct ClusterAssignment {
  std::vector<Cluster> clusters;
  std::vector<std::size_t> unassigned;
};

// Greedy seeding by centrality: the most central node not yet in any cluster
// becomes a center and takes its whole neighborhood. With `overlap` false a
// node joins at most one cluster.
ClusterAssignment centrality_clusters(const Graph& g, double min_centrality = 3.0, bool overlap = true);

// Labels each node outside `train_labels` by majority vote of its labeled
// neighbors. Ties and nodes with fewer than `min_neighbors` labeled
// neighbors get `default_label`.
std::map<std::size_t, std::string> classify_majority(const Graph& g,
                                                     const std::map<std::size_t, std::string>& train_labels,
                                                     std::size_t min_neighbors, const std::string& default_label);

// node_i,node_j,r,z,posterior_null sorted by posterior ascending.
void write_edge_list(std::ostream& out, const Graph& g);
// cluster_id,center,member
void write_clusters(std::ostream& out, const Graph& g, const ClusterAssignment& clusters);
// Two-column node,label text (optional header line `node,label`).
std::map<std::string, std::string> read_labels(std::istream& in);

}  // namespace betamix
