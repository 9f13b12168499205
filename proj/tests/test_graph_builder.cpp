#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "betamix/beta_mixture.hpp"
#include "betamix/errors.hpp"
#include "betamix/graph_builder.hpp"
#include "betamix/simulation.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace betamix;

namespace {

Graph make_graph(std::size_t p, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<Edge> edges;
  for (auto [i, k] : pairs) edges.push_back(Edge{std::min(i, k), std::max(i, k), 0.5, 0.7, 0.0});
  return Graph(p, std::move(edges));
}

Graph complete_graph(std::size_t p) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = i + 1; k < p; ++k) pairs.emplace_back(i, k);
  return make_graph(p, pairs);
}

ZVector manual_z(std::size_t p, std::vector<double> z) {
  ZVector out;
  out.index = PairIndex(p);
  out.r.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) out.r[j] = std::sqrt(1 - z[j]);
  out.z = std::move(z);
  out.n_samples = 50;
  return out;
}

// Clustered correlation sample, so there is something to detect.
ZVector clustered_z(std::size_t p, std::uint64_t seed) {
  CorrelationSpec spec;
  spec.kind = Structure::clusters;
  spec.p = p;
  spec.rho = 0.6;
  spec.size_param = 5;
  const CorrelationTarget target = build_correlation(spec);
  return compute_z(sample_mvn(target.corr, 60, seed), true);
}

std::set<std::pair<std::string, std::string>> named_edges(const Graph& g, const std::vector<std::string>& names) {
  std::set<std::pair<std::string, std::string>> out;
  for (const Edge& e : g.edges()) out.insert(std::minmax(names[e.i], names[e.k]));
  return out;
}

}  // namespace

TEST_CASE("frequentist_edges thresholds") {
  const ZVector z = manual_z(4, {0.5, 0.74, 0.76, 0.9, 0.2, 1 - kZClamp});
  const Graph g = frequentist_edges(z, 70, 1e-5);
  REQUIRE(g.z_threshold.has_value());
  CHECK(*g.z_threshold == beta_quantile(1e-5, 34.5, 0.5));
  CHECK(*g.z_threshold == doctest::Approx(0.75).epsilon(0.015));
  CHECK(g.edges().size() == 3);
  for (const Edge& e : g.edges()) CHECK(std::isnan(e.posterior_null));

  const ZVector null_z = manual_z(5, std::vector<double>(10, 1 - kZClamp));
  CHECK(frequentist_edges(null_z, 70, 1e-5).edges().empty());
  CHECK(frequentist_edges(z, 70, 1 - 1e-12).edges().size() == 6);
}

TEST_CASE("bayes_edges thresholds") {
  const ZVector z = manual_z(3, {0.2, 0.5, 0.9});
  CHECK(bayes_edges(z, std::vector<double>{1, 1, 1}, 0.01).edges().empty());
  CHECK(bayes_edges(z, std::vector<double>{0.3, 0.6, 0.99}, 1.0).edges().size() == 3);
  const Graph g = bayes_edges(z, std::vector<double>{0.001, 0.2, 0.9}, 0.01);
  REQUIRE(g.edges().size() == 1);
  CHECK(g.edges()[0].posterior_null == 0.001);
  CHECK(*g.z_threshold == 0.2);
  CHECK_THROWS(bayes_edges(z, std::vector<double>{0.1}, 0.01));
}

TEST_CASE("edge rules are monotone in their thresholds") {
  const ZVector z = clustered_z(60, 4);
  const FitResult fitted = fit(z);
  std::size_t prev_f = 0, prev_b = 0;
  std::vector<Edge> prev_edges;
  for (double eps : {1e-8, 1e-6, 1e-4, 1e-2, 0.1, 0.5}) {
    const Graph g = frequentist_edges(z, 60, eps);
    CHECK(g.edges().size() >= prev_f);
    for (const Edge& e : prev_edges) CHECK(g.adjacent(e.i, e.k));
    prev_f = g.edges().size();
    prev_edges = g.edges();
  }
  prev_edges.clear();
  for (double tau : {1e-6, 1e-3, 0.01, 0.1, 0.5, 1.0}) {
    const Graph g = bayes_edges(z, fitted.posteriors, tau);
    CHECK(g.edges().size() >= prev_b);
    for (const Edge& e : prev_edges) CHECK(g.adjacent(e.i, e.k));
    prev_b = g.edges().size();
    prev_edges = g.edges();
  }
}

TEST_CASE("edge decisions are invariant under column relabeling") {
  CorrelationSpec spec;
  spec.kind = Structure::clusters;
  spec.p = 40;
  spec.rho = 0.6;
  spec.size_param = 5;
  const DataMatrix data = sample_mvn(build_correlation(spec).corr, 60, 9);
  std::vector<std::size_t> perm(data.p());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  std::vector<double> shuffled;
  std::vector<std::string> names;
  for (std::size_t j : perm) {
    const auto col = data.column(j);
    shuffled.insert(shuffled.end(), col.begin(), col.end());
    names.push_back(data.column_names()[j]);
  }
  const DataMatrix permuted(data.n(), data.p(), shuffled, names);

  const ZVector z0 = compute_z(data, true);
  const ZVector z1 = compute_z(permuted, true);
  const MixtureParams params{0.9, 3.0, 4.0, 60.0, 1.0};
  CHECK(named_edges(frequentist_edges(z0, 60, 1e-4), data.column_names()) ==
        named_edges(frequentist_edges(z1, 60, 1e-4), names));
  CHECK(named_edges(bayes_edges(z0, e_step(z0.z, params), 0.01), data.column_names()) ==
        named_edges(bayes_edges(z1, e_step(z1.z, params), 0.01), names));
}

TEST_CASE("bayes edges are a z prefix when the posterior is monotone") {
  int checked = 0;
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    const ZVector z = clustered_z(80, seed);
    const FitResult r = fit(z);
    const MixtureParams& p = r.params;
    if (!(p.c_delta == 1.0 && p.a < (p.nu - 1) / 2 && p.b > 0.5)) continue;
    ++checked;
    const Graph g = bayes_edges(z, r.posteriors, 0.01);
    double max_in = 0.0;
    for (const Edge& e : g.edges()) max_in = std::max(max_in, e.z);
    double min_out = 1.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const auto [i, k] = z.index.pair(j);
      if (!g.adjacent(i, k)) min_out = std::min(min_out, z.z[j]);
    }
    CHECK(max_in < min_out);
  }
  CHECK(checked > 0);
}

TEST_CASE("select_predictors") {
  const Graph star = make_graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  CHECK(select_predictors(star, 0) == std::vector<std::size_t>{1, 2, 3, 4});
  const Graph g = make_graph(4, {{1, 2}});
  CHECK(select_predictors(g, 0).empty());
  CHECK(select_predictors(g, "V2") == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(select_predictors(g, "nope"), InputError);
}

TEST_CASE("graph_stats on small graphs") {
  for (const NodeStats& s : graph_stats(make_graph(3, {{0, 1}, {1, 2}, {0, 2}}))) {
    CHECK(s.degree == 2);
    CHECK(s.clustering_coeff == 1.0);
    CHECK(s.centrality == 2.0);
  }
  const auto star = graph_stats(make_graph(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}));
  CHECK(star[0].degree == 4);
  CHECK(star[0].clustering_coeff == 0.0);
  CHECK(star[0].centrality == 0.0);
  for (const NodeStats& s : graph_stats(make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}))) {
    CHECK(s.degree == 2);
    CHECK(s.clustering_coeff == 0.0);
  }
}

TEST_CASE("graph_stats bounds on random graphs") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::bernoulli_distribution coin(0.05 + 0.04 * trial);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t k = i + 1; k < 30; ++k)
        if (coin(rng)) pairs.emplace_back(i, k);
    for (const NodeStats& s : graph_stats(make_graph(30, pairs))) {
      CHECK(s.clustering_coeff >= 0.0);
      CHECK(s.clustering_coeff <= 1.0);
      CHECK(s.centrality <= static_cast<double>(s.degree));
    }
  }
}

TEST_CASE("centrality_clusters") {
  const ClusterAssignment k10 = centrality_clusters(complete_graph(10));
  REQUIRE(k10.clusters.size() == 1);
  CHECK(k10.clusters[0].center == 0);
  CHECK(k10.clusters[0].members.size() == 10);
  CHECK(k10.unassigned.empty());

  std::vector<std::pair<std::size_t, std::size_t>> two;
  for (std::size_t base : {0u, 5u})
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t k = i + 1; k < 5; ++k) two.emplace_back(base + i, base + k);
  const ClusterAssignment k5 = centrality_clusters(make_graph(10, two));
  REQUIRE(k5.clusters.size() == 2);
  CHECK(k5.clusters[0].members == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(k5.clusters[1].members == std::vector<std::size_t>{5, 6, 7, 8, 9});

  // Triangles plus a pendant: max centrality 2 < 3.
  const ClusterAssignment none = centrality_clusters(make_graph(4, {{0, 1}, {1, 2}, {0, 2}, {2, 3}}));
  CHECK(none.clusters.empty());
  CHECK(none.unassigned.size() == 4);
}

TEST_CASE("centrality_clusters overlap flag") {
  // Two K5s sharing node 4; with overlap the shared node sits in both.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::vector<std::size_t> block : {std::vector<std::size_t>{0, 1, 2, 3, 4}, {4, 5, 6, 7, 8}})
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t k = i + 1; k < 5; ++k) pairs.emplace_back(block[i], block[k]);
  const Graph g = make_graph(9, pairs);
  const ClusterAssignment shared = centrality_clusters(g, 3.0, true);
  const ClusterAssignment strict = centrality_clusters(g, 3.0, false);
  std::size_t shared_total = 0, strict_total = 0;
  for (const Cluster& c : shared.clusters) shared_total += c.members.size();
  for (const Cluster& c : strict.clusters) strict_total += c.members.size();
  CHECK(shared_total >= strict_total);
  std::set<std::size_t> seen;
  for (const Cluster& c : strict.clusters)
    for (std::size_t v : c.members) CHECK(seen.insert(v).second);
}

TEST_CASE("classify_majority") {
  const Graph g = make_graph(6, {{0, 1}, {0, 2}, {0, 3}, {4, 1}, {4, 2}});
  const std::map<std::size_t, std::string> train{{1, "good"}, {2, "good"}, {3, "bad"}};
  const auto pred = classify_majority(g, train, 1, "bad");
  CHECK(pred.at(0) == "good");
  CHECK(pred.at(5) == "bad");  // isolated
  CHECK(pred.at(4) == "good");
  CHECK(pred.count(1) == 0);

  const auto strict = classify_majority(g, train, 3, "bad");
  CHECK(strict.at(0) == "good");
  CHECK(strict.at(4) == "bad");

  const Graph tie = make_graph(3, {{0, 1}, {0, 2}});
  CHECK(classify_majority(tie, {{1, "good"}, {2, "bad"}}, 1, "unknown").at(0) == "unknown");
}

TEST_CASE("edge list, clusters and labels IO") {
  std::vector<Edge> edges{{0, 1, 0.3, 0.8, 0.004}, {1, 2, 0.2, 0.9, 0.001}};
  const Graph g(3, edges, {"a", "b", "c"});
  std::ostringstream out;
  write_edge_list(out, g);
  std::istringstream lines(out.str());
  std::string header, first;
  std::getline(lines, header);
  std::getline(lines, first);
  CHECK(header == "node_i,node_j,r,z,posterior_null");
  CHECK(first.rfind("b,c,", 0) == 0);

  std::ostringstream cl;
  write_clusters(cl, complete_graph(4), centrality_clusters(complete_graph(4), 1.0));
  CHECK(cl.str().rfind("cluster_id,center,member\n", 0) == 0);

  std::istringstream labels("node,label\nV1,good\nV2,bad\n");
  const auto parsed = read_labels(labels);
  CHECK(parsed.size() == 2);
  CHECK(parsed.at("V2") == "bad");
}
