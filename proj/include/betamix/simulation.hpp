#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "betamix/angle_engine.hpp"
#include "betamix/beta_mixture.hpp"
#include "betamix/graph_builder.hpp"

namespace betamix {

enum class Structure { clusters, random_clusters, band, cycle, ar1, block_ar1, hub, linear_model, identity };

// Predictor dependence for the linear-model scenario.
enum class LinearDesign { independent, ar1_block, hub_block };

Structure parse_structure(const std::string& name);
std::string structure_name(Structure s);
LinearDesign parse_design(const std::string& name);

using EdgeSet = std::vector<std::pair<std::size_t, std::size_t>>;  // (i, k), i < k, sorted

struct CorrelationSpec {
  Structure kind = Structure::clusters;
  std::size_t p = 500;
  double rho = 0.5;
  // Cluster size, band width, cycle length, hub size or AR block size.
  std::size_t size_param = 25;
  std::uint64_t seed = 1;
  LinearDesign design = LinearDesign::independent;

  void validate() const;
};

struct CorrelationTarget {
  Eigen::MatrixXd corr;
  EdgeSet truth;
  bool repaired = false;
  double min_eigenvalue = 1.0;  // before any repair
};

// Unit-diagonal correlation matrix for the structure plus its nonzero
// off-diagonal pattern. Non-PD targets are repaired by clipping eigenvalues
// at 1e-6 and rescaling to unit diagonal; `repaired` records it.
CorrelationTarget build_correlation(const CorrelationSpec& spec);

// n i.i.d. N(0, corr) rows via a Cholesky factor.
DataMatrix sample_mvn(const Eigen::MatrixXd& corr, std::size_t n, std::uint64_t seed);

struct LinearModelSample {
  DataMatrix data;  // P predictors then Y in the last column
  std::size_t response = 0;
  std::vector<std::size_t> true_predictors;
  EdgeSet truth;  // (predictor, response) pairs
};

// Y = 1.6 + 6 X_1 + 4 X_30 + 3 X_100 + N(0, 0.1^2) with uniform predictors;
// the correlated designs couple the first 15 predictors through a Gaussian
// copula.
LinearModelSample sample_linear_model(std::size_t p, std::size_t n, std::uint64_t seed, LinearDesign design,
                                      double rho);

struct Evaluation {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double tpr = 0.0;
  double fdr = 0.0;
};

Evaluation evaluate(const Graph& detected, const EdgeSet& truth);

struct RepResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double threshold = 0.0;  // implied z threshold (NaN when nothing detected)
  double tpr = 0.0;
  double fdr = 0.0;
};

struct ScenarioResult {
  double tpr = 0.0;
  double fdr = 0.0;
  std::size_t reps = 0;
  std::vector<RepResult> per_rep;
  bool repaired = false;
};

ScenarioResult run_scenario(const CorrelationSpec& spec, std::size_t n, std::size_t reps,
                            const FitOptions& fit_options, double tau);

// One row of a scenario file.
struct Scenario {
  CorrelationSpec spec;
  std::size_t n = 200;
  std::size_t reps = 5;
  double tau = 0.01;
  FitOptions fit;
};

// Scenario config: a JSON object or array of objects, or key=value lines
// with blank lines separating scenarios. Keys: structure, rho, N, P, size,
// seed, reps, tau, design, estimate_ess, estimate_cdelta, delta.
std::vector<Scenario> parse_scenarios(const std::string& text);

std::string settings_label(const CorrelationSpec& spec);

// structure,rho,N,P,settings,TPR,FDR
void write_results_header(std::ostream& out);
void write_result_row(std::ostream& out, const Scenario& scenario, const ScenarioResult& result);

}  // namespace betamix
