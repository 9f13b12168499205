#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "betamix/angle_engine.hpp"
#include "betamix/beta_mixture.hpp"
#include "json.hpp"

namespace betamix {

struct FitSummary {
  MixtureParams params;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t m = 0;
  std::optional<double> z_threshold_bayes;
  double z_threshold_freq = 0.0;
};

FitSummary summarize_fit(const FitResult& fit, const ZVector& z, double tau, double epsilon);

// {p0, a, b, nu, c_delta, loglik, iterations, converged, n, P, M,
//  z_threshold_bayes, z_threshold_freq}
nlohmann::json to_json(const FitSummary& s);
FitSummary fit_summary_from_json(const nlohmann::json& j);

// Pair file written next to a fit summary: node_i,node_j,r,z.
void write_z_file(std::ostream& out, const ZVector& z, const std::vector<std::string>& names);
std::vector<double> read_z_file(std::istream& in);

struct PlotRow {
  double bin_center = 0.0;
  double histogram_density = 0.0;
  double null_density = 0.0;     // p0-weighted
  double nonnull_density = 0.0;  // (1 - p0)-weighted
  double mixture_density = 0.0;
};

struct PlotData {
  std::vector<PlotRow> rows;
  double bin_width = 0.0;
  std::optional<double> z_threshold;
};

// Histogram of z with the fitted component densities averaged over each bin
// (CDF differences, so integrable singularities at z = 1 are handled).
PlotData make_plot_data(std::span<const double> z, const MixtureParams& params, double tau,
                        std::size_t bins = 100);

// bin_center,histogram_density,null_density,nonnull_density,mixture_density,z_threshold
void write_plot_data(std::ostream& out, const PlotData& data);

}  // namespace betamix
