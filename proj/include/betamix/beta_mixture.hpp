#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "betamix/angle_engine.hpp"
#include "betamix/special_functions.hpp"

namespace betamix {

// Two-group model for z = sin^2(theta):
//   null      Beta((nu - 1) / 2, 1/2)
//   non-null  Beta(a, b) rescaled onto (0, c_delta)
// with null weight p0.
struct MixtureParams {
  double p0 = 0.9;
  double a = 1.0;
  double b = 1.0;
  double nu = 3.0;
  double c_delta = 1.0;

  BetaShape null_shape() const { return BetaShape{(nu - 1.0) / 2.0, 0.5, 1.0}; }
  BetaShape nonnull_shape() const { return BetaShape{a, b, c_delta}; }
  void validate() const;
};

struct FitOptions {
  bool estimate_ess = false;
  bool estimate_c_delta = false;
  // Estimate c_delta once from the initial parameters instead of every
  // iteration.
  bool freeze_c_delta = false;
  double delta = 1e-3;
  double tol = 1e-8;
  int max_iter = 1000;
};

struct FitResult {
  MixtureParams params;
  std::vector<double> posteriors;  // m0_hat per pair
  std::vector<double> loglik_trace;
  int iterations = 0;
  bool converged = false;
  FitOptions options;
  std::size_t n_samples = 0;

  double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

inline constexpr double kShapeMin = 1e-3;
inline constexpr double kShapeMax = 1e4;
inline constexpr double kNuFloorOffset = 1e-6;

// Starting point for EM; see the implementation for the recipe.
MixtureParams init_params(std::span<const double> z, double n_samples, const FitOptions& options);

// Posterior null probabilities.
std::vector<double> e_step(std::span<const double> z, const MixtureParams& params);

// Weighted maximum-likelihood update of (p0, a, b) and optionally nu (capped
// at n_max). c_delta is carried over unchanged.
MixtureParams m_step(std::span<const double> z, std::span<const double> posteriors,
                     const MixtureParams& params, bool estimate_ess, double n_max);

// Solves psi(a) - psi(a + b) = s1, psi(b) - psi(a + b) = s2 for the beta
// shapes. Throws NumericError if neither Newton nor the fixed-point fallback
// converges.
std::pair<double, double> solve_beta_shapes(double s1, double s2, double a0, double b0);

// Solves psi((nu - 1)/2) - psi(nu/2) = mean_log_z on (1, n_max].
double solve_effective_sample_size(double mean_log_z, double n_max);

// Support bound for the non-null component; 1 if no crossing is found.
double estimate_c_delta(std::span<const double> z, const MixtureParams& params, double delta);

double log_likelihood(std::span<const double> z, const MixtureParams& params);

FitResult fit(const ZVector& z, const FitOptions& options = {});
FitResult fit(std::span<const double> z, double n_samples, const FitOptions& options = {});

// Largest z with posterior below tau, if any.
std::optional<double> bayes_z_threshold(std::span<const double> z, std::span<const double> posteriors,
                                        double tau);

}  // namespace betamix
