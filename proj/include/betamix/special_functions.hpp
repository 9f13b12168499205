#pragma once

// Scalar kernels: gamma family, (truncated) beta densities, the regularized
// incomplete beta and its inverse, plus two closed forms describing how
// random lines in R^n spread out.

namespace betamix {

// Beta(alpha, beta) optionally rescaled onto (0, upper).
struct BetaShape {
  double alpha = 1.0;
  double beta = 1.0;
  double upper = 1.0;

  // Throws DomainError unless alpha > 0, beta > 0 and upper in (0, 1].
  static BetaShape make(double alpha, double beta, double upper = 1.0);
};

double log_gamma(double x);
double digamma(double x);
double trigamma(double x);

// ln B(a, b)
double log_beta_fn(double a, double b);

// Log density; -infinity at or beyond a truncated upper bound.
double beta_log_pdf(double z, const BetaShape& shape);
double beta_pdf(double z, const BetaShape& shape);

/// Regularized incomplete beta I_z(a, b).
///
/// Evaluated with the modified Lentz continued fraction, switching to
/// 1 - I_{1-z}(b, a) when z > (a + 1) / (a + b + 2) so the fraction always
/// converges quickly.
double reg_inc_beta(double z, double a, double b);

/// Upper tail 1 - I_z(a, b), computed without cancellation when the tail is
/// tiny.
double reg_inc_beta_upper(double z, double a, double b);

/// Inverse of reg_inc_beta in z: returns q with I_q(a, b) = p.
///
/// Newton from the mean a / (a + b), falling back to bisection whenever a
/// step leaves the current bracket. Throws NumericError after 200 iterations.
double beta_quantile(double p, double a, double b);

// [(pi (n-1) / 2)^{1/2} cos(angle)]^{-1} (sin angle)^{n-1}, the large-n
// approximation of P(theta <= angle) for the angle between two random lines.
double frankl_cdf_approx(double angle, int n);

// ln m(n) where m(n) = (pi (n-1) / 2)^{1/2} cos(angle) (sin angle)^{-(n-1)}
// is a lower bound on how many lines through the origin of R^n pairwise
// subtend more than `angle`.
double log_quasi_orthogonal_capacity(double angle, int n);

// exp of the above; +infinity once it leaves double range.
double quasi_orthogonal_capacity(double angle, int n);

}  // namespace betamix
