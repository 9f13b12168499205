#include "betamix/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "betamix/errors.hpp"

namespace betamix {

namespace {

constexpr double kTiny = 1e-300;

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

// Continued fraction part of I_x(a, b); valid (fast) for x < (a+1)/(a+b+2).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 20000;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

// x^a (1-x)^b / (a B(a, b)) * CF, the lower tail when x is left of the mode.
double lower_series(double x, double a, double b) {
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta_fn(a, b);
  return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
}

}  // namespace

BetaShape BetaShape::make(double alpha, double beta, double upper) {
  require(positive_finite(alpha) && positive_finite(beta), "beta shape parameters must be positive");
  require(upper > 0.0 && upper <= 1.0, "beta support bound must lie in (0, 1]");
  return BetaShape{alpha, beta, upper};
}

double log_gamma(double x) {
  require(positive_finite(x), "log_gamma requires a positive finite argument");
  return std::lgamma(x);
}

double digamma(double x) {
  require(positive_finite(x), "digamma requires a positive finite argument");
  double shift = 0.0;
  while (x < 6.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number asymptotic series.
  const double tail =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 -
                                              inv2 * (691.0 / 32760 - inv2 * (1.0 / 12)))))));
  return shift + std::log(x) - 0.5 * inv - tail;
}

double trigamma(double x) {
  require(positive_finite(x), "trigamma requires a positive finite argument");
  double shift = 0.0;
  while (x < 6.0) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double tail =
      inv * inv2 *
      (1.0 / 6 -
       inv2 * (1.0 / 30 -
               inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * (5.0 / 66 - inv2 * (691.0 / 2730 - inv2 * (7.0 / 6)))))));
  return shift + inv + 0.5 * inv2 + tail;
}

double log_beta_fn(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double beta_log_pdf(double z, const BetaShape& shape) {
  require(z > 0.0 && z < 1.0, "beta density evaluated outside (0, 1)");
  if (z >= shape.upper) return -std::numeric_limits<double>::infinity();
  const double w = z / shape.upper;
  return (shape.alpha - 1.0) * std::log(w) + (shape.beta - 1.0) * std::log1p(-w) -
         log_beta_fn(shape.alpha, shape.beta) - std::log(shape.upper);
}

double beta_pdf(double z, const BetaShape& shape) { return std::exp(beta_log_pdf(z, shape)); }

double reg_inc_beta(double z, double a, double b) {
  require(positive_finite(a) && positive_finite(b), "incomplete beta shapes must be positive");
  require(z >= 0.0 && z <= 1.0, "incomplete beta argument outside [0, 1]");
  if (z == 0.0) return 0.0;
  if (z == 1.0) return 1.0;
  if (z < (a + 1.0) / (a + b + 2.0)) return lower_series(z, a, b);
  return 1.0 - lower_series(1.0 - z, b, a);
}

double reg_inc_beta_upper(double z, double a, double b) {
  require(positive_finite(a) && positive_finite(b), "incomplete beta shapes must be positive");
  require(z >= 0.0 && z <= 1.0, "incomplete beta argument outside [0, 1]");
  if (z == 0.0) return 1.0;
  if (z == 1.0) return 0.0;
  if (z < (a + 1.0) / (a + b + 2.0)) return 1.0 - lower_series(z, a, b);
  return lower_series(1.0 - z, b, a);
}

double beta_quantile(double p, double a, double b) {
  require(positive_finite(a) && positive_finite(b), "beta quantile shapes must be positive");
  require(p > 0.0 && p < 1.0, "beta quantile probability must lie in (0, 1)");

  constexpr int kMaxIter = 200;
  const double smallest = std::numeric_limits<double>::denorm_min();
  const double largest = std::nextafter(1.0, 0.0);
  const BetaShape shape{a, b, 1.0};

  double lo = 0.0;
  double hi = 1.0;
  double z = a / (a + b);
  std::vector<double> trace;
  trace.reserve(kMaxIter);
  // Work on whichever tail is smaller so tiny probabilities keep their
  // relative precision.
  const bool use_upper = p > 0.5;
  const double target = use_upper ? 1.0 - p : p;
  double best = z;
  double best_err = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < kMaxIter; ++iter) {
    z = std::clamp(z, smallest, largest);
    trace.push_back(z);
    const double tail = use_upper ? reg_inc_beta_upper(z, a, b) : reg_inc_beta(z, a, b);
    const double diff = use_upper ? target - tail : tail - target;  // sign of F(z) - p
    if (std::fabs(diff) < best_err) {
      best = z;
      best_err = std::fabs(diff);
    }
    if (diff == 0.0 || std::fabs(diff) <= 1e-14 * target) return z;
    if (diff > 0.0) {
      hi = z;
    } else {
      lo = z;
    }
    // Adjacent doubles: the root is not representable more closely.
    if (std::nextafter(lo, 1.0) >= hi) return best;

    const double density = std::exp(beta_log_pdf(z, shape));
    double next = z - diff / density;
    if (!std::isfinite(next) || next <= lo || next >= hi || next == z) {
      // Bisect in log space when the bracket spans orders of magnitude.
      next = (lo > 0.0 && hi / lo > 1e3) ? std::sqrt(lo * hi)
             : (lo == 0.0 && hi < 1e-3)  ? hi * 1e-3
                                         : lo + 0.5 * (hi - lo);
    }
    z = next;
  }
  throw NumericError("beta quantile did not converge", std::move(trace));
}

double frankl_cdf_approx(double angle, int n) {
  require(angle > 0.0 && angle < std::numbers::pi / 2.0, "angle must lie strictly inside (0, pi/2)");
  require(n >= 3, "dimension must be at least 3");
  const double log_value = (n - 1) * std::log(std::sin(angle)) -
                           0.5 * std::log(std::numbers::pi * (n - 1) / 2.0) - std::log(std::cos(angle));
  return std::exp(log_value);
}

double log_quasi_orthogonal_capacity(double angle, int n) {
  require(angle > 0.0 && angle < std::numbers::pi / 2.0, "angle must lie strictly inside (0, pi/2)");
  require(n >= 3, "dimension must be at least 3");
  return 0.5 * std::log(std::numbers::pi * (n - 1) / 2.0) + std::log(std::cos(angle)) -
         (n - 1) * std::log(std::sin(angle));
}

double quasi_orthogonal_capacity(double angle, int n) {
  return std::exp(log_quasi_orthogonal_capacity(angle, n));
}

}  // namespace betamix
