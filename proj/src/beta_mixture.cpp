#include "betamix/beta_mixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "betamix/errors.hpp"

namespace betamix {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kChunk = 4096;

// Fixed-chunk parallel reduction: partial sums per chunk are combined in
// chunk order, so the result does not depend on the thread count.
template <std::size_t K, class Term>
std::array<double, K> chunked_sums(std::size_t count, Term term) {
  const std::size_t nchunks = (count + kChunk - 1) / kChunk;
  std::vector<std::array<double, K>> partial(nchunks);
  const auto nc = static_cast<std::ptrdiff_t>(nchunks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < nc; ++c) {
    std::array<double, K> acc{};
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t end = std::min(count, begin + kChunk);
    for (std::size_t j = begin; j < end; ++j) term(j, acc);
    partial[static_cast<std::size_t>(c)] = acc;
  }
  std::array<double, K> total{};
  for (const auto& acc : partial) {
    for (std::size_t k = 0; k < K; ++k) total[k] += acc[k];
  }
  return total;
}

// Log densities of both components with the normalizing constants hoisted.
struct ComponentLogDensity {
  explicit ComponentLogDensity(const MixtureParams& p)
      : null_alpha((p.nu - 1.0) / 2.0),
        null_log_norm(log_beta_fn(null_alpha, 0.5)),
        a(p.a),
        b(p.b),
        c(p.c_delta),
        nonnull_log_norm(log_beta_fn(p.a, p.b) + std::log(p.c_delta)) {}

  double null_at(double z) const {
    return (null_alpha - 1.0) * std::log(z) - 0.5 * std::log1p(-z) - null_log_norm;
  }
  double nonnull_at(double z) const {
    if (z >= c) return kNegInf;
    const double w = z / c;
    return (a - 1.0) * std::log(w) + (b - 1.0) * std::log1p(-w) - nonnull_log_norm;
  }

  double null_alpha;
  double null_log_norm;
  double a, b, c;
  double nonnull_log_norm;
};

double log_weight(double w) { return w > 0.0 ? std::log(w) : kNegInf; }

double log_sum_exp(double x, double y) {
  if (x == kNegInf) return y;
  if (y == kNegInf) return x;
  const double hi = std::max(x, y);
  return hi + std::log1p(std::exp(std::min(x, y) - hi));
}

double posterior_null(double log_p0, double log_p1, double lf0, double lf1) {
  const double l0 = log_p0 + lf0;
  const double l1 = log_p1 + lf1;
  if (l0 == kNegInf && l1 == kNegInf) return lf0 >= lf1 ? 1.0 : 0.0;
  if (l0 >= l1) return 1.0 / (1.0 + std::exp(l1 - l0));
  const double e = std::exp(l0 - l1);
  return e / (1.0 + e);
}

// psi^{-1}(y) by Newton from Minka's starting point.
double inverse_digamma(double y) {
  double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y - digamma(1.0));
  for (int i = 0; i < 50; ++i) {
    const double step = (digamma(x) - y) / trigamma(x);
    x = std::max(x - step, x / 10.0);
    if (std::fabs(step) <= 1e-14 * x) break;
  }
  return x;
}

double estimate_c_delta_sorted(std::span<const double> sorted, const MixtureParams& params, double delta);

}  // namespace

void MixtureParams::validate() const {
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw DomainError("p0 must lie in [0, 1]");
  if (!(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b))) {
    throw DomainError("non-null shapes must be positive");
  }
  if (!(nu > 1.0 && std::isfinite(nu))) throw DomainError("effective sample size must exceed 1");
  if (!(c_delta > 0.0 && c_delta <= 1.0)) throw DomainError("c_delta must lie in (0, 1]");
}

namespace {

// Matches the null's 90% quantile to the sample's. Non-null pairs sit at
// small z, so the upper tail is close to pure null. Returns a value in
// (1, n_samples].
double upper_quantile_nu(std::span<const double> z, double n_samples) {
  std::vector<double> sorted(z.begin(), z.end());
  const auto k = static_cast<std::ptrdiff_t>(0.9 * static_cast<double>(sorted.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
  const double z90 = sorted[static_cast<std::size_t>(k)];
  // The null CDF at z90 decreases in nu.
  const auto cdf = [z90](double nu) { return reg_inc_beta(z90, (nu - 1.0) / 2.0, 0.5); };
  double lo = 1.0 + 1e-6;
  double hi = n_samples;
  if (cdf(hi) >= 0.9) return hi;
  if (cdf(lo) <= 0.9) return lo;
  for (int i = 0; i < 200 && hi - lo > 1e-10 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) > 0.9 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

MixtureParams init_params(std::span<const double> z, double n_samples, const FitOptions& options) {
  MixtureParams params;
  params.nu = options.estimate_ess ? upper_quantile_nu(z, n_samples) : n_samples;
  params.c_delta = 1.0;
  params.validate();

  // Pairs below the null's 10% quantile seed the non-null component.
  const double q = beta_quantile(0.10, (params.nu - 1.0) / 2.0, 0.5);
  std::size_t below = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double v : z) {
    if (v < q) {
      ++below;
      sum += v;
      sum_sq += v * v;
    }
  }
  const double m = static_cast<double>(z.size());
  params.p0 = std::clamp((m - static_cast<double>(below)) / m, 0.05, 0.95);

  if (below < 2) {
    params.a = params.b = 1.0;
    return params;
  }
  const double mean = sum / static_cast<double>(below);
  const double var = std::max(0.0, sum_sq / static_cast<double>(below) - mean * mean);
  double a = 1.0;
  double b = 1.0;
  if (var > 0.0) {
    const double common = mean * (1.0 - mean) / var - 1.0;
    if (common > 0.0) {
      a = mean * common;
      b = (1.0 - mean) * common;
    }
  }
  params.a = std::clamp(a, 0.5, 500.0);
  params.b = std::clamp(b, 0.5, 500.0);
  return params;
}

std::vector<double> e_step(std::span<const double> z, const MixtureParams& params) {
  params.validate();
  const ComponentLogDensity dens(params);
  const double log_p0 = log_weight(params.p0);
  const double log_p1 = log_weight(1.0 - params.p0);
  std::vector<double> post(z.size());
  const auto m = static_cast<std::ptrdiff_t>(z.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    const double zj = z[static_cast<std::size_t>(j)];
    post[static_cast<std::size_t>(j)] = posterior_null(log_p0, log_p1, dens.null_at(zj), dens.nonnull_at(zj));
  }
  return post;
}

double log_likelihood(std::span<const double> z, const MixtureParams& params) {
  params.validate();
  const ComponentLogDensity dens(params);
  const double log_p0 = log_weight(params.p0);
  const double log_p1 = log_weight(1.0 - params.p0);
  const auto total = chunked_sums<1>(z.size(), [&](std::size_t j, std::array<double, 1>& acc) {
    const double zj = z[j];
    acc[0] += log_sum_exp(log_p0 + dens.null_at(zj), log_p1 + dens.nonnull_at(zj));
  });
  return total[0];
}

std::pair<double, double> solve_beta_shapes(double s1, double s2, double a0, double b0) {
  constexpr int kMaxNewton = 100;
  constexpr double kGradTol = 1e-11;
  const double lo = std::log(kShapeMin);
  const double hi = std::log(kShapeMax);

  // Negative mean log-likelihood (up to constants); convex in (a, b).
  auto objective = [&](double a, double b) { return log_beta_fn(a, b) - a * s1 - b * s2; };

  double x = std::log(std::clamp(a0, kShapeMin, kShapeMax));
  double y = std::log(std::clamp(b0, kShapeMin, kShapeMax));
  std::vector<double> trace;

  for (int iter = 0; iter < kMaxNewton; ++iter) {
    const double a = std::exp(x);
    const double b = std::exp(y);
    const double psi_ab = digamma(a + b);
    const double ga = digamma(a) - psi_ab - s1;
    const double gb = digamma(b) - psi_ab - s2;
    trace.push_back(a);
    trace.push_back(b);

    // Coordinates pinned at a bound with the gradient pushing outward stay
    // fixed (projected Newton).
    const bool fix_a = (x <= lo && ga > 0.0) || (x >= hi && ga < 0.0);
    const bool fix_b = (y <= lo && gb > 0.0) || (y >= hi && gb < 0.0);
    const double pga = fix_a ? 0.0 : ga;
    const double pgb = fix_b ? 0.0 : gb;
    if (std::max(std::fabs(pga), std::fabs(pgb)) < kGradTol) return {a, b};

    // Newton direction in (a, b) from the trigamma Hessian, mapped to log space.
    const double t_ab = trigamma(a + b);
    const double haa = trigamma(a) - t_ab;
    const double hbb = trigamma(b) - t_ab;
    const double hab = -t_ab;
    double da = 0.0;
    double db = 0.0;
    if (!fix_a && !fix_b) {
      const double det = haa * hbb - hab * hab;
      da = -(hbb * ga - hab * gb) / det;
      db = -(haa * gb - hab * ga) / det;
    } else if (!fix_a) {
      da = -ga / haa;
    } else if (!fix_b) {
      db = -gb / hbb;
    }
    double dx = da / a;
    double dy = db / b;
    // Keep single steps moderate in log space.
    const double longest = std::max(std::fabs(dx), std::fabs(dy));
    if (longest > 2.0) {
      dx *= 2.0 / longest;
      dy *= 2.0 / longest;
    }

    const double f0 = objective(a, b);
    double step = 1.0;
    double nx = x;
    double ny = y;
    bool improved = false;
    for (int ls = 0; ls < 60; ++ls) {
      nx = std::clamp(x + step * dx, lo, hi);
      ny = std::clamp(y + step * dy, lo, hi);
      if (objective(std::exp(nx), std::exp(ny)) <= f0 + 1e-15 * std::fabs(f0)) {
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;
    if (std::fabs(nx - x) < 1e-15 && std::fabs(ny - y) < 1e-15) return {std::exp(nx), std::exp(ny)};
    x = nx;
    y = ny;
  }

  // Damped fixed point: a <- psi^{-1}(s1 + psi(a + b)), same for b.
  double a = std::exp(x);
  double b = std::exp(y);
  for (int iter = 0; iter < 10000; ++iter) {
    const double psi_ab = digamma(a + b);
    const double na = std::clamp(inverse_digamma(s1 + psi_ab), kShapeMin, kShapeMax);
    const double nb = std::clamp(inverse_digamma(s2 + psi_ab), kShapeMin, kShapeMax);
    trace.push_back(na);
    trace.push_back(nb);
    const double ua = 0.5 * (a + na);
    const double ub = 0.5 * (b + nb);
    if (std::fabs(ua - a) <= 1e-12 * a && std::fabs(ub - b) <= 1e-12 * b) return {ua, ub};
    a = ua;
    b = ub;
  }
  throw NumericError("beta shape estimating equations did not converge", std::move(trace));
}

double solve_effective_sample_size(double mean_log_z, double n_max) {
  auto lhs = [](double nu) { return digamma((nu - 1.0) / 2.0) - digamma(nu / 2.0); };
  double lo = 1.0 + kNuFloorOffset;
  double hi = n_max;
  if (lhs(hi) <= mean_log_z) return hi;
  if (lhs(lo) >= mean_log_z) return lo;
  for (int iter = 0; iter < 200 && hi - lo > 1e-12 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (lhs(mid) < mean_log_z) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

MixtureParams m_step(std::span<const double> z, std::span<const double> posteriors,
                     const MixtureParams& params, bool estimate_ess, double n_max) {
  params.validate();
  if (z.size() != posteriors.size()) throw InputError("posterior vector does not match z");
  const double c = params.c_delta;
  // [0] sum m0, [1] sum (1-m0) restricted to support, [2] sum (1-m0) log w,
  // [3] sum (1-m0) log(1-w), [4] sum m0 log z
  const auto s = chunked_sums<5>(z.size(), [&](std::size_t j, std::array<double, 5>& acc) {
    const double m0 = posteriors[j];
    const double zj = z[j];
    acc[0] += m0;
    acc[4] += m0 * std::log(zj);
    if (zj < c) {
      const double u = 1.0 - m0;
      const double w = zj / c;
      acc[1] += u;
      acc[2] += u * std::log(w);
      acc[3] += u * std::log1p(-w);
    }
  });

  MixtureParams next = params;
  next.p0 = std::clamp(s[0] / static_cast<double>(z.size()), 0.0, 1.0);
  if (s[1] >= 1e-8) {
    const auto [a, b] = solve_beta_shapes(s[2] / s[1], s[3] / s[1], params.a, params.b);
    next.a = a;
    next.b = b;
  }
  if (estimate_ess && s[0] >= 1e-8) next.nu = solve_effective_sample_size(s[4] / s[0], n_max);
  return next;
}

namespace {

double estimate_c_delta_sorted(std::span<const double> sorted, const MixtureParams& params, double delta) {
  constexpr std::size_t kGrid = 512;
  const std::size_t m = sorted.size();
  if (m == 0) return 1.0;
  const double lo = sorted[m / 10];
  const double null_alpha = (params.nu - 1.0) / 2.0;
  const double expected_scale = params.p0 * static_cast<double>(m);

  auto signed_gap = [&](double c) {
    const auto above = static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), c));
    return (1.0 - delta) * above - expected_scale * reg_inc_beta_upper(c, null_alpha, 0.5);
  };

  // First grid point where the observed excess over the expected null count
  // falls to zero; the squared gap has its first minimum there.
  double prev_c = lo;
  double prev_gap = signed_gap(lo);
  if (prev_gap <= 0.0) return lo;
  for (std::size_t k = 1; k < kGrid; ++k) {
    const double c = lo + (1.0 - lo) * static_cast<double>(k) / static_cast<double>(kGrid);
    const double gap = signed_gap(c);
    if (gap <= 0.0) return gap * gap < prev_gap * prev_gap ? c : prev_c;
    prev_c = c;
    prev_gap = gap;
  }
  return 1.0;
}

}  // namespace

namespace {

// log z and log(1 - z), fixed for the whole fit.
struct PairLogs {
  explicit PairLogs(std::span<const double> z) : log_z(z.size()), log_1mz(z.size()) {
    const auto m = static_cast<std::ptrdiff_t>(z.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < m; ++j) {
      const auto u = static_cast<std::size_t>(j);
      log_z[u] = std::log(z[u]);
      log_1mz[u] = std::log1p(-z[u]);
    }
  }
  std::vector<double> log_z;
  std::vector<double> log_1mz;
};

// Posteriors for `params` written to `post`; returns the log-likelihood.
double posteriors_and_loglik(std::span<const double> z, const PairLogs& logs, const MixtureParams& params,
                             std::vector<double>& post) {
  const ComponentLogDensity dens(params);
  const double log_p0 = log_weight(params.p0);
  const double log_p1 = log_weight(1.0 - params.p0);
  const bool full_support = params.c_delta >= 1.0;
  post.resize(z.size());
  const auto total = chunked_sums<1>(z.size(), [&](std::size_t j, std::array<double, 1>& acc) {
    const double lf0 = (dens.null_alpha - 1.0) * logs.log_z[j] - 0.5 * logs.log_1mz[j] - dens.null_log_norm;
    const double lf1 = full_support
                           ? (dens.a - 1.0) * logs.log_z[j] + (dens.b - 1.0) * logs.log_1mz[j] - dens.nonnull_log_norm
                           : dens.nonnull_at(z[j]);
    post[j] = posterior_null(log_p0, log_p1, lf0, lf1);
    acc[0] += log_sum_exp(log_p0 + lf0, log_p1 + lf1);
  });
  return total[0];
}

MixtureParams m_step_cached(std::span<const double> z, const PairLogs& logs, std::span<const double> posteriors,
                            const MixtureParams& params, bool estimate_ess, double n_max) {
  const double c = params.c_delta;
  const bool full_support = c >= 1.0;
  const double log_c = std::log(c);
  const auto s = chunked_sums<5>(z.size(), [&](std::size_t j, std::array<double, 5>& acc) {
    const double m0 = posteriors[j];
    acc[0] += m0;
    acc[4] += m0 * logs.log_z[j];
    if (full_support) {
      const double u = 1.0 - m0;
      acc[1] += u;
      acc[2] += u * logs.log_z[j];
      acc[3] += u * logs.log_1mz[j];
    } else if (z[j] < c) {
      const double u = 1.0 - m0;
      acc[1] += u;
      acc[2] += u * (logs.log_z[j] - log_c);
      acc[3] += u * std::log1p(-z[j] / c);
    }
  });
  MixtureParams next = params;
  next.p0 = std::clamp(s[0] / static_cast<double>(z.size()), 0.0, 1.0);
  if (s[1] >= 1e-8) {
    const auto [a, b] = solve_beta_shapes(s[2] / s[1], s[3] / s[1], params.a, params.b);
    next.a = a;
    next.b = b;
  }
  if (estimate_ess && s[0] >= 1e-8) next.nu = solve_effective_sample_size(s[4] / s[0], n_max);
  return next;
}

}  // namespace

double estimate_c_delta(std::span<const double> z, const MixtureParams& params, double delta) {
  params.validate();
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
  std::vector<double> sorted(z.begin(), z.end());
  std::sort(sorted.begin(), sorted.end());
  return estimate_c_delta_sorted(sorted, params, delta);
}

FitResult fit(std::span<const double> z, double n_samples, const FitOptions& options) {
  if (z.size() < 10) {
    throw InputError("need at least 10 pairs to fit the mixture, got " + std::to_string(z.size()));
  }
  if (!(n_samples > 1.0)) throw InputError("sample size must exceed 1");
  if (options.estimate_c_delta && !(options.delta > 0.0 && options.delta < 1.0)) {
    throw InputError("delta must lie in (0, 1)");
  }

  FitResult result;
  result.options = options;
  result.n_samples = static_cast<std::size_t>(n_samples);

  std::vector<double> sorted;
  if (options.estimate_c_delta) {
    sorted.assign(z.begin(), z.end());
    std::sort(sorted.begin(), sorted.end());
  }

  const PairLogs logs(z);
  MixtureParams params = init_params(z, n_samples, options);
  if (options.estimate_c_delta && options.freeze_c_delta) {
    params.c_delta = estimate_c_delta_sorted(sorted, params, options.delta);
  }
  std::vector<double> post;
  double ll = posteriors_and_loglik(z, logs, params, post);
  result.loglik_trace.push_back(ll);

  std::vector<double> next_post;
  std::vector<double> cand_post;
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    MixtureParams next = m_step_cached(z, logs, post, params, options.estimate_ess, n_samples);
    double next_ll = posteriors_and_loglik(z, logs, next, next_post);

    if (options.estimate_c_delta && !options.freeze_c_delta) {
      // Candidate support bound; kept only if it does not lower the
      // likelihood, so the trace stays monotone.
      const double c = estimate_c_delta_sorted(sorted, next, options.delta);
      if (c != next.c_delta) {
        MixtureParams candidate = next;
        candidate.c_delta = c;
        candidate = m_step_cached(z, logs, post, candidate, false, n_samples);
        candidate.p0 = next.p0;
        candidate.nu = next.nu;
        const double cand_ll = posteriors_and_loglik(z, logs, candidate, cand_post);
        if (cand_ll >= next_ll) {
          next = candidate;
          next_ll = cand_ll;
          std::swap(next_post, cand_post);
        }
      }
    }

    result.loglik_trace.push_back(next_ll);
    result.iterations = iter;
    const double change = std::fabs(next_ll - ll) / (1.0 + std::fabs(ll));
    params = next;
    ll = next_ll;
    std::swap(post, next_post);
    if (change < options.tol) {
      result.converged = true;
      break;
    }
  }

  result.params = params;
  result.posteriors = std::move(post);
  return result;
}

FitResult fit(const ZVector& z, const FitOptions& options) {
  return fit(std::span<const double>(z.z), static_cast<double>(z.n_samples), options);
}

std::optional<double> bayes_z_threshold(std::span<const double> z, std::span<const double> posteriors,
                                        double tau) {
  std::optional<double> best;
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (posteriors[j] < tau && (!best || z[j] > *best)) best = z[j];
  }
  return best;
}

}  // namespace betamix
