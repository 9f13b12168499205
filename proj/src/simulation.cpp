#include "betamix/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "betamix/errors.hpp"
#include "json.hpp"

namespace betamix {

namespace {

constexpr double kMinEigenvalue = 1e-6;

const std::map<std::string, Structure>& structure_names() {
  static const std::map<std::string, Structure> names = {
      {"clusters", Structure::clusters}, {"random_clusters", Structure::random_clusters},
      {"band", Structure::band},         {"cycle", Structure::cycle},
      {"ar1", Structure::ar1},           {"block_ar1", Structure::block_ar1},
      {"hub", Structure::hub},           {"linear_model", Structure::linear_model},
      {"identity", Structure::identity},
  };
  return names;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Pattern of the target before any PD repair.
struct Pattern {
  Eigen::MatrixXd corr;
  EdgeSet truth;

  explicit Pattern(std::size_t p) : corr(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p))) {}

  void set(std::size_t i, std::size_t k, double value) {
    if (i == k) return;
    if (i > k) std::swap(i, k);
    const auto ii = static_cast<Eigen::Index>(i);
    const auto kk = static_cast<Eigen::Index>(k);
    corr(ii, kk) = corr(kk, ii) = value;
  }

  void collect_truth() {
    truth.clear();
    for (Eigen::Index i = 0; i < corr.rows(); ++i) {
      for (Eigen::Index k = i + 1; k < corr.cols(); ++k) {
        if (corr(i, k) != 0.0) truth.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
      }
    }
  }
};

void fill_block(Pattern& pat, std::size_t start, std::size_t size, double rho) {
  for (std::size_t i = start; i < start + size; ++i) {
    for (std::size_t k = i + 1; k < start + size; ++k) pat.set(i, k, rho);
  }
}

void fill_ar1(Pattern& pat, std::size_t start, std::size_t size, double rho) {
  for (std::size_t i = start; i < start + size; ++i) {
    for (std::size_t k = i + 1; k < start + size; ++k) pat.set(i, k, std::pow(rho, static_cast<double>(k - i)));
  }
}

void fill_hub(Pattern& pat, std::size_t start, std::size_t size, double rho) {
  for (std::size_t k = start + 1; k < start + size; ++k) pat.set(start, k, rho);
}

void fill_cycle(Pattern& pat, std::size_t start, std::size_t size, double rho) {
  if (size < 2) return;
  for (std::size_t t = 0; t + 1 < size; ++t) pat.set(start + t, start + t + 1, rho);
  if (size > 2) pat.set(start, start + size - 1, rho);
}

// Clips eigenvalues at kMinEigenvalue and rescales to unit diagonal when
// needed. Returns the smallest eigenvalue before repair.
double repair_correlation(Eigen::MatrixXd& corr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  const double min_eigenvalue = eig.eigenvalues().minCoeff();
  if (min_eigenvalue >= kMinEigenvalue) return min_eigenvalue;
  const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(kMinEigenvalue);
  Eigen::MatrixXd repaired = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::VectorXd inv_sd = repaired.diagonal().cwiseSqrt().cwiseInverse();
  repaired = inv_sd.asDiagonal() * repaired * inv_sd.asDiagonal();
  repaired = (0.5 * (repaired + repaired.transpose())).eval();
  repaired.diagonal().setOnes();
  corr = std::move(repaired);
  return min_eigenvalue;
}

template <class Fill>
void tile_blocks(Pattern& pat, std::size_t p, std::size_t size, double rho, Fill fill) {
  for (std::size_t start = 0; start < p; start += size) fill(pat, start, std::min(size, p - start), rho);
}

// Cluster sizes uniform on [5, 2P/40], at most 40 of them, total <= P.
std::vector<std::size_t> random_cluster_sizes(std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t hi = std::max<std::size_t>(5, 2 * p / 40);
  std::uniform_int_distribution<std::size_t> draw(5, hi);
  std::vector<std::size_t> sizes;
  std::size_t used = 0;
  for (int c = 0; c < 40 && used + 2 <= p; ++c) {
    const std::size_t s = std::min(draw(rng), p - used);
    sizes.push_back(s);
    used += s;
  }
  return sizes;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

Structure parse_structure(const std::string& name) {
  const auto it = structure_names().find(lower(name));
  if (it == structure_names().end()) throw InputError("unknown structure '" + name + "'");
  return it->second;
}

std::string structure_name(Structure s) {
  for (const auto& [name, value] : structure_names()) {
    if (value == s) return name;
  }
  return "unknown";
}

LinearDesign parse_design(const std::string& name) {
  const std::string n = lower(name);
  if (n == "independent") return LinearDesign::independent;
  if (n == "ar1_block" || n == "ar1") return LinearDesign::ar1_block;
  if (n == "hub_block" || n == "hub") return LinearDesign::hub_block;
  throw InputError("unknown linear-model design '" + name + "'");
}

void CorrelationSpec::validate() const {
  if (p < 2) throw InputError("P must be at least 2");
  if (!(rho > -1.0 && rho < 1.0)) throw InputError("rho must lie in (-1, 1)");
  const bool sized = kind == Structure::clusters || kind == Structure::band || kind == Structure::cycle ||
                     kind == Structure::block_ar1 || kind == Structure::hub;
  if (sized && (size_param < 1 || size_param > p)) throw InputError("size parameter must lie in [1, P]");
  if (kind == Structure::linear_model && p < 100) throw InputError("linear model needs P >= 100");
}

CorrelationTarget build_correlation(const CorrelationSpec& spec) {
  spec.validate();
  const std::size_t p = spec.p;
  Pattern pat(p);
  switch (spec.kind) {
    case Structure::clusters:
      tile_blocks(pat, p, spec.size_param, spec.rho, fill_block);
      break;
    case Structure::random_clusters: {
      std::size_t start = 0;
      for (std::size_t s : random_cluster_sizes(p, spec.seed)) {
        fill_block(pat, start, s, spec.rho);
        start += s;
      }
      break;
    }
    case Structure::band:
      for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = i + 1; k < std::min(p, i + spec.size_param + 1); ++k) pat.set(i, k, spec.rho);
      }
      break;
    case Structure::cycle:
      tile_blocks(pat, p, spec.size_param, spec.rho, fill_cycle);
      break;
    case Structure::ar1:
      fill_ar1(pat, 0, p, spec.rho);
      break;
    case Structure::block_ar1:
      fill_ar1(pat, 0, spec.size_param, spec.rho);
      break;
    case Structure::hub:
      tile_blocks(pat, p, spec.size_param, spec.rho, fill_hub);
      break;
    case Structure::identity:
      break;
    case Structure::linear_model:
      throw InputError("linear_model scenarios are generated by sample_linear_model");
  }
  pat.collect_truth();

  CorrelationTarget target;
  target.truth = std::move(pat.truth);
  target.corr = std::move(pat.corr);
  target.min_eigenvalue = repair_correlation(target.corr);
  target.repaired = target.min_eigenvalue < kMinEigenvalue;
  return target;
}

DataMatrix sample_mvn(const Eigen::MatrixXd& corr, std::size_t n, std::uint64_t seed) {
  const Eigen::Index p = corr.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) throw NumericError("correlation matrix is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(n), p);
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j) draws(i, j) = normal(rng);
  }
  const Eigen::MatrixXd x = draws * lower.transpose();  // column-major, one variable per column
  std::vector<double> values(x.data(), x.data() + x.size());
  return DataMatrix(n, static_cast<std::size_t>(p), std::move(values), {});
}

LinearModelSample sample_linear_model(std::size_t p, std::size_t n, std::uint64_t seed, LinearDesign design,
                                      double rho) {
  if (p < 100) throw InputError("linear model needs at least 100 predictors");
  if (n < 3) throw InputError("linear model needs at least 3 samples");
  constexpr std::size_t kBlock = 15;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> values((p + 1) * n);
  auto x = [&](std::size_t row, std::size_t col) -> double& { return values[col * n + row]; };

  for (std::size_t col = 0; col < p; ++col) {
    for (std::size_t row = 0; row < n; ++row) x(row, col) = uniform(rng);
  }
  if (design != LinearDesign::independent) {
    Pattern pat(kBlock);
    if (design == LinearDesign::ar1_block) {
      fill_ar1(pat, 0, kBlock, rho);
    } else {
      fill_hub(pat, 0, kBlock, rho);
    }
    repair_correlation(pat.corr);
    const DataMatrix z = sample_mvn(pat.corr, n, seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t col = 0; col < kBlock; ++col) {
      for (std::size_t row = 0; row < n; ++row) x(row, col) = normal_cdf(z(row, col));
    }
  }
  for (std::size_t row = 0; row < n; ++row) {
    x(row, p) = 1.6 + 6.0 * x(row, 0) + 4.0 * x(row, 29) + 3.0 * x(row, 99) + noise(rng);
  }

  std::vector<std::string> names;
  for (std::size_t col = 0; col < p; ++col) names.push_back("X" + std::to_string(col + 1));
  names.push_back("Y");

  LinearModelSample out{DataMatrix(n, p + 1, std::move(values), std::move(names)), p, {0, 29, 99}, {}};
  for (std::size_t j : out.true_predictors) out.truth.emplace_back(j, p);
  return out;
}

Evaluation evaluate(const Graph& detected, const EdgeSet& truth) {
  EdgeSet sorted_truth = truth;
  std::sort(sorted_truth.begin(), sorted_truth.end());
  Evaluation ev;
  for (const Edge& e : detected.edges()) {
    if (std::binary_search(sorted_truth.begin(), sorted_truth.end(), std::make_pair(e.i, e.k))) {
      ++ev.tp;
    } else {
      ++ev.fp;
    }
  }
  ev.fn = sorted_truth.size() - ev.tp;
  ev.tpr = sorted_truth.empty() ? 0.0 : static_cast<double>(ev.tp) / static_cast<double>(sorted_truth.size());
  ev.fdr = static_cast<double>(ev.fp) / static_cast<double>(std::max<std::size_t>(1, ev.tp + ev.fp));
  return ev;
}

ScenarioResult run_scenario(const CorrelationSpec& spec, std::size_t n, std::size_t reps,
                            const FitOptions& fit_options, double tau) {
  if (reps < 1) throw InputError("reps must be at least 1");
  spec.validate();
  const bool linear = spec.kind == Structure::linear_model;
  CorrelationTarget target;
  if (!linear) target = build_correlation(spec);

  ScenarioResult result;
  result.reps = reps;
  result.repaired = target.repaired;
  result.per_rep.resize(reps);
  std::vector<std::exception_ptr> errors(reps);

  const auto nreps = static_cast<std::ptrdiff_t>(reps);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t rep = 0; rep < nreps; ++rep) {
    const auto r = static_cast<std::size_t>(rep);
    try {
      const std::uint64_t seed = spec.seed + r;
      Evaluation ev;
      std::optional<double> threshold;
      if (linear) {
        const auto sample = sample_linear_model(spec.p, n, seed, spec.design, spec.rho);
        const ZVector z = compute_z(sample.data, true);
        const FitResult fitted = fit(z, fit_options);
        const Graph g = bayes_edges(z, fitted.posteriors, tau);
        std::vector<Edge> incident;
        for (const Edge& e : g.edges()) {
          if (e.k == sample.response) incident.push_back(e);
        }
        ev = evaluate(Graph(g.p(), std::move(incident)), sample.truth);
        threshold = g.z_threshold;
      } else {
        const DataMatrix data = sample_mvn(target.corr, n, seed);
        const ZVector z = compute_z(data, true);
        const FitResult fitted = fit(z, fit_options);
        const Graph g = bayes_edges(z, fitted.posteriors, tau);
        ev = evaluate(g, target.truth);
        threshold = g.z_threshold;
      }
      RepResult& out = result.per_rep[r];
      out.tp = ev.tp;
      out.fp = ev.fp;
      out.fn = ev.fn;
      out.tpr = ev.tpr;
      out.fdr = ev.fdr;
      out.threshold = threshold.value_or(std::numeric_limits<double>::quiet_NaN());
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (const RepResult& rr : result.per_rep) {
    result.tpr += rr.tpr;
    result.fdr += rr.fdr;
  }
  result.tpr /= static_cast<double>(reps);
  result.fdr /= static_cast<double>(reps);
  return result;
}

namespace {

Scenario scenario_from_map(const std::map<std::string, std::string>& kv) {
  Scenario s;
  auto get = [&](const std::string& key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto to_double = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw InputError("scenario key '" + key + "': cannot parse '" + v + "'");
    }
  };
  auto to_size = [&](const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0 || d != std::floor(d)) throw InputError("scenario key '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(d);
  };
  auto to_bool = [](const std::string& key, const std::string& v) {
    const std::string l = lower(v);
    if (l == "true" || l == "1" || l == "yes") return true;
    if (l == "false" || l == "0" || l == "no") return false;
    throw InputError("scenario key '" + key + "' must be a boolean");
  };

  const std::string* kind = get("structure");
  if (!kind) throw InputError("scenario is missing 'structure'");
  s.spec.kind = parse_structure(*kind);
  for (const auto& [key, value] : kv) {
    if (key == "structure") continue;
    if (key == "rho") s.spec.rho = to_double(key, value);
    else if (key == "n") s.n = to_size(key, value);
    else if (key == "p") s.spec.p = to_size(key, value);
    else if (key == "size") s.spec.size_param = to_size(key, value);
    else if (key == "seed") s.spec.seed = to_size(key, value);
    else if (key == "reps") s.reps = to_size(key, value);
    else if (key == "tau") s.tau = to_double(key, value);
    else if (key == "design") s.spec.design = parse_design(value);
    else if (key == "estimate_ess") s.fit.estimate_ess = to_bool(key, value);
    else if (key == "estimate_cdelta") s.fit.estimate_c_delta = to_bool(key, value);
    else if (key == "delta") s.fit.delta = to_double(key, value);
    else throw InputError("unknown scenario key '" + key + "'");
  }
  s.spec.validate();
  if (s.n < 3) throw InputError("scenario N must be at least 3");
  if (s.reps < 1) throw InputError("scenario reps must be at least 1");
  return s;
}

std::map<std::string, std::string> json_to_map(const nlohmann::json& obj) {
  if (!obj.is_object()) throw InputError("scenario JSON entries must be objects");
  std::map<std::string, std::string> kv;
  for (const auto& [key, value] : obj.items()) {
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      text = value.get<bool>() ? "true" : "false";
    } else if (value.is_number_integer() || value.is_number_unsigned()) {
      text = std::to_string(value.get<long long>());
    } else if (value.is_number()) {
      std::ostringstream os;
      os.precision(17);
      os << value.get<double>();
      text = os.str();
    } else {
      throw InputError("scenario key '" + key + "' has an unsupported value");
    }
    kv[lower(key)] = text;
  }
  return kv;
}

}  // namespace

std::vector<Scenario> parse_scenarios(const std::string& text) {
  std::vector<Scenario> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw InputError("scenario config is empty");

  if (text[first] == '{' || text[first] == '[') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(std::string("scenario JSON: ") + e.what());
    }
    if (doc.is_array()) {
      for (const auto& entry : doc) out.push_back(scenario_from_map(json_to_map(entry)));
    } else {
      out.push_back(scenario_from_map(json_to_map(doc)));
    }
    return out;
  }

  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::string> current;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (!current.empty()) out.push_back(scenario_from_map(current));
    current.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
      flush();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("scenario line " + std::to_string(lineno) + ": expected key=value");
    auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = lower(strip(line.substr(0, eq)));
    if (current.count(key)) flush();
    current[key] = strip(line.substr(eq + 1));
  }
  flush();
  if (out.empty()) throw InputError("scenario config defines no scenarios");
  return out;
}

std::string settings_label(const CorrelationSpec& spec) {
  const std::string size = std::to_string(spec.size_param);
  switch (spec.kind) {
    case Structure::clusters: return "Cluster size " + size;
    case Structure::random_clusters: return "40 clusters of random size";
    case Structure::band: return "Band width " + size;
    case Structure::cycle: return "Length " + size;
    case Structure::ar1: return "AR(1)";
    case Structure::block_ar1: return "AR(1) block of " + size;
    case Structure::hub: return "Hub size " + size;
    case Structure::linear_model:
      return spec.design == LinearDesign::independent ? "Independent predictors"
             : spec.design == LinearDesign::ar1_block ? "AR(1) first 15 predictors"
                                                      : "Hub first 15 predictors";
    case Structure::identity: return "No edges";
  }
  return "";
}

void write_results_header(std::ostream& out) { out << "structure,rho,N,P,settings,TPR,FDR\n"; }

void write_result_row(std::ostream& out, const Scenario& scenario, const ScenarioResult& result) {
  char tpr[32];
  char fdr[32];
  char rho[32];
  std::snprintf(tpr, sizeof tpr, "%.3f", result.tpr);
  std::snprintf(fdr, sizeof fdr, "%.2e", result.fdr);
  std::snprintf(rho, sizeof rho, "%g", scenario.spec.rho);
  out << structure_name(scenario.spec.kind) << ',' << rho << ',' << scenario.n << ',' << scenario.spec.p << ','
      << settings_label(scenario.spec) << ',' << tpr << ',' << fdr << '\n';
}

}  // namespace betamix
