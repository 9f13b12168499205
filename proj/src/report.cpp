#include "betamix/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "betamix/errors.hpp"
#include "betamix/special_functions.hpp"

namespace betamix {

FitSummary summarize_fit(const FitResult& fit, const ZVector& z, double tau, double epsilon) {
  FitSummary s;
  s.params = fit.params;
  s.loglik = fit.loglik();
  s.iterations = fit.iterations;
  s.converged = fit.converged;
  s.n = z.n_samples;
  s.p = z.index.p();
  s.m = z.size();
  s.z_threshold_bayes = bayes_z_threshold(z.z, fit.posteriors, tau);
  s.z_threshold_freq = beta_quantile(epsilon, (fit.params.nu - 1.0) / 2.0, 0.5);
  return s;
}

nlohmann::json to_json(const FitSummary& s) {
  nlohmann::json j;
  j["p0"] = s.params.p0;
  j["a"] = s.params.a;
  j["b"] = s.params.b;
  j["nu"] = s.params.nu;
  j["c_delta"] = s.params.c_delta;
  j["loglik"] = s.loglik;
  j["iterations"] = s.iterations;
  j["converged"] = s.converged;
  j["n"] = s.n;
  j["P"] = s.p;
  j["M"] = s.m;
  j["z_threshold_bayes"] = s.z_threshold_bayes ? nlohmann::json(*s.z_threshold_bayes) : nlohmann::json(nullptr);
  j["z_threshold_freq"] = s.z_threshold_freq;
  return j;
}

FitSummary fit_summary_from_json(const nlohmann::json& j) {
  try {
    FitSummary s;
    s.params.p0 = j.at("p0").get<double>();
    s.params.a = j.at("a").get<double>();
    s.params.b = j.at("b").get<double>();
    s.params.nu = j.at("nu").get<double>();
    s.params.c_delta = j.at("c_delta").get<double>();
    s.params.validate();
    s.loglik = j.at("loglik").get<double>();
    s.iterations = j.at("iterations").get<int>();
    s.converged = j.at("converged").get<bool>();
    s.n = j.at("n").get<std::size_t>();
    s.p = j.at("P").get<std::size_t>();
    s.m = j.at("M").get<std::size_t>();
    if (!j.at("z_threshold_bayes").is_null()) s.z_threshold_bayes = j.at("z_threshold_bayes").get<double>();
    s.z_threshold_freq = j.at("z_threshold_freq").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed fit summary: ") + e.what());
  } catch (const DomainError& e) {
    throw InputError(std::string("fit summary holds invalid parameters: ") + e.what());
  }
}

void write_z_file(std::ostream& out, const ZVector& z, const std::vector<std::string>& names) {
  out << "node_i,node_j,r,z\n" << std::setprecision(17);
  std::size_t j = 0;
  for (std::size_t i = 0; i + 1 < z.index.p(); ++i) {
    for (std::size_t k = i + 1; k < z.index.p(); ++k, ++j) {
      out << names[i] << ',' << names[k] << ',' << z.r[j] << ',' << z.z[j] << '\n';
    }
  }
}

std::vector<double> read_z_file(std::istream& in) {
  std::vector<double> z;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    const auto pos = line.rfind(',');
    if (pos == std::string::npos) throw InputError("z file line " + std::to_string(lineno) + ": missing z column");
    try {
      z.push_back(std::stod(line.substr(pos + 1)));
    } catch (const std::exception&) {
      throw InputError("z file line " + std::to_string(lineno) + ": cannot parse z");
    }
  }
  return z;
}

PlotData make_plot_data(std::span<const double> z, const MixtureParams& params, double tau, std::size_t bins) {
  params.validate();
  if (z.empty()) throw InputError("no z values to plot");
  if (bins < 1) throw InputError("need at least one histogram bin");

  const double zmin = *std::min_element(z.begin(), z.end());
  const double lo = std::floor(zmin * 100.0) / 100.0;
  const double width = (1.0 - lo) / static_cast<double>(bins);

  PlotData data;
  data.bin_width = width;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : z) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
    ++counts[b];
  }

  const double null_a = (params.nu - 1.0) / 2.0;
  auto null_cdf = [&](double x) { return reg_inc_beta(std::clamp(x, 0.0, 1.0), null_a, 0.5); };
  auto nonnull_cdf = [&](double x) {
    return reg_inc_beta(std::clamp(x / params.c_delta, 0.0, 1.0), params.a, params.b);
  };
  const double m = static_cast<double>(z.size());
  for (std::size_t b = 0; b < bins; ++b) {
    const double left = lo + width * static_cast<double>(b);
    const double right = b + 1 == bins ? 1.0 : left + width;
    PlotRow row;
    row.bin_center = left + 0.5 * width;
    row.histogram_density = static_cast<double>(counts[b]) / (m * width);
    row.null_density = params.p0 * (null_cdf(right) - null_cdf(left)) / width;
    row.nonnull_density = (1.0 - params.p0) * (nonnull_cdf(right) - nonnull_cdf(left)) / width;
    row.mixture_density = row.null_density + row.nonnull_density;
    data.rows.push_back(row);
  }
  const auto post = e_step(z, params);
  data.z_threshold = bayes_z_threshold(z, post, tau);
  return data;
}

void write_plot_data(std::ostream& out, const PlotData& data) {
  out << "bin_center,histogram_density,null_density,nonnull_density,mixture_density,z_threshold\n"
      << std::setprecision(17);
  for (const PlotRow& r : data.rows) {
    out << r.bin_center << ',' << r.histogram_density << ',' << r.null_density << ',' << r.nonnull_density << ','
        << r.mixture_density << ',';
    if (data.z_threshold) {
      out << *data.z_threshold;
    } else {
      out << "NA";
    }
    out << '\n';
  }
}

}  // namespace betamix
