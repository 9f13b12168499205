// betamix: correlation-network discovery from the command line.
//
//   betamix fit      --input data.csv [--estimate-ess] [--estimate-cdelta] --output fit.json
//   betamix edges    --input data.csv [--tau F | --epsilon F] --output edges.csv
//   betamix cluster  --input data.csv --output clusters.csv
//   betamix classify --input data.csv --transpose --labels train.csv --default-label bad
//   betamix simulate --input scenarios.txt --output table.csv
//   betamix plotdata --input fit.json --output fig.csv
//   betamix threshold --input data.csv --epsilon 1e-5
//
// Exit codes: 0 success, 1 input error, 2 numeric non-convergence.

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "betamix/angle_engine.hpp"
#include "betamix/beta_mixture.hpp"
#include "betamix/errors.hpp"
#include "betamix/graph_builder.hpp"
#include "betamix/report.hpp"
#include "betamix/simulation.hpp"
#include "betamix/special_functions.hpp"

namespace {

using namespace betamix;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumeric = 2;

struct RunConfig {
  std::string subcommand;
  std::string input;
  std::string output;
  std::string labels;
  bool transpose = false;
  bool no_center = false;
  bool estimate_ess = false;
  bool estimate_cdelta = false;
  double delta = 1e-3;
  double tau = 0.01;
  double epsilon = 1e-5;
  bool tau_given = false;
  bool epsilon_given = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 0;
  std::size_t min_neighbors = 1;
  std::string default_label;
};

// Writes to `path` through a temporary file and rename, or to stdout when
// path is empty.
void write_output(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path.empty()) {
    body(std::cout);
    std::cout.flush();
    return;
  }
  const std::filesystem::path target(path);
  std::filesystem::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    body(out);
    out.flush();
    if (!out) throw InputError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, target);
}

std::string sidecar_z_path(const std::string& fit_path) { return fit_path + ".z.csv"; }

FitOptions fit_options(const RunConfig& cfg) {
  FitOptions opts;
  opts.estimate_ess = cfg.estimate_ess;
  opts.estimate_c_delta = cfg.estimate_cdelta;
  opts.delta = cfg.delta;
  return opts;
}

void require_input(const RunConfig& cfg) {
  if (cfg.input.empty()) throw InputError(cfg.subcommand + " requires --input");
}

struct Pipeline {
  DataMatrix data;
  ZVector z;
  FitResult fitted;
};

Pipeline run_fit(const RunConfig& cfg) {
  require_input(cfg);
  Pipeline p;
  p.data = ingest(cfg.input, cfg.transpose, NaPolicy::error);
  p.z = compute_z(p.data, !cfg.no_center);
  p.fitted = fit(p.z, fit_options(cfg));
  if (!p.fitted.converged) {
    std::cerr << "warning: EM stopped after " << p.fitted.iterations << " iterations without converging\n";
  }
  return p;
}

Graph edges_for(const RunConfig& cfg, const Pipeline& p) {
  if (cfg.tau_given && cfg.epsilon_given) throw InputError("give exactly one of --tau and --epsilon");
  if (cfg.epsilon_given) {
    return frequentist_edges(p.z, p.fitted.params.nu, cfg.epsilon, p.fitted.posteriors, p.data.column_names());
  }
  return bayes_edges(p.z, p.fitted.posteriors, cfg.tau, p.data.column_names());
}

int status(const Pipeline& p) { return p.fitted.converged ? kExitOk : kExitNumeric; }

int cmd_fit(const RunConfig& cfg) {
  const Pipeline p = run_fit(cfg);
  const FitSummary summary = summarize_fit(p.fitted, p.z, cfg.tau, cfg.epsilon);
  write_output(cfg.output, [&](std::ostream& out) { out << std::setw(2) << to_json(summary) << '\n'; });
  if (!cfg.output.empty()) {
    write_output(sidecar_z_path(cfg.output),
                 [&](std::ostream& out) { write_z_file(out, p.z, p.data.column_names()); });
  }
  return status(p);
}

int cmd_edges(const RunConfig& cfg) {
  if (cfg.tau_given && cfg.epsilon_given) throw InputError("give exactly one of --tau and --epsilon");
  const Pipeline p = run_fit(cfg);
  const Graph g = edges_for(cfg, p);
  write_output(cfg.output, [&](std::ostream& out) { write_edge_list(out, g); });
  return status(p);
}

int cmd_cluster(const RunConfig& cfg) {
  if (cfg.tau_given && cfg.epsilon_given) throw InputError("give exactly one of --tau and --epsilon");
  const Pipeline p = run_fit(cfg);
  const Graph g = edges_for(cfg, p);
  const ClusterAssignment clusters = centrality_clusters(g);
  write_output(cfg.output, [&](std::ostream& out) { write_clusters(out, g, clusters); });
  return status(p);
}

int cmd_classify(const RunConfig& cfg) {
  if (cfg.labels.empty()) throw InputError("classify requires --labels");
  if (cfg.default_label.empty()) throw InputError("classify requires --default-label");
  if (cfg.tau_given && cfg.epsilon_given) throw InputError("give exactly one of --tau and --epsilon");
  std::ifstream labels_in(cfg.labels);
  if (!labels_in) throw InputError("cannot open '" + cfg.labels + "'");
  const auto named = read_labels(labels_in);

  const Pipeline p = run_fit(cfg);
  const Graph g = edges_for(cfg, p);
  std::map<std::size_t, std::string> train;
  for (const auto& [name, label] : named) train[g.node_by_name(name)] = label;
  const auto predicted = classify_majority(g, train, cfg.min_neighbors, cfg.default_label);
  write_output(cfg.output, [&](std::ostream& out) {
    out << "node,label\n";
    for (const auto& [node, label] : predicted) out << g.node_names()[node] << ',' << label << '\n';
  });
  return status(p);
}

int cmd_simulate(const RunConfig& cfg) {
  require_input(cfg);
  std::ifstream in(cfg.input);
  if (!in) throw InputError("cannot open '" + cfg.input + "'");
  std::stringstream text;
  text << in.rdbuf();
  auto scenarios = parse_scenarios(text.str());

  std::ostringstream table;
  write_results_header(table);
  for (auto& s : scenarios) {
    if (cfg.seed_given) s.spec.seed = cfg.seed;
    if (cfg.estimate_ess) s.fit.estimate_ess = true;
    if (cfg.estimate_cdelta) s.fit.estimate_c_delta = true;
    if (cfg.tau_given) s.tau = cfg.tau;
    const ScenarioResult result = run_scenario(s.spec, s.n, s.reps, s.fit, s.tau);
    if (result.repaired) {
      std::cerr << "note: " << structure_name(s.spec.kind) << " rho=" << s.spec.rho
                << " target was not positive definite; eigenvalues clipped at 1e-6\n";
    }
    write_result_row(table, s, result);
  }
  write_output(cfg.output, [&](std::ostream& out) { out << table.str(); });
  return kExitOk;
}

int cmd_plotdata(const RunConfig& cfg) {
  require_input(cfg);
  std::ifstream fit_in(cfg.input);
  if (!fit_in) throw InputError("cannot open fit summary '" + cfg.input + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(fit_in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("fit summary is not valid JSON: ") + e.what());
  }
  const FitSummary summary = fit_summary_from_json(j);
  std::ifstream z_in(sidecar_z_path(cfg.input));
  if (!z_in) throw InputError("cannot open z file '" + sidecar_z_path(cfg.input) + "'");
  const auto z = read_z_file(z_in);
  const PlotData data = make_plot_data(z, summary.params, cfg.tau);
  write_output(cfg.output, [&](std::ostream& out) { write_plot_data(out, data); });
  return kExitOk;
}

int cmd_threshold(const RunConfig& cfg) {
  require_input(cfg);
  double nu = 0.0;
  int code = kExitOk;
  if (std::filesystem::path(cfg.input).extension() == ".json") {
    std::ifstream in(cfg.input);
    if (!in) throw InputError("cannot open '" + cfg.input + "'");
    try {
      nu = fit_summary_from_json(nlohmann::json::parse(in)).params.nu;
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(std::string("fit summary is not valid JSON: ") + e.what());
    }
  } else if (cfg.estimate_ess) {
    const Pipeline p = run_fit(cfg);
    nu = p.fitted.params.nu;
    code = status(p);
  } else {
    nu = static_cast<double>(ingest(cfg.input, cfg.transpose, NaPolicy::error).n());
  }
  const double q = beta_quantile(cfg.epsilon, (nu - 1.0) / 2.0, 0.5);
  write_output(cfg.output, [&](std::ostream& out) {
    out << "nu,epsilon,z_threshold,abs_r_threshold\n" << std::setprecision(17) << nu << ',' << cfg.epsilon << ','
        << q << ',' << z_to_abs_r(q) << '\n';
  });
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"betamix: correlation networks from a two-group beta mixture"};
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--input", cfg.input, "Input path (data matrix, fit JSON or scenario config)");
  app.add_option("--output", cfg.output, "Output path (stdout when omitted)");
  app.add_option("--labels", cfg.labels, "Training labels (node,label) for classify");
  app.add_flag("--transpose", cfg.transpose, "Treat file rows as variables");
  app.add_flag("--no-center", cfg.no_center, "Use raw cosines instead of correlations");
  app.add_flag("--estimate-ess", cfg.estimate_ess, "Estimate the effective sample size");
  app.add_flag("--estimate-cdelta", cfg.estimate_cdelta, "Truncate the non-null support at C_delta");
  app.add_option("--delta", cfg.delta, "Non-null share allowed above C_delta")->check(CLI::Range(0.0, 1.0));
  auto* tau = app.add_option("--tau", cfg.tau, "Posterior null probability threshold")->check(CLI::Range(0.0, 1.0));
  auto* eps = app.add_option("--epsilon", cfg.epsilon, "Frequentist error rate")->check(CLI::Range(0.0, 1.0));
  auto* seed = app.add_option("--seed", cfg.seed, "Override scenario seeds");
  app.add_option("--threads", cfg.threads, "Worker threads (default: all available)")->check(CLI::NonNegativeNumber);
  app.add_option("--min-neighbors", cfg.min_neighbors, "Labeled neighbors required to vote");
  app.add_option("--default-label", cfg.default_label, "Label for ties and sparse neighborhoods");

  const std::map<std::string, std::function<int(const RunConfig&)>> commands = {
      {"fit", cmd_fit},         {"edges", cmd_edges},       {"simulate", cmd_simulate},
      {"cluster", cmd_cluster}, {"classify", cmd_classify}, {"plotdata", cmd_plotdata},
      {"threshold", cmd_threshold},
  };
  app.add_subcommand("fit", "Fit the mixture and write the JSON summary");
  app.add_subcommand("edges", "Write the edge list");
  app.add_subcommand("simulate", "Run simulation scenarios");
  app.add_subcommand("cluster", "Centrality-seeded clusters of the graph");
  app.add_subcommand("classify", "Majority-rule labels for unlabeled nodes");
  app.add_subcommand("plotdata", "Histogram and fitted densities for plotting");
  app.add_subcommand("threshold", "Frequentist z threshold for --epsilon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  cfg.subcommand = app.get_subcommands().front()->get_name();
  cfg.tau_given = tau->count() > 0;
  cfg.epsilon_given = eps->count() > 0;
  cfg.seed_given = seed->count() > 0;
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);

  try {
    return commands.at(cfg.subcommand)(cfg);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}
