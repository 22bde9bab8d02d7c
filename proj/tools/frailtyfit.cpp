#include "frailtyfit/data.hpp"
#include "frailtyfit/errors.hpp"
#include "frailtyfit/frailty_model.hpp"
#include "frailtyfit/report.hpp"
#include "frailtyfit/simulate.hpp"
#include "frailtyfit/solver.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace frailtyfit;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_input = 1;
constexpr int exit_no_convergence = 2;

struct FitFlags {
  std::string frailty = "gamma";
  double theta0 = 1.0;
  std::string beta0;
  double tol = 1e-8;
  int max_iter = 50;
  int nodes = FrailtyModel::default_nodes;
  std::string hazard_correction = "exact";
  bool cox_start = false;
};

struct SimFlags {
  int n = 100;
  int size = 2;
  std::string beta = "0";
  double theta = 1.0;
  std::string baseline = "exp:1.0";
  std::string censoring = "none";
  std::string covariates;
  std::uint64_t seed = 1;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

Eigen::VectorXd parse_vector(const std::string& text, const std::string& flag) {
  if (text.empty()) return {};
  const auto parts = split(text, ',');
  Eigen::VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::size_t used = 0;
    try {
      v(static_cast<Eigen::Index>(i)) = std::stod(parts[i], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != parts[i].size())
      throw ValidationError(flag + ": '" + parts[i] + "' is not a number");
  }
  return v;
}

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
  cmd->add_option("--frailty", f.frailty, "Frailty law")
      ->check(CLI::IsMember({"gamma", "lognormal", "invgauss", "none"}))
      ->capture_default_str();
  cmd->add_option("--theta0", f.theta0, "Starting theta")->capture_default_str();
  cmd->add_option("--beta0", f.beta0, "Starting beta, comma separated (default zeros)");
  cmd->add_option("--tol", f.tol, "Tolerance on the sup norm of the score")->capture_default_str();
  cmd->add_option("--max-iter", f.max_iter, "Newton iteration limit")->capture_default_str();
  cmd->add_option("--nodes", f.nodes, "Quadrature nodes for non-gamma frailty")->capture_default_str();
  cmd->add_option("--hazard-correction", f.hazard_correction,
                  "Baseline-hazard term of the covariance: exact or product")
      ->check(CLI::IsMember({"exact", "product"}))
      ->capture_default_str();
  cmd->add_flag("--cox-start", f.cox_start, "Start beta at the Cox fit");
}

void add_sim_flags(CLI::App* cmd, SimFlags& s, std::string& frailty) {
  cmd->add_option("--n", s.n, "Number of clusters")->capture_default_str();
  cmd->add_option("--size", s.size, "Cluster size")->capture_default_str();
  cmd->add_option("--beta", s.beta, "Regression coefficients, comma separated")->capture_default_str();
  if (cmd->get_option_no_throw("--frailty") == nullptr)
    cmd->add_option("--frailty", frailty, "Frailty law")
        ->check(CLI::IsMember({"gamma", "lognormal", "invgauss", "none"}))
        ->capture_default_str();
  cmd->add_option("--theta", s.theta, "Frailty variance")->capture_default_str();
  cmd->add_option("--baseline", s.baseline, "exp:RATE or weibull:SHAPE,SCALE")->capture_default_str();
  cmd->add_option("--censoring", s.censoring, "none, exp:RATE, uniform:C or admin:T")->capture_default_str();
  cmd->add_option("--covariates", s.covariates,
                  "Covariate laws, comma separated: bernoulli:Q or normal (default bernoulli:0.5)");
  cmd->add_option("--seed", s.seed, "Random seed")->capture_default_str();
}

SolverConfig solver_config(const FitFlags& f) {
  SolverConfig c;
  c.beta0 = parse_vector(f.beta0, "--beta0");
  c.theta0 = f.theta0;
  c.tol_score = f.tol;
  c.max_iter = f.max_iter;
  c.hazard_correction = parse_hazard_correction(f.hazard_correction);
  c.cox_start = f.cox_start;
  c.validate();
  return c;
}

SimConfig sim_config(const SimFlags& s, const std::string& frailty) {
  SimConfig c;
  c.n_clusters = s.n;
  c.cluster_size = s.size;
  c.beta = parse_vector(s.beta, "--beta");
  if (c.beta.size() == 0) throw ValidationError("--beta needs at least one coefficient");
  c.frailty = frailty;
  c.theta = s.theta;
  c.baseline = parse_baseline(s.baseline);
  c.censoring = parse_censoring(s.censoring);
  if (!s.covariates.empty())
    for (const auto& law : split(s.covariates, ',')) c.covariates.push_back(parse_covariate_law(law));
  c.seed = s.seed;
  c.validate();
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

struct FitArgs {
  std::string input;
  std::string output;
  std::string format = "json";
  std::string hazard_output;
  FitFlags fit;
};

void emit_fit(const FitArgs& a, const Dataset& ds, const FitResult& fr, const FrailtyModel& fm,
              const SolverConfig& cfg) {
  if (a.format == "csv") {
    std::ostringstream out;
    write_parameter_csv(ds, fr, fm, out);
    write_text(a.output, out.str());
  } else {
    write_text(a.output, dump_json(fit_output_json(ds, fr, FitEcho{a.input, &fm, &cfg})));
  }
  if (!a.hazard_output.empty()) {
    std::ostringstream out;
    write_hazard_csv(fr.hazard.lambda, out);
    write_text(a.hazard_output, out.str());
  }
}

int cmd_fit(const FitArgs& a) {
  const Dataset ds = read_csv_file(a.input);
  const SolverConfig cfg = solver_config(a.fit);
  const FrailtyModel fm = FrailtyModel::from_name(a.fit.frailty, a.fit.theta0, a.fit.nodes);
  try {
    const FitResult fr = fit(ds, fm, cfg);
    for (const auto& w : fr.warnings) std::cerr << "warning: " << w << '\n';
    emit_fit(a, ds, fr, fm, cfg);
    return exit_ok;
  } catch (const ConvergenceError& e) {
    std::cerr << "frailtyfit: " << e.what() << '\n';
    emit_fit(a, ds, e.partial(), fm, cfg);
    return exit_no_convergence;
  }
}

struct SimArgs {
  SimFlags sim;
  std::string frailty = "gamma";
  std::string output;
};

int cmd_simulate(const SimArgs& a) {
  const Dataset ds = generate(sim_config(a.sim, a.frailty));
  std::ostringstream out;
  emit_csv(ds, out);
  write_text(a.output, out.str());
  return exit_ok;
}

struct McArgs {
  int reps = 100;
  int jobs = 0;
  SimFlags sim;
  FitFlags fit;
  std::string output;
};

int cmd_mc(const McArgs& a) {
  if (a.reps < 1) throw ValidationError("--reps must be at least 1");
  if (a.jobs < 0) throw ValidationError("--jobs must be nonnegative");
  const SimConfig sim = sim_config(a.sim, a.fit.frailty);
  const SolverConfig cfg = solver_config(a.fit);
  int jobs = a.jobs > 0 ? a.jobs : default_thread_count();
  if (std::getenv("FRAILTY_FIT_THREADS")) jobs = std::min(jobs, default_thread_count());
  const McReport rep = run_mc(sim, a.reps, cfg, jobs, a.fit.nodes);
  write_text(a.output, dump_json(mc_report_json(rep, sim, cfg)));
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shared frailty survival models by pseudo full likelihood"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a clustered survival dataset");
  fit_cmd->add_option("--input", fa.input, "CSV with columns cluster,time,status,z1,...")->required();
  fit_cmd->add_option("--output", fa.output, "Output path (default stdout)");
  fit_cmd->add_option("--format", fa.format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  fit_cmd->add_option("--hazard-output", fa.hazard_output, "Also write the cumulative baseline hazard as CSV");
  add_fit_flags(fit_cmd, fa.fit);

  SimArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a clustered survival dataset");
  add_sim_flags(sim_cmd, sa.sim, sa.frailty);
  sim_cmd->add_option("--output", sa.output, "Output CSV path (default stdout)");

  McArgs ma;
  auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo study: simulate and fit repeatedly");
  mc_cmd->add_option("--reps", ma.reps, "Replications")->capture_default_str();
  mc_cmd->add_option("--jobs", ma.jobs, "Worker threads (default FRAILTY_FIT_THREADS or all cores)");
  add_fit_flags(mc_cmd, ma.fit);
  add_sim_flags(mc_cmd, ma.sim, ma.fit.frailty);
  mc_cmd->add_option("--output", ma.output, "Output JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? exit_ok : exit_input;
  }

  try {
    if (*fit_cmd) return cmd_fit(fa);
    if (*sim_cmd) return cmd_simulate(sa);
    return cmd_mc(ma);
  } catch (const ParseError& e) {
    std::cerr << "frailtyfit: parse error: " << e.what() << '\n';
  } catch (const SchemaError& e) {
    std::cerr << "frailtyfit: schema error: " << e.what() << '\n';
  } catch (const ValidationError& e) {
    std::cerr << "frailtyfit: invalid input: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "frailtyfit: " << e.what() << '\n';
  }
  return exit_input;
}
