#pragma once

#include "frailtyfit/data.hpp"
#include "frailtyfit/solver.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace frailtyfit {

struct Baseline {
  enum class Kind { exponential, weibull } kind = Kind::exponential;
  double rate = 1.0;   // exponential: Lambda0(t) = rate t
  double shape = 1.0;  // weibull: Lambda0(t) = (t / scale)^shape
  double scale = 1.0;

  double cumulative(double t) const;
  double inverse(double x) const;
};

struct Censoring {
  enum class Kind { none, exponential, uniform, admin } kind = Kind::none;
  double value = 0.0;  // exponential rate, uniform upper end c, or admin time
};

struct CovariateLaw {
  enum class Kind { bernoulli, normal } kind = Kind::bernoulli;
  double q = 0.5;
};

struct SimConfig {
  int n_clusters = 100;
  int cluster_size = 2;
  Eigen::VectorXd beta;
  std::string frailty = "gamma";  // gamma, lognormal, invgauss, none
  double theta = 1.0;
  Baseline baseline;
  Censoring censoring;
  std::vector<CovariateLaw> covariates;  // one per beta entry; empty: all bernoulli(0.5)
  std::uint64_t seed = 1;

  void validate() const;
};

// Parsers for the command-line forms "exp:1.0", "weibull:1.5,2", "none",
// "exp:0.3", "uniform:4", "admin:2", "bernoulli:0.5", "normal".
Baseline parse_baseline(const std::string& text);
Censoring parse_censoring(const std::string& text);
CovariateLaw parse_covariate_law(const std::string& text);

// Clusters "1".."n", covariates z1..zp; deterministic in cfg.seed.
Dataset generate(const SimConfig& cfg);

// Seed of replication r: splitmix64 of (seed + (r + 1) * 0x9E3779B97F4A7C15).
// Depends only on (seed, r), so replications can run in any order.
std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t r);

struct McReport {
  int replications = 0;
  int successes = 0;
  int failures = 0;
  std::vector<std::string> names;
  Eigen::VectorXd truth;
  Eigen::VectorXd mean_estimates;
  Eigen::VectorXd empirical_sd;
  Eigen::VectorXd mean_reported_se;
  Eigen::VectorXd coverage_95;
  Eigen::VectorXd mean_abs_error;
  double max_abs_martingale_sum = 0.0;  // over successful fits
  Eigen::MatrixXd estimates;  // successes x q, replication order
  Eigen::MatrixXd std_errors;
  std::vector<std::string> failure_messages;  // "replication r: message"
};

// Generate + fit, reps times. threads = 0 reads FRAILTY_FIT_THREADS, else
// uses the hardware concurrency. The report does not depend on threads.
// nodes sets the quadrature size of the fitted frailty model.
McReport run_mc(const SimConfig& cfg, int reps, const SolverConfig& solver_cfg, int threads = 0,
                int nodes = FrailtyModel::default_nodes);

int default_thread_count();

}  // namespace frailtyfit
