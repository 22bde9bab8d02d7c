#pragma once

#include "frailtyfit/covariance.hpp"
#include "frailtyfit/data.hpp"
#include "frailtyfit/errors.hpp"
#include "frailtyfit/frailty_model.hpp"
#include "frailtyfit/hazard.hpp"
#include "frailtyfit/parameters.hpp"

#include <Eigen/Core>

#include <memory>
#include <string>
#include <vector>

namespace frailtyfit {

struct SolverConfig {
  Eigen::VectorXd beta0;  // empty: zeros
  double theta0 = 1.0;
  double tol_score = 1e-8;  // on the sup norm of U
  int max_iter = 50;
  int step_halvings = 20;
  bool fd_fallback = true;  // finite-difference Jacobian when D is near singular
  double theta_min = 1e-6;
  double theta_max = 1e3;
  HazardCorrection hazard_correction = HazardCorrection::exact;
  // Start beta at a psi == 1 (Cox) fit when beta0 is empty and p > 0.
  bool cox_start = false;

  void validate() const;
};

struct FitResult {
  ParameterVector gamma_hat;
  HazardProfile hazard;
  Eigen::VectorXd score;
  double score_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string diagnostic;
  std::vector<std::string> warnings;

  // Filled on convergence.
  Eigen::MatrixXd covariance;  // (beta, theta) scale
  bool covariance_reliable = false;
  SandwichParts parts;
  Eigen::MatrixXd xi_star, mu_star;
  double martingale_sum = 0.0;  // sum over subjects of M_s(tau)

  Eigen::VectorXd estimates() const;
  Eigen::VectorXd std_errors() const;
};

// Thrown by fit() when the iteration stops without meeting tol_score; the
// last iterate is kept.
class ConvergenceError : public EstimationError {
 public:
  explicit ConvergenceError(FitResult partial);
  const FitResult& partial() const { return *partial_; }

 private:
  std::shared_ptr<const FitResult> partial_;
};

// Solves U(gamma, Lambda(., gamma)) = 0 by damped Newton on (beta, log theta).
FitResult fit(const Dataset& ds, const FrailtyModel& fm, const SolverConfig& cfg = {});

// U(gamma, Lambda(., gamma)) with the profile rebuilt at gamma.
Eigen::VectorXd profile_score(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma);

// Central-difference Jacobian of profile_score with respect to (beta, theta).
Eigen::MatrixXd profile_score_jacobian_fd(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                                          double rel_step = 1e-6);

}  // namespace frailtyfit
