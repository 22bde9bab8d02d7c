#pragma once

#include "frailtyfit/data.hpp"
#include "frailtyfit/frailty_model.hpp"
#include "frailtyfit/parameters.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace frailtyfit {

// Breslow-type baseline cumulative hazard estimate at fixed gamma, built in
// one forward pass over the event times:
//   jump_k = d_k / sum_i psi_i(tau_{k-1}) R_i(tau_k),
// where psi_i(tau_{k-1}) is the posterior frailty mean of cluster i given its
// history strictly before tau_k and R_i(t) = sum_j Y_ij(t) exp(beta' Z_ij).
struct HazardProfile {
  StepFunction lambda;
  std::vector<double> per_knot_denominators;
  std::vector<double> jumps;  // d_k / per_knot_denominators[k], unrounded
  ParameterVector gamma_at;
  std::size_t bundle_evaluations = 0;

  // n x K, column k describes knot k (0-based): psi_i, the posterior
  // variance eta_i = -d psi_i / dh and d psi_i / d theta given the history
  // before tau_k, and R_i(tau_k).
  Eigen::MatrixXd psi_before;
  Eigen::MatrixXd eta_before;
  Eigen::MatrixXd dpsi_dtheta_before;
  Eigen::MatrixXd risk_weight;

  std::size_t K() const { return per_knot_denominators.size(); }
  double jump(std::size_t k) const { return jumps[k]; }
};

// Derivatives of the jumps of the profile with respect to gamma.
struct HazardSensitivity {
  Eigen::MatrixXd djump_dbeta;    // K x p
  Eigen::VectorXd djump_dtheta;   // K (zero for the degenerate frailty)
  Eigen::MatrixXd dlambda_dbeta;  // K x p, running sums of djump_dbeta
  Eigen::VectorXd dlambda_dtheta; // K
};

// theta is read from gamma; fm supplies the family (its own theta is ignored).
HazardProfile profile_hazard(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma);

HazardSensitivity hazard_sensitivity(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                                     const HazardProfile& hp);

// Lambda(T_s) for every subject s (flat order).
std::vector<double> lambda_at_exit(const Dataset& ds, const HazardProfile& hp);

// d H_s(T_s) / d gamma for every subject s, H_s(t) = Lambda(T_s ^ t) exp(beta' Z_s).
// Columns beta_1..beta_p then theta (theta only when the frailty has one).
Eigen::MatrixXd exposure_gradients(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                                   const HazardProfile& hp, const HazardSensitivity& hs);

// The frailty family at theta; the degenerate law is returned unchanged.
FrailtyModel at_theta(const FrailtyModel& fm, double theta);

}  // namespace frailtyfit
