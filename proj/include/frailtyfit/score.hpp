#pragma once

#include "frailtyfit/data.hpp"
#include "frailtyfit/frailty_model.hpp"
#include "frailtyfit/parameters.hpp"

#include <Eigen/Core>

#include <vector>

namespace frailtyfit {

// Per-cluster quantities at the end of follow-up, for a given hazard L:
// N_i(tau), H_i(tau) = sum_j L(T_ij) exp(beta' Z_ij), the covariate-weighted
// exposure sum_j H_ij(T_ij) Z_ij, and the phi bundle at (N_i, H_i).
struct ClusterTerminal {
  std::vector<int> events;
  std::vector<double> exposure;
  std::vector<double> subject_exposure;  // H_s(T_s), flat subject order
  Eigen::MatrixXd weighted_z;            // n x p
  std::vector<PhiBundle> bundles;
};

ClusterTerminal terminal_state(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                               const StepFunction& L);

// Normalized score U = n^-1 sum_i xi_i. Rows of per_cluster_xi are xi_i:
//   xi_ir       = sum_j delta_ij Z_ijr - psi_i sum_j H_ij(T_ij) Z_ijr
//   xi_i(p+1)   = phi_1^(theta) / phi_1
// The theta entry is absent for the degenerate frailty.
struct ScoreVector {
  Eigen::VectorXd u;
  Eigen::MatrixXd per_cluster_xi;
};

ScoreVector score(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma, const StepFunction& L);
ScoreVector score(const Dataset& ds, const FrailtyModel& fm, const ClusterTerminal& state);

// Number of estimated parameters: p, plus theta unless the frailty is degenerate.
inline Eigen::Index parameter_count(const Dataset& ds, const FrailtyModel& fm) {
  return static_cast<Eigen::Index>(ds.p()) + (fm.has_theta() ? 1 : 0);
}

}  // namespace frailtyfit
