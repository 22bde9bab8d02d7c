#pragma once

#include "frailtyfit/data.hpp"
#include "frailtyfit/frailty_model.hpp"
#include "frailtyfit/hazard.hpp"
#include "frailtyfit/parameters.hpp"
#include "frailtyfit/score.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace frailtyfit {

// Jacobian of gamma -> U(gamma, Lambda(., gamma)) including the dependence of
// the profiled hazard on gamma. q x q with q = parameter_count(ds, fm).
Eigen::MatrixXd compute_D(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                          const HazardProfile& hp, const HazardSensitivity& hs);

// n^-1 sum_i xi_i xi_i'.
Eigen::MatrixXd compute_V(const Eigen::MatrixXd& xi_star);

// How the effect of estimating Lambda on U is linearised.
//
// product_integral: the closed form pi(s) p(s-) / Y(s) built from Upsilon,
// Omega and the product p(t). exact: solves the linear Volterra equation for
// Lambda_hat - Lambda directly, by a backward recursion over the knots. See
// README for why exact is the default.
enum class HazardCorrection { exact, product_integral };

HazardCorrection parse_hazard_correction(const std::string& text);
std::string to_string(HazardCorrection method);

// Everything the hazard-estimation correction needs, at (gamma, Lambda).
//
// Knot-indexed vectors have K entries. "Termination times" are the distinct
// follow-up times T_ij (events and censorings), ascending.
struct MartingaleWorkspace {
  Eigen::MatrixXd eta1;           // n x K, posterior variance before each knot
  Eigen::VectorXd script_y;       // n^-1 sum_i psi_i R_i(tau_k)
  Eigen::VectorXd upsilon;        // Upsilon(tau_k)
  Eigen::MatrixXd omega_prefix;   // n x (K+1); Omega_s(u, t) = rr_s (col c(t) - col c(u)) of row cluster(s)
  std::vector<double> termination_times;
  Eigen::VectorXd phat_termination;  // p(u) at each termination time
  Eigen::VectorXd phat_before;       // p(tau_k-)
  Eigen::MatrixXd q;                 // N x q, Q_s per subject
  Eigen::MatrixXd pi;                // K x q, pi(tau_k)
  Eigen::MatrixXd alpha;             // K x q, weight of sum_j dM_ij(tau_k) in mu_i
  Eigen::MatrixXd cluster_dm;        // n x K, sum_j dM_ij(tau_k)
  Eigen::VectorXd mhat;              // M_s(tau) per subject
  bool reliable = true;
  std::string diagnostic;
  std::vector<std::string> warnings;
};

MartingaleWorkspace compute_phat_pi(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                                    const HazardProfile& hp, HazardCorrection method = HazardCorrection::exact);

// n^-1 sum_k alpha_k alpha_k' d_k. For the product-integral correction
// alpha_k = pi(tau_k) p(tau_k-) / Y(tau_k).
Eigen::MatrixXd compute_G(const Dataset& ds, const MartingaleWorkspace& ws);

// mu*_i = sum_k alpha_k sum_j dM_ij(tau_k), n x q.
Eigen::MatrixXd compute_mu_star(const MartingaleWorkspace& ws);

// n^-1 sum_i (xi_i mu_i' + mu_i xi_i').
Eigen::MatrixXd compute_C(const Eigen::MatrixXd& xi_star, const Eigen::MatrixXd& mu_star);

struct SandwichParts {
  Eigen::MatrixXd D, V, G, C;
  Eigen::MatrixXd sandwich;
  Eigen::MatrixXd xi_star, mu_star;
  Eigen::VectorXd mhat;  // M_s(tau) per subject
  bool reliable = true;
  std::string diagnostic;
  std::vector<std::string> warnings;
};

// n^-1 D^-1 (V + G + C) D^-T, symmetrised. Throws LinearAlgebraError when D
// is singular.
Eigen::MatrixXd sandwich(const Eigen::MatrixXd& D, const Eigen::MatrixXd& middle, std::size_t n);

// All parts at (gamma, profile at gamma).
SandwichParts sandwich_parts(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                             const HazardProfile& hp, const HazardSensitivity& hs,
                             HazardCorrection method = HazardCorrection::exact);

}  // namespace frailtyfit
