#pragma once

#include "frailtyfit/data.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace frailtyfit {

enum class FrailtyKind { gamma, lognormal, inverse_gaussian, custom, degenerate };

std::string_view to_string(FrailtyKind kind);

// User-supplied frailty law f(w; theta). Only log_density is required; the
// theta-derivatives of log f default to central differences.
struct DensitySpec {
  std::string name = "custom";
  std::function<double(double w, double theta)> log_density;
  std::function<double(double w, double theta)> dlog_dtheta;
  std::function<double(double w, double theta)> d2log_dtheta2;
  // b in f(w) ~ C w^(b-1) as w -> 0, when such a b exists.
  std::function<std::optional<double>(double theta)> tail_exponent;
  std::function<bool(double theta)> admissible = [](double theta) { return theta > 0.0; };
};

// A parametric frailty law with its dependence parameter fixed at theta.
//
// Built-in kinds all have E(W) = 1:
//   gamma             shape = rate = 1/theta, Var(W) = theta
//   lognormal         log W ~ N(-theta/2, theta), theta is the log-scale variance
//   inverse_gaussian  mean 1, shape 1/theta, Var(W) = theta
//   degenerate        W == 1 (no theta; psi == 1, the Cox model)
//
// Construction checks numerically that the density integrates to one.
// Immutable; safe to share between threads.
class FrailtyModel {
 public:
  static constexpr int default_nodes = 64;

  static FrailtyModel gamma(double theta, int nodes = default_nodes);
  static FrailtyModel lognormal(double theta, int nodes = default_nodes);
  static FrailtyModel inverse_gaussian(double theta, int nodes = default_nodes);
  static FrailtyModel custom(DensitySpec spec, double theta, int nodes = default_nodes);
  static FrailtyModel degenerate();
  // "gamma", "lognormal", "invgauss"/"inverse-gaussian", "none"/"degenerate".
  static FrailtyModel from_name(std::string_view kind, double theta, int nodes = default_nodes);

  FrailtyModel with_theta(double theta) const;
  // Gamma only: evaluate phi integrals by quadrature instead of closed form.
  FrailtyModel with_quadrature() const;

  FrailtyKind kind() const { return kind_; }
  std::string name() const;
  double theta() const { return theta_; }
  bool has_theta() const { return kind_ != FrailtyKind::degenerate; }
  bool closed_form() const { return kind_ == FrailtyKind::gamma && !force_quadrature_; }
  int quadrature_nodes() const { return nodes_; }
  bool admissible(double theta) const;

  std::optional<double> tail_exponent() const;

  // log f(w; theta) and the first two theta-derivatives of log f.
  double log_density(double w) const { return log_density_at(std::log(w)); }
  double dlog_dtheta(double w) const { return dlog_dtheta_at(std::log(w)); }
  double d2log_dtheta2(double w) const { return d2log_dtheta2_at(std::log(w)); }
  // Same, parameterised by log w so that w underflowing to 0 stays exact.
  double log_density_at(double log_w) const;
  double dlog_dtheta_at(double log_w) const;
  double d2log_dtheta2_at(double log_w) const;

  // Throws ValidationError if E(W^order) is not finite and positive.
  void check_moments(int order) const;

 private:
  FrailtyModel(FrailtyKind kind, double theta, int nodes);
  void validate() const;

  FrailtyKind kind_ = FrailtyKind::degenerate;
  double theta_ = 0.0;
  // Per-theta constants of the density (normaliser, digamma, trigamma, ...).
  std::array<double, 3> c_{};
  int nodes_ = default_nodes;
  bool force_quadrature_ = false;
  std::shared_ptr<const DensitySpec> custom_;
};

// phi_k(r, h) = int w^(r+k-1) e^(-h w) f(w) dw for k = 1..4, the theta
// derivatives of phi_1 and phi_2, and the second theta derivative of phi_1.
// Every entry is divided by exp(log_scale_anchor) = phi_1, so phi[0] == 1.
struct PhiBundle {
  std::array<double, 4> phi{};
  std::array<double, 2> phi_theta{};
  double phi_theta_theta = 0.0;
  double log_scale_anchor = 0.0;

  // Posterior frailty mean phi_2/phi_1.
  double psi() const { return phi[1] / phi[0]; }
  // Posterior frailty variance phi_3/phi_1 - psi^2 (= -d psi / dh).
  double eta() const { return phi[2] / phi[0] - psi() * psi(); }
  double theta_score() const { return phi_theta[0] / phi[0]; }
  // d psi / d theta at fixed (r, h).
  double dpsi_dtheta() const { return phi_theta[1] / phi[0] - psi() * phi_theta[0] / phi[0]; }
  // d(theta_score)/dh = -phi_2^(theta)/phi_1 + phi_1^(theta) phi_2 / phi_1^2.
  double dtheta_score_dh() const { return -dpsi_dtheta(); }
  double theta_score_dtheta() const {
    const double s = theta_score();
    return phi_theta_theta / phi[0] - s * s;
  }
};

PhiBundle phi_bundle(const FrailtyModel& fm, int r, double h);

// E(W | r events, cumulative exposure h).
double psi(const FrailtyModel& fm, int r, double h);

// H_i.(t) = sum_j L(T_ij ^ t) exp(beta' Z_ij); per-member terms optional.
double cluster_exposure(const Cluster& cl, const Eigen::VectorXd& beta, const StepFunction& L, double t,
                        std::vector<double>* per_member = nullptr);

}  // namespace frailtyfit
