#include "frailtyfit/hazard.hpp"

#include "frailtyfit/errors.hpp"

#include <sstream>

namespace frailtyfit {

namespace {

void check_beta(const Dataset& ds, const ParameterVector& gamma) {
  if (static_cast<std::size_t>(gamma.beta.size()) != ds.p())
    throw ValidationError("beta has length " + std::to_string(gamma.beta.size()) + " but the data have " +
                          std::to_string(ds.p()) + " covariates");
  if (!gamma.beta.allFinite()) throw ValidationError("beta is not finite");
}

// R_i(tau_k) and its beta-gradient, recomputed for a cluster whenever one of
// its members leaves the risk set (exact zero once the cluster is empty).
struct RiskSets {
  const Dataset& ds;
  const std::vector<double>& rr;
  bool with_gradient;
  std::vector<double> R;
  Eigen::MatrixXd dR;

  RiskSets(const Dataset& d, const std::vector<double>& r, bool grad) : ds(d), rr(r), with_gradient(grad) {
    R.assign(ds.n(), 0.0);
    dR = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(ds.p()));
    for (std::size_t i = 0; i < ds.n(); ++i) refresh(i, 0);
  }

  void refresh(std::size_t i, std::size_t k) {
    double total = 0.0;
    const auto row = static_cast<Eigen::Index>(i);
    if (with_gradient) dR.row(row).setZero();
    for (std::size_t s = ds.cluster_begin(i); s < ds.cluster_end(i); ++s) {
      if (static_cast<std::size_t>(ds.knots_through(s)) <= k) continue;
      total += rr[s];
      if (with_gradient) dR.row(row) += rr[s] * ds.covariates().row(static_cast<Eigen::Index>(s));
    }
    R[i] = total;
  }

  void advance_to(std::size_t k) {
    for (std::size_t s : ds.leaving_before(k)) refresh(ds.cluster_of(s), k);
  }
};

}  // namespace

FrailtyModel at_theta(const FrailtyModel& fm, double theta) {
  if (!fm.has_theta() || theta == fm.theta()) return fm;
  return fm.with_theta(theta);
}

HazardProfile profile_hazard(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma) {
  if (ds.K() == 0) throw EstimationError("no event times: every subject is censored");
  check_beta(ds, gamma);
  const FrailtyModel model = at_theta(fm, gamma.theta);
  const std::size_t n = ds.n(), K = ds.K();
  const auto rr = ds.relative_risk(gamma.beta);

  HazardProfile hp;
  hp.gamma_at = gamma;
  hp.per_knot_denominators.resize(K);
  const auto ni = static_cast<Eigen::Index>(n), Ki = static_cast<Eigen::Index>(K);
  hp.psi_before.resize(ni, Ki);
  hp.eta_before.resize(ni, Ki);
  hp.dpsi_dtheta_before.resize(ni, Ki);
  hp.risk_weight.resize(ni, Ki);

  RiskSets risk(ds, rr, false);
  std::vector<double> H(n, 0.0);
  std::vector<int> N(n, 0);
  auto& jumps = hp.jumps;
  jumps.resize(K);

  for (std::size_t k = 0; k < K; ++k) {
    risk.advance_to(k);
    const auto kk = static_cast<Eigen::Index>(k);
    double S = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto b = phi_bundle(model, N[i], H[i]);
      const auto ii = static_cast<Eigen::Index>(i);
      hp.psi_before(ii, kk) = b.psi();
      hp.eta_before(ii, kk) = b.eta();
      hp.dpsi_dtheta_before(ii, kk) = b.dpsi_dtheta();
      hp.risk_weight(ii, kk) = risk.R[i];
      S += b.psi() * risk.R[i];
    }
    hp.bundle_evaluations += n;
    if (!(S > 0.0) || !std::isfinite(S)) {
      std::ostringstream os;
      os.precision(17);
      os << "empty weighted risk set at event time " << ds.event_times()[k];
      throw EstimationError(os.str());
    }
    hp.per_knot_denominators[k] = S;
    jumps[k] = ds.event_counts()[k] / S;
    for (std::size_t i = 0; i < n; ++i) H[i] += jumps[k] * risk.R[i];
    for (std::size_t s : ds.failing_at(k)) ++N[ds.cluster_of(s)];
  }
  hp.lambda = StepFunction::from_jumps(ds.event_times(), jumps);
  return hp;
}

HazardSensitivity hazard_sensitivity(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                                     const HazardProfile& hp) {
  check_beta(ds, gamma);
  const std::size_t n = ds.n(), K = hp.K();
  const auto p = static_cast<Eigen::Index>(ds.p());
  const auto rr = ds.relative_risk(gamma.beta);
  const bool theta = fm.has_theta();

  HazardSensitivity hs;
  hs.djump_dbeta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K), p);
  hs.djump_dtheta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));

  RiskSets risk(ds, rr, true);
  Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), p);
  Eigen::VectorXd dHt = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

  for (std::size_t k = 0; k < K; ++k) {
    risk.advance_to(k);
    const auto kk = static_cast<Eigen::Index>(k);
    const double S = hp.per_knot_denominators[k];
    Eigen::VectorXd dS = Eigen::VectorXd::Zero(p);
    double dSt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double R = risk.R[i];
      const double psi = hp.psi_before(ii, kk), eta = hp.eta_before(ii, kk);
      dS += -eta * R * dH.row(ii).transpose() + psi * risk.dR.row(ii).transpose();
      if (theta) dSt += R * (hp.dpsi_dtheta_before(ii, kk) - eta * dHt(ii));
    }
    const double d = ds.event_counts()[k];
    const double jump = hp.jump(k);
    hs.djump_dbeta.row(kk) = (-d / (S * S)) * dS.transpose();
    hs.djump_dtheta(kk) = -d / (S * S) * dSt;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      dH.row(ii) += risk.R[i] * hs.djump_dbeta.row(kk) + jump * risk.dR.row(ii);
      dHt(ii) += hs.djump_dtheta(kk) * risk.R[i];
    }
  }

  hs.dlambda_dbeta = hs.djump_dbeta;
  hs.dlambda_dtheta = hs.djump_dtheta;
  for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(K); ++k) {
    hs.dlambda_dbeta.row(k) += hs.dlambda_dbeta.row(k - 1);
    hs.dlambda_dtheta(k) += hs.dlambda_dtheta(k - 1);
  }
  return hs;
}

std::vector<double> lambda_at_exit(const Dataset& ds, const HazardProfile& hp) {
  std::vector<double> out(ds.subject_count(), 0.0);
  const auto& cum = hp.lambda.cumulative();
  for (std::size_t s = 0; s < out.size(); ++s) {
    const int c = ds.knots_through(s);
    if (c > 0) out[s] = cum[static_cast<std::size_t>(c - 1)];
  }
  return out;
}

Eigen::MatrixXd exposure_gradients(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                                   const HazardProfile& hp, const HazardSensitivity& hs) {
  const auto p = static_cast<Eigen::Index>(ds.p());
  const auto rr = ds.relative_risk(gamma.beta);
  const auto L = lambda_at_exit(ds, hp);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ds.subject_count()), p + (fm.has_theta() ? 1 : 0));
  for (std::size_t s = 0; s < ds.subject_count(); ++s) {
    const auto ss = static_cast<Eigen::Index>(s);
    const int c = ds.knots_through(s);
    out.row(ss).head(p) = L[s] * rr[s] * ds.covariates().row(ss);
    if (c == 0) continue;
    const auto kk = static_cast<Eigen::Index>(c - 1);
    out.row(ss).head(p) += rr[s] * hs.dlambda_dbeta.row(kk);
    if (fm.has_theta()) out(ss, p) = rr[s] * hs.dlambda_dtheta(kk);
  }
  return out;
}

}  // namespace frailtyfit
