#include "frailtyfit/covariance.hpp"

#include "frailtyfit/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <sstream>

namespace frailtyfit {

Eigen::MatrixXd compute_D(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                          const HazardProfile& hp, const HazardSensitivity& hs) {
  const auto st = terminal_state(ds, fm, gamma, hp.lambda);
  const Eigen::MatrixXd eg = exposure_gradients(ds, fm, gamma, hp, hs);
  const auto p = static_cast<Eigen::Index>(ds.p());
  const Eigen::Index q = parameter_count(ds, fm);
  const auto& Z = ds.covariates();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(q, q);

  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto& b = st.bundles[i];
    const double psi = b.psi(), eta = b.eta();
    Eigen::RowVectorXd dHi = Eigen::RowVectorXd::Zero(q);
    Eigen::MatrixXd zdh = Eigen::MatrixXd::Zero(p, q);  // sum_j Z_j dH_j / dgamma
    for (std::size_t s = ds.cluster_begin(i); s < ds.cluster_end(i); ++s) {
      const auto ss = static_cast<Eigen::Index>(s);
      dHi += eg.row(ss);
      zdh += Z.row(ss).transpose() * eg.row(ss);
    }
    const Eigen::VectorXd Si = st.weighted_z.row(ii).transpose();
    // beta rows: U_l = n^-1 sum_i (sum_j delta Z_jl - psi_i S_il)
    D.topRows(p) -= psi * zdh - eta * Si * dHi;
    if (fm.has_theta()) {
      const double dpsi = b.dpsi_dtheta();
      D.block(0, p, p, 1) -= dpsi * Si;
      // theta row: U_{p+1} = n^-1 sum_i phi_1^(theta) / phi_1
      D.row(p) -= dpsi * dHi;
      D(p, p) += b.theta_score_dtheta();
    }
  }
  return D / static_cast<double>(ds.n());
}

Eigen::MatrixXd compute_V(const Eigen::MatrixXd& xi_star) {
  if (xi_star.rows() == 0) return Eigen::MatrixXd::Zero(xi_star.cols(), xi_star.cols());
  const Eigen::MatrixXd V = xi_star.transpose() * xi_star / static_cast<double>(xi_star.rows());
  return 0.5 * (V + V.transpose());
}

HazardCorrection parse_hazard_correction(const std::string& text) {
  if (text == "exact") return HazardCorrection::exact;
  if (text == "product") return HazardCorrection::product_integral;
  throw ValidationError("unknown hazard correction '" + text + "' (expected exact or product)");
}

std::string to_string(HazardCorrection method) {
  return method == HazardCorrection::exact ? "exact" : "product";
}

MartingaleWorkspace compute_phat_pi(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                                    const HazardProfile& hp, HazardCorrection method) {
  const std::size_t n = ds.n(), K = hp.K(), N = ds.subject_count();
  const double nd = static_cast<double>(n);
  const auto p = static_cast<Eigen::Index>(ds.p());
  const Eigen::Index q = parameter_count(ds, fm);
  const auto Ki = static_cast<Eigen::Index>(K);
  const auto rr = ds.relative_risk(gamma.beta);
  const auto times = ds.times();
  const auto status = ds.statuses();

  MartingaleWorkspace ws;
  if (K > 5000)
    ws.warnings.push_back(std::to_string(K) + " event times: the product-integral p(t) is evaluated per knot at O(K^2) cost");
  ws.eta1 = hp.eta_before;
  ws.script_y.resize(Ki);
  ws.upsilon.resize(Ki);
  ws.omega_prefix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), Ki + 1);

  // Subjects terminating exactly at knot k contribute to R_i(tau_k) but not
  // to the strict risk set I(T > tau_k) of Upsilon.
  std::vector<std::vector<std::size_t>> ending_at(K);
  for (std::size_t s = 0; s < N; ++s) {
    const int c = ds.knots_through(s);
    if (c > 0 && times[s] == ds.event_times()[static_cast<std::size_t>(c - 1)])
      ending_at[static_cast<std::size_t>(c - 1)].push_back(s);
  }

  for (std::size_t k = 0; k < K; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double Y = hp.per_knot_denominators[k] / nd;
    ws.script_y(kk) = Y;
    const double scale = 1.0 / (nd * nd * Y * Y);
    Eigen::VectorXd strict = hp.risk_weight.col(kk);
    for (std::size_t s : ending_at[k]) strict(static_cast<Eigen::Index>(ds.cluster_of(s))) -= rr[s];
    double ups = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double re = hp.risk_weight(ii, kk) * hp.eta_before(ii, kk);
      ups += re * std::max(strict(ii), 0.0);
      ws.omega_prefix(ii, kk + 1) = ws.omega_prefix(ii, kk) + scale * re * ds.event_counts()[k];
    }
    ws.upsilon(kk) = scale * ups;
  }

  // Distinct termination times and, for each, how many knots lie at or below it.
  std::vector<std::size_t> order(N);
  for (std::size_t s = 0; s < N; ++s) order[s] = s;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });
  std::vector<std::vector<std::size_t>> group;
  std::vector<int> group_knots;
  std::vector<std::size_t> group_of(N);
  for (std::size_t s : order) {
    if (ws.termination_times.empty() || times[s] != ws.termination_times.back()) {
      ws.termination_times.push_back(times[s]);
      group.emplace_back();
      group_knots.push_back(ds.knots_through(s));
    }
    group.back().push_back(s);
    group_of[s] = group.size() - 1;
  }
  const std::size_t M = group.size();

  // p(t) = prod over termination times u <= t of
  //   1 + sum_{T_s = u} [delta_s Upsilon(u) + Omega_s(u, t)],
  // with Omega_s(u, t) integrating the event knots in (u, t]. c_t is the
  // number of knots <= t; last is the number of termination groups u <= t.
  auto phat = [&](int c_t, std::size_t last) {
    double prod = 1.0;
    for (std::size_t m = 0; m < last; ++m) {
      const int c_u = group_knots[m];
      double f = 1.0;
      for (std::size_t s : group[m]) {
        const auto ii = static_cast<Eigen::Index>(ds.cluster_of(s));
        if (status[s] == 1) f += ws.upsilon(c_u - 1);
        f += rr[s] * (ws.omega_prefix(ii, c_t) - ws.omega_prefix(ii, c_u));
      }
      if (!(f > 0.0) && ws.reliable) {
        ws.reliable = false;
        std::ostringstream os;
        os.precision(17);
        os << "product-integral factor " << f << " <= 0 at t=" << ws.termination_times[m]
           << "; covariance unreliable";
        ws.diagnostic = os.str();
      }
      prod *= f;
    }
    return prod;
  };

  ws.phat_termination.resize(static_cast<Eigen::Index>(M));
  for (std::size_t m = 0; m < M; ++m) ws.phat_termination(static_cast<Eigen::Index>(m)) = phat(group_knots[m], m + 1);
  ws.phat_before.resize(Ki);
  {
    std::size_t m = 0;
    for (std::size_t k = 0; k < K; ++k) {
      while (m < M && ws.termination_times[m] < ds.event_times()[k]) ++m;
      ws.phat_before(static_cast<Eigen::Index>(k)) = phat(static_cast<int>(k), m);
    }
  }

  // Q_s: derivative of U with respect to Lambda(T_s), at the end of follow-up.
  const auto st = terminal_state(ds, fm, gamma, hp.lambda);
  ws.q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), q);
  for (std::size_t s = 0; s < N; ++s) {
    const auto ss = static_cast<Eigen::Index>(s);
    const std::size_t i = ds.cluster_of(s);
    const auto& b = st.bundles[i];
    ws.q.row(ss).head(p) = -rr[s] * (b.psi() * ds.covariates().row(ss) -
                                     b.eta() * st.weighted_z.row(static_cast<Eigen::Index>(i)));
    if (fm.has_theta()) ws.q(ss, p) = -rr[s] * b.dpsi_dtheta();
  }

  // pi(tau_k) = n^-1 sum over T_s >= tau_k of Q_s / p(T_s).
  ws.pi = Eigen::MatrixXd::Zero(Ki, q);
  for (std::size_t s = 0; s < N; ++s) {
    const int c = ds.knots_through(s);
    if (c == 0) continue;
    const double ph = ws.phat_termination(static_cast<Eigen::Index>(group_of[s]));
    ws.pi.row(c - 1) += ws.q.row(static_cast<Eigen::Index>(s)) / ph;
  }
  for (Eigen::Index k = Ki - 2; k >= 0; --k) ws.pi.row(k) += ws.pi.row(k + 1);
  ws.pi /= nd;

  if (method == HazardCorrection::product_integral) {
    ws.alpha = ws.pi;
    for (Eigen::Index k = 0; k < Ki; ++k) ws.alpha.row(k) *= ws.phat_before(k) / ws.script_y(k);
  } else {
    // Lambda_hat - Lambda solves
    //   d delta_l = dMbar_l / S_l + d_l / S_l^2 sum_i eta_il R_il sum_{k<l} R_ik d delta_k,
    // S_l = n Y(tau_l). Its adjoint applied to A_k = n^-1 sum_{T_s >= tau_k} Q_s is
    //   a_k = A_k + sum_i R_ik W_i,  W_i = sum_{l>k} d_l / S_l^2 eta_il R_il a_l,
    // and alpha_k = a_k / Y(tau_k).
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(Ki, q);
    for (std::size_t s = 0; s < N; ++s) {
      const int c = ds.knots_through(s);
      if (c > 0) A.row(c - 1) += ws.q.row(static_cast<Eigen::Index>(s));
    }
    for (Eigen::Index k = Ki - 2; k >= 0; --k) A.row(k) += A.row(k + 1);
    A /= nd;
    ws.alpha.resize(Ki, q);
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), q);
    for (Eigen::Index k = Ki - 1; k >= 0; --k) {
      const Eigen::RowVectorXd a = A.row(k) + hp.risk_weight.col(k).transpose() * W;
      const double S = hp.per_knot_denominators[static_cast<std::size_t>(k)];
      const double c = ds.event_counts()[static_cast<std::size_t>(k)] / (S * S);
      W += (c * hp.eta_before.col(k).cwiseProduct(hp.risk_weight.col(k))) * a;
      ws.alpha.row(k) = a / ws.script_y(k);
    }
  }

  // Martingale increments at the knots.
  ws.cluster_dm = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), Ki);
  for (std::size_t k = 0; k < K; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    ws.cluster_dm.col(kk) = -hp.jump(k) * hp.risk_weight.col(kk).cwiseProduct(hp.psi_before.col(kk));
    for (std::size_t s : ds.failing_at(k)) ws.cluster_dm(static_cast<Eigen::Index>(ds.cluster_of(s)), kk) += 1.0;
  }
  ws.mhat.resize(static_cast<Eigen::Index>(N));
  for (std::size_t s = 0; s < N; ++s) {
    const auto ii = static_cast<Eigen::Index>(ds.cluster_of(s));
    double comp = 0.0;
    for (int k = 0; k < ds.knots_through(s); ++k) comp += hp.psi_before(ii, k) * hp.jump(static_cast<std::size_t>(k));
    ws.mhat(static_cast<Eigen::Index>(s)) = status[s] - rr[s] * comp;
  }
  return ws;
}

Eigen::MatrixXd compute_G(const Dataset& ds, const MartingaleWorkspace& ws) {
  const Eigen::Index q = ws.alpha.cols();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index k = 0; k < ws.alpha.rows(); ++k)
    G += ds.event_counts()[static_cast<std::size_t>(k)] * ws.alpha.row(k).transpose() * ws.alpha.row(k);
  G /= static_cast<double>(ds.n());
  return 0.5 * (G + G.transpose());
}

Eigen::MatrixXd compute_mu_star(const MartingaleWorkspace& ws) { return ws.cluster_dm * ws.alpha; }

Eigen::MatrixXd compute_C(const Eigen::MatrixXd& xi_star, const Eigen::MatrixXd& mu_star) {
  if (xi_star.rows() == 0) return Eigen::MatrixXd::Zero(xi_star.cols(), xi_star.cols());
  const Eigen::MatrixXd cross = xi_star.transpose() * mu_star;
  return (cross + cross.transpose()) / static_cast<double>(xi_star.rows());
}

Eigen::MatrixXd sandwich(const Eigen::MatrixXd& D, const Eigen::MatrixXd& middle, std::size_t n) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(D);
  if (!lu.isInvertible()) throw LinearAlgebraError("D is singular; the sandwich covariance is undefined");
  const Eigen::MatrixXd Dinv = lu.inverse();
  const Eigen::MatrixXd S = Dinv * middle * Dinv.transpose() / static_cast<double>(n);
  return 0.5 * (S + S.transpose());
}

SandwichParts sandwich_parts(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                             const HazardProfile& hp, const HazardSensitivity& hs, HazardCorrection method) {
  SandwichParts parts;
  parts.D = compute_D(ds, fm, gamma, hp, hs);
  parts.xi_star = score(ds, fm, gamma, hp.lambda).per_cluster_xi;
  parts.V = compute_V(parts.xi_star);
  const auto ws = compute_phat_pi(ds, fm, gamma, hp, method);
  parts.G = compute_G(ds, ws);
  parts.mu_star = compute_mu_star(ws);
  parts.C = compute_C(parts.xi_star, parts.mu_star);
  parts.mhat = ws.mhat;
  parts.reliable = ws.reliable;
  parts.diagnostic = ws.diagnostic;
  parts.warnings = ws.warnings;
  parts.sandwich = sandwich(parts.D, parts.V + parts.G + parts.C, ds.n());
  for (Eigen::Index r = 0; r < parts.sandwich.rows(); ++r) {
    if (parts.sandwich(r, r) < 0.0 && parts.reliable) {
      parts.reliable = false;
      parts.diagnostic = "negative variance on the diagonal of the sandwich covariance";
    }
  }
  return parts;
}

}  // namespace frailtyfit
