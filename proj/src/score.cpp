#include "frailtyfit/score.hpp"

#include "frailtyfit/errors.hpp"
#include "frailtyfit/hazard.hpp"

namespace frailtyfit {

ClusterTerminal terminal_state(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                               const StepFunction& L) {
  if (static_cast<std::size_t>(gamma.beta.size()) != ds.p())
    throw ValidationError("beta length does not match the number of covariates");
  const FrailtyModel model = at_theta(fm, gamma.theta);
  const auto rr = ds.relative_risk(gamma.beta);
  const std::size_t n = ds.n();
  ClusterTerminal st;
  st.events.assign(n, 0);
  st.exposure.assign(n, 0.0);
  st.subject_exposure.assign(ds.subject_count(), 0.0);
  st.weighted_z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ds.p()));
  st.bundles.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t s = ds.cluster_begin(i); s < ds.cluster_end(i); ++s) {
      const double h = L(ds.times()[s]) * rr[s];
      st.subject_exposure[s] = h;
      st.exposure[i] += h;
      st.events[i] += ds.statuses()[s];
      st.weighted_z.row(ii) += h * ds.covariates().row(static_cast<Eigen::Index>(s));
    }
    st.bundles[i] = phi_bundle(model, st.events[i], st.exposure[i]);
  }
  return st;
}

ScoreVector score(const Dataset& ds, const FrailtyModel& fm, const ClusterTerminal& st) {
  const std::size_t n = ds.n();
  const auto p = static_cast<Eigen::Index>(ds.p());
  ScoreVector sv;
  sv.per_cluster_xi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), parameter_count(ds, fm));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    auto row = sv.per_cluster_xi.row(ii);
    for (std::size_t s = ds.cluster_begin(i); s < ds.cluster_end(i); ++s)
      if (ds.statuses()[s] == 1) row.head(p) += ds.covariates().row(static_cast<Eigen::Index>(s));
    row.head(p) -= st.bundles[i].psi() * st.weighted_z.row(ii);
    if (fm.has_theta()) row(p) = st.bundles[i].theta_score();
  }
  sv.u = sv.per_cluster_xi.colwise().sum().transpose() / static_cast<double>(n);
  return sv;
}

ScoreVector score(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma, const StepFunction& L) {
  return score(ds, fm, terminal_state(ds, fm, gamma, L));
}

}  // namespace frailtyfit
