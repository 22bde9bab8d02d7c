#include "frailtyfit/solver.hpp"

#include "frailtyfit/score.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace frailtyfit {

void SolverConfig::validate() const {
  if (!(tol_score > 0.0)) throw ValidationError("tol_score must be positive");
  if (max_iter < 1) throw ValidationError("max_iter must be at least 1");
  if (step_halvings < 0) throw ValidationError("step_halvings must be nonnegative");
  if (!(theta0 > 0.0) || !std::isfinite(theta0)) throw ValidationError("theta0 must be positive");
  if (!(theta_min > 0.0) || !(theta_max > theta_min)) throw ValidationError("need 0 < theta_min < theta_max");
  if (!beta0.allFinite()) throw ValidationError("beta0 must be finite");
}

Eigen::VectorXd FitResult::estimates() const {
  const auto p = gamma_hat.beta.size();
  Eigen::VectorXd e(score.size());
  e.head(p) = gamma_hat.beta;
  if (score.size() > p) e(p) = gamma_hat.theta;
  return e;
}

Eigen::VectorXd FitResult::std_errors() const {
  if (covariance.size() == 0) return Eigen::VectorXd::Constant(score.size(), std::nan(""));
  return covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
}

ConvergenceError::ConvergenceError(FitResult partial)
    : EstimationError(partial.diagnostic), partial_(std::make_shared<const FitResult>(std::move(partial))) {}

Eigen::VectorXd profile_score(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma) {
  return score(ds, fm, gamma, profile_hazard(ds, fm, gamma).lambda).u;
}

Eigen::MatrixXd profile_score_jacobian_fd(const Dataset& ds, const FrailtyModel& fm, const ParameterVector& gamma,
                                          double rel_step) {
  const Eigen::Index q = parameter_count(ds, fm);
  const auto p = static_cast<Eigen::Index>(ds.p());
  Eigen::MatrixXd J(q, q);
  for (Eigen::Index c = 0; c < q; ++c) {
    ParameterVector up = gamma, dn = gamma;
    double h;
    if (c < p) {
      h = rel_step * std::max(1.0, std::abs(gamma.beta(c)));
      up.beta(c) += h;
      dn.beta(c) -= h;
    } else {
      h = rel_step * std::max(1e-3, gamma.theta);
      up.theta += h;
      dn.theta -= h;
    }
    J.col(c) = (profile_score(ds, fm, up) - profile_score(ds, fm, dn)) / (2.0 * h);
  }
  return J;
}

namespace {

struct Evaluation {
  ParameterVector gamma;
  HazardProfile hp;
  Eigen::VectorXd u;
  double norm = 0.0;
};

std::string describe(const ParameterVector& g, bool with_theta) {
  std::ostringstream os;
  os.precision(10);
  os << "beta=(";
  for (Eigen::Index r = 0; r < g.beta.size(); ++r) os << (r ? ", " : "") << g.beta(r);
  os << ")";
  if (with_theta) os << ", theta=" << g.theta;
  return os.str();
}

}  // namespace

FitResult fit(const Dataset& ds, const FrailtyModel& fm, const SolverConfig& cfg) {
  cfg.validate();
  if (ds.K() == 0) throw EstimationError("no events in the data; nothing to estimate");
  const auto p = static_cast<Eigen::Index>(ds.p());
  const bool has_theta = fm.has_theta();
  const Eigen::Index q = parameter_count(ds, fm);
  if (fm.kind() == FrailtyKind::custom) fm.check_moments(static_cast<int>(ds.max_cluster_size()) + 2);

  FitResult res;
  ParameterVector start;
  start.beta = cfg.beta0.size() ? cfg.beta0 : Eigen::VectorXd::Zero(p);
  if (cfg.cox_start && cfg.beta0.size() == 0 && p > 0 && has_theta) {
    SolverConfig pre = cfg;
    pre.cox_start = false;
    try {
      start.beta = fit(ds, FrailtyModel::degenerate(), pre).gamma_hat.beta;
    } catch (const std::runtime_error& e) {
      res.warnings.push_back(std::string("Cox pre-fit failed, starting from beta = 0: ") + e.what());
    }
  }
  if (start.beta.size() != p)
    throw ValidationError("beta0 has length " + std::to_string(start.beta.size()) + ", expected " + std::to_string(p));
  start.theta = has_theta ? std::clamp(cfg.theta0, cfg.theta_min, cfg.theta_max) : fm.theta();

  auto evaluate = [&](const ParameterVector& g) {
    Evaluation e;
    e.gamma = g;
    e.hp = profile_hazard(ds, fm, g);
    e.u = score(ds, fm, g, e.hp.lambda).u;
    e.norm = e.u.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(e.norm)) throw NumericError("score is not finite at " + describe(g, has_theta));
    return e;
  };
  // Newton works on x = (beta, log theta).
  auto to_x = [&](const ParameterVector& g) {
    Eigen::VectorXd x(q);
    x.head(p) = g.beta;
    if (has_theta) x(p) = std::log(g.theta);
    return x;
  };
  const double lo = std::log(cfg.theta_min), hi = std::log(cfg.theta_max);
  auto on_lower = [&](const ParameterVector& g) { return g.theta <= cfg.theta_min * (1 + 1e-12); };
  auto on_upper = [&](const ParameterVector& g) { return g.theta >= cfg.theta_max * (1 - 1e-12); };
  auto from_x = [&](const Eigen::VectorXd& x, bool* clamped) {
    ParameterVector g;
    g.beta = x.head(p);
    g.theta = fm.theta();
    if (has_theta) {
      const double lt = std::clamp(x(p), lo, hi);
      if (clamped) *clamped = lt != x(p);
      g.theta = std::exp(lt);
    }
    return g;
  };

  Evaluation cur = evaluate(start);
  int it = 0;
  bool stalled = false;
  for (; it < cfg.max_iter && cur.norm > cfg.tol_score; ++it) {
    const auto hs = hazard_sensitivity(ds, fm, cur.gamma, cur.hp);
    Eigen::MatrixXd J = compute_D(ds, fm, cur.gamma, cur.hp, hs);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    const auto& sv = svd.singularValues();
    const double cond = sv(q - 1) > 0 ? sv(0) / sv(q - 1) : INFINITY;
    if (!(cond <= 1e12)) {
      if (!cfg.fd_fallback) {
        std::ostringstream os;
        os << "Jacobian D is singular (condition number " << cond << ") at " << describe(cur.gamma, has_theta);
        throw LinearAlgebraError(os.str());
      }
      J = profile_score_jacobian_fd(ds, fm, cur.gamma);
      res.warnings.push_back("iteration " + std::to_string(it + 1) +
                             ": D near singular, used a finite-difference Jacobian");
    }
    if (has_theta) J.col(p) *= cur.gamma.theta;  // d/d log theta
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible()) {
      std::ostringstream os;
      os << "Jacobian is singular at " << describe(cur.gamma, has_theta);
      if (!cfg.fd_fallback) throw LinearAlgebraError(os.str());
      res.diagnostic = os.str();
      stalled = true;
      break;
    }
    Eigen::VectorXd step = -lu.solve(cur.u);
    // Keep single steps in log theta moderate; the map is very flat far out.
    if (has_theta && std::abs(step(p)) > 3.0) step *= 3.0 / std::abs(step(p));

    // theta stuck on a bound with Newton pointing further out: solve the
    // beta equations at that theta instead.
    const bool pinned = has_theta && ((on_lower(cur.gamma) && step(p) < 0) || (on_upper(cur.gamma) && step(p) > 0));
    if (pinned) {
      if (p == 0) {
        res.diagnostic = "theta is on the boundary of its search interval";
        stalled = true;
        break;
      }
      const Eigen::FullPivLU<Eigen::MatrixXd> lub(J.topLeftCorner(p, p));
      step.setZero();
      step.head(p) = -lub.solve(cur.u.head(p));
    }
    auto merit = [&](const Evaluation& e) { return pinned ? e.u.head(p).lpNorm<Eigen::Infinity>() : e.norm; };

    const Eigen::VectorXd x0 = to_x(cur.gamma);
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.step_halvings; ++h, t *= 0.5) {
      bool clamped = false;
      const ParameterVector g = from_x(x0 + t * step, &clamped);
      Evaluation trial;
      try {
        trial = evaluate(g);
      } catch (const std::runtime_error&) {
        continue;  // e.g. an empty weighted risk set far from the root
      }
      if (merit(trial) < merit(cur)) {
        if (clamped)
          res.warnings.push_back("iteration " + std::to_string(it + 1) + ": theta clamped to [" +
                                 std::to_string(cfg.theta_min) + ", " + std::to_string(cfg.theta_max) + "]");
        cur = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.diagnostic = "step halving failed to reduce the score norm at " + describe(cur.gamma, has_theta);
      stalled = true;
      ++it;
      break;
    }
    if (pinned && merit(cur) <= cfg.tol_score) {
      res.diagnostic = "beta solves its score equations with theta held on the boundary";
      stalled = true;
      ++it;
      break;
    }
  }

  res.gamma_hat = cur.gamma;
  res.score = cur.u;
  res.score_norm = cur.norm;
  res.iterations = it;
  res.hazard = std::move(cur.hp);
  res.converged = res.score_norm <= cfg.tol_score;

  if (!res.converged) {
    std::ostringstream os;
    os.precision(6);
    if (!stalled) os << "no convergence after " << cfg.max_iter << " iterations";
    else os << res.diagnostic;
    os << "; last iterate " << describe(res.gamma_hat, has_theta) << ", |U|_inf=" << res.score_norm;
    if (has_theta && (on_lower(res.gamma_hat) || on_upper(res.gamma_hat)))
      os << " (theta on the boundary of its search interval)";
    res.diagnostic = os.str();
    throw ConvergenceError(std::move(res));
  }

  const auto hs = hazard_sensitivity(ds, fm, res.gamma_hat, res.hazard);
  res.parts = sandwich_parts(ds, fm, res.gamma_hat, res.hazard, hs, cfg.hazard_correction);
  res.covariance = res.parts.sandwich;
  res.covariance_reliable = res.parts.reliable;
  res.warnings.insert(res.warnings.end(), res.parts.warnings.begin(), res.parts.warnings.end());
  if (!res.parts.reliable) res.warnings.push_back(res.parts.diagnostic);
  res.xi_star = res.parts.xi_star;
  res.mu_star = res.parts.mu_star;
  res.martingale_sum = res.parts.mhat.sum();
  return res;
}

}  // namespace frailtyfit
