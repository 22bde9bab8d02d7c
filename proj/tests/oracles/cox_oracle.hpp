#pragma once

// Independent Cox partial-likelihood reference. Plain O(N^2) loops over a
// flat subject list; shares no code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

struct CoxData {
  std::vector<double> time;
  std::vector<int> status;
  Eigen::MatrixXd z;  // N x p
};

struct CoxFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd information;  // minus the Hessian of the log partial likelihood
  Eigen::VectorXd score;
  double loglik = 0.0;
  int iterations = 0;
};

// Breslow ties: every event at time t shares the risk set {T >= t}.
inline void cox_derivatives(const CoxData& d, const Eigen::VectorXd& beta, double& ll, Eigen::VectorXd& u,
                            Eigen::MatrixXd& info) {
  const auto N = static_cast<Eigen::Index>(d.time.size());
  const auto p = d.z.cols();
  ll = 0.0;
  u = Eigen::VectorXd::Zero(p);
  info = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index a = 0; a < N; ++a) {
    if (!d.status[a]) continue;
    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index b = 0; b < N; ++b) {
      if (d.time[b] < d.time[a]) continue;
      const double e = std::exp(d.z.row(b).dot(beta));
      s0 += e;
      s1 += e * d.z.row(b).transpose();
      s2 += e * d.z.row(b).transpose() * d.z.row(b);
    }
    const Eigen::VectorXd zbar = s1 / s0;
    ll += d.z.row(a).dot(beta) - std::log(s0);
    u += d.z.row(a).transpose() - zbar;
    info += s2 / s0 - zbar * zbar.transpose();
  }
}

inline CoxFit cox_fit(const CoxData& d, double tol = 1e-11, int max_iter = 100) {
  CoxFit f;
  f.beta = Eigen::VectorXd::Zero(d.z.cols());
  for (f.iterations = 0; f.iterations < max_iter; ++f.iterations) {
    cox_derivatives(d, f.beta, f.loglik, f.score, f.information);
    if (f.score.lpNorm<Eigen::Infinity>() < tol) break;
    Eigen::VectorXd step = f.information.ldlt().solve(f.score);
    // halve until the partial likelihood increases
    for (int h = 0; h < 40; ++h, step /= 2) {
      double ll2;
      Eigen::VectorXd u2;
      Eigen::MatrixXd i2;
      cox_derivatives(d, f.beta + step, ll2, u2, i2);
      if (ll2 >= f.loglik - 1e-10 * std::abs(f.loglik)) break;  // allow roundoff near the top
    }
    f.beta += step;
  }
  cox_derivatives(d, f.beta, f.loglik, f.score, f.information);
  if (f.score.lpNorm<Eigen::Infinity>() > 1e-8) throw std::runtime_error("cox oracle did not converge");
  return f;
}

struct Breslow {
  std::vector<double> knots;
  std::vector<double> cumulative;
};

inline Breslow breslow(const CoxData& d, const Eigen::VectorXd& beta) {
  std::vector<double> ev;
  for (std::size_t a = 0; a < d.time.size(); ++a)
    if (d.status[a]) ev.push_back(d.time[a]);
  std::sort(ev.begin(), ev.end());
  ev.erase(std::unique(ev.begin(), ev.end()), ev.end());
  Breslow out;
  double acc = 0.0;
  for (double t : ev) {
    double dk = 0.0, s0 = 0.0;
    for (std::size_t b = 0; b < d.time.size(); ++b) {
      if (d.time[b] == t && d.status[b]) dk += 1.0;
      if (d.time[b] >= t) s0 += std::exp(d.z.row(static_cast<Eigen::Index>(b)).dot(beta));
    }
    acc += dk / s0;
    out.knots.push_back(t);
    out.cumulative.push_back(acc);
  }
  return out;
}

}  // namespace oracle
