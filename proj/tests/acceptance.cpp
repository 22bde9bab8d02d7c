// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "frailtyfit/covariance.hpp"
#include "frailtyfit/frailty_model.hpp"
#include "frailtyfit/hazard.hpp"
#include "frailtyfit/simulate.hpp"
#include "frailtyfit/solver.hpp"
#include "root_oracle.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

using namespace frailtyfit;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// |sum of martingale residuals| over every converged fit made here.
double worst_martingale = 0.0;
int fits_checked = 0;

void record(const FitResult& fr) {
  if (!fr.converged) return;
  worst_martingale = std::max(worst_martingale, std::abs(fr.martingale_sum));
  ++fits_checked;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool run(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string timing = fmt("%.1fs", secs);
  if (limit_s > 0) {
    timing += fmt(" of %.0fs", limit_s);
    if (secs >= limit_s) {
      o.pass = false;
      o.detail += "; over the time limit";
    }
  }
  std::printf("criterion %d %s  %s: %s [%s]\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str(),
              timing.c_str());
  std::fflush(stdout);
  return o.pass;
}

Outcome gamma_quadrature_grid() {
  double worst = 0.0;
  int entries = 0;
  for (double theta : {0.25, 1.0, 4.0}) {
    const auto closed = FrailtyModel::gamma(theta);
    const auto quad = closed.with_quadrature();
    for (int r = 0; r <= 4; ++r)
      for (double h : {0.0, 0.1, 1.0, 10.0}) {
        const auto a = phi_bundle(closed, r, h), q = phi_bundle(quad, r, h);
        const double sa = std::exp(a.log_scale_anchor), sq = std::exp(q.log_scale_anchor);
        const double av[7] = {a.phi[0], a.phi[1], a.phi[2], a.phi[3], a.phi_theta[0], a.phi_theta[1], a.phi_theta_theta};
        const double qv[7] = {q.phi[0], q.phi[1], q.phi[2], q.phi[3], q.phi_theta[0], q.phi_theta[1], q.phi_theta_theta};
        // theta-derivatives that vanish identically are measured on the scale of the integrand
        const double floor[7] = {0, 0, 0, 0, av[0] / theta, av[1] / theta, av[0] / (theta * theta)};
        for (int k = 0; k < 7; ++k) {
          const double x = av[k] * sa, y = qv[k] * sq;
          worst = std::max(worst, std::abs(x - y) / std::max(std::abs(x), floor[k] * sa));
          ++entries;
        }
      }
  }
  return {worst < 1e-8, fmt("%d entries, max relative difference %.2e (tol 1e-8)", entries, worst)};
}

Outcome psi_shape() {
  const std::vector<double> hs = {0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 200.0, 1e3, 1e4};
  int monotone_fail = 0, bound_fail = 0, checks = 0;
  for (double theta : {0.25, 1.0, 4.0})
    for (const auto& fm : {FrailtyModel::gamma(theta), FrailtyModel::lognormal(theta),
                           FrailtyModel::inverse_gaussian(theta)}) {
      double bound = 0.0;
      for (int r = 0; r <= 4; ++r) bound = std::max(bound, psi(fm, r, 0.0));
      for (int r = 0; r <= 4; ++r) {
        double prev = 0.0;
        for (std::size_t k = 0; k < hs.size(); ++k) {
          const double v = psi(fm, r, hs[k]);
          if (k > 0 && !(v < prev)) ++monotone_fail;
          if (v > bound) ++bound_fail;
          prev = v;
          ++checks;
        }
      }
    }
  double worst_tail = 0.0;
  for (double theta : {0.25, 1.0, 4.0}) {
    const auto fm = FrailtyModel::gamma(theta);
    const double b = *fm.tail_exponent();
    for (int r = 0; r <= 4; ++r) worst_tail = std::max(worst_tail, std::abs(1e4 * psi(fm, r, 1e4) / (r + b) - 1));
  }
  const bool ok = monotone_fail == 0 && bound_fail == 0 && worst_tail < 0.02;
  return {ok, fmt("%d grid points, %d monotonicity and %d bound violations; gamma tail max |h psi/(r+b) - 1| = "
                  "%.2e (tol 0.02)",
                  checks, monotone_fail, bound_fail, worst_tail)};
}

Outcome cox_reduction() {
  double worst_hazard = 0.0, worst_beta = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ds = test_support::random_dataset(900 + seed, 100, 3, 2, seed % 2 ? 0.05 : 0.0);
    const auto cd = test_support::cox_data(ds);
    const auto cox = oracle::cox_fit(cd);
    const auto br = oracle::breslow(cd, cox.beta);
    const auto hp = profile_hazard(ds, FrailtyModel::degenerate(), ParameterVector{cox.beta, 0.0});
    const auto& cum = hp.lambda.cumulative();
    if (cum.size() != br.cumulative.size()) return {false, fmt("seed %d: knot count differs", int(seed))};
    for (std::size_t k = 0; k < cum.size(); ++k) {
      if (hp.lambda.knots()[k] != br.knots[k]) return {false, fmt("seed %d: knot %zu differs", int(seed), k)};
      worst_hazard = std::max(worst_hazard, std::abs(cum[k] - br.cumulative[k]) / std::max(1.0, br.cumulative[k]));
    }
    const auto fr = fit(ds, FrailtyModel::degenerate());
    record(fr);
    worst_beta = std::max(worst_beta, (fr.gamma_hat.beta - cox.beta).cwiseAbs().maxCoeff());
  }
  return {worst_hazard <= 1e-12 && worst_beta <= 1e-6,
          fmt("20 datasets (n=100, p=2): max hazard difference %.2e (tol 1e-12), max beta difference %.2e (tol 1e-6)",
              worst_hazard, worst_beta)};
}

Outcome jacobian_fd() {
  double worst = 0.0;
  int instances = 0;
  const FrailtyModel kinds[] = {FrailtyModel::gamma(0.9), FrailtyModel::lognormal(0.5),
                                FrailtyModel::inverse_gaussian(1.5), FrailtyModel::gamma(2.5)};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const int p = 1 + static_cast<int>(seed % 2);
    const int n = 5 + static_cast<int>(seed % 6);
    const auto ds = test_support::random_dataset(500 + seed, n, 3, p, seed % 3 ? 0.1 : 0.0);
    const auto& fm = kinds[seed % 4];
    const ParameterVector g{Eigen::VectorXd::LinSpaced(p, -0.3, 0.4), fm.theta()};
    const auto hp = profile_hazard(ds, fm, g);
    const Eigen::MatrixXd D = compute_D(ds, fm, g, hp, hazard_sensitivity(ds, fm, g, hp));
    const Eigen::MatrixXd J = profile_score_jacobian_fd(ds, fm, g, 1e-6);
    for (Eigen::Index r = 0; r < D.rows(); ++r)
      for (Eigen::Index c = 0; c < D.cols(); ++c)
        worst = std::max(worst, std::abs(D(r, c) - J(r, c)) / std::max(std::abs(J(r, c)), 1e-300));
    ++instances;
  }
  return {worst <= 1e-4, fmt("%d instances (n<=10, p<=2): max relative difference %.2e (tol 1e-4)", instances, worst)};
}

Outcome brute_force_root() {
  int done = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; done < 5 && seed < 200; ++seed) {
    const auto ds = test_support::random_dataset(1000 + seed, 8, 3, 1, 0.0);
    const auto fm = FrailtyModel::gamma(1.0);
    FitResult fr;
    try {
      fr = fit(ds, fm);
    } catch (const std::runtime_error&) {
      continue;  // no interior root on this draw
    }
    const double lt = std::log(fr.gamma_hat.theta);
    if (std::abs(fr.gamma_hat.beta(0)) > 2.5 || lt < -2.5 || lt > 2.5) continue;
    record(fr);
    auto objective = [&](const Eigen::Vector2d& x) {
      return profile_score(ds, fm, ParameterVector{Eigen::VectorXd::Constant(1, x(0)), std::exp(x(1))}).squaredNorm();
    };
    const auto m = oracle::grid_polish(objective, {-3, 3, -3, 3});
    worst = std::max({worst, std::abs(m.x(0) - fr.gamma_hat.beta(0)),
                      std::abs(std::exp(m.x(1)) - fr.gamma_hat.theta) / std::max(1.0, fr.gamma_hat.theta)});
    ++done;
  }
  return {done == 5 && worst <= 1e-4, fmt("%d instances (n=8, p=1): max difference %.2e (tol 1e-4)", done, worst)};
}

McReport mc_at(int n, std::uint64_t seed) {
  const auto rep = run_mc(test_support::mc_design(n, 2.0, seed), 200, SolverConfig{}, 4);
  worst_martingale = std::max(worst_martingale, rep.max_abs_martingale_sum);
  fits_checked += rep.successes;
  return rep;
}

Outcome monte_carlo() {
  const auto rep = mc_at(200, 42);
  const double bias_b = std::abs(rep.mean_estimates(0) - std::log(2.0));
  const double bias_t = std::abs(rep.mean_estimates(1) - 2.0);
  bool ok = rep.successes > 0 && bias_b < 0.05 && bias_t < 0.25;
  std::string d = fmt("%d/%d fits; |mean beta - ln 2| = %.4f (tol 0.05), |mean theta - 2| = %.4f (tol 0.25)",
                      rep.successes, rep.replications, bias_b, bias_t);
  for (int c = 0; c < 2; ++c) {
    const double ratio = rep.mean_reported_se(c) / rep.empirical_sd(c);
    const double cov = rep.coverage_95(c);
    ok = ok && ratio >= 0.85 && ratio <= 1.15 && cov >= 0.90 && cov <= 0.98;
    d += fmt("; %s SE/SD %.3f [0.85, 1.15], coverage %.3f [0.90, 0.98]", rep.names[c].c_str(), ratio, cov);
  }
  return {ok, d};
}

Outcome consistency() {
  const double small = mc_at(100, 4242).mean_abs_error(0);
  const double large = mc_at(400, 4243).mean_abs_error(0);
  return {large < small, fmt("mean |beta - ln 2|: n=100 %.4f, n=400 %.4f", small, large)};
}

Outcome martingale() {
  return {fits_checked > 0 && worst_martingale <= 1e-8,
          fmt("%d converged fits, max |sum M(tau)| = %.2e (tol 1e-8)", fits_checked, worst_martingale)};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const std::string dir = FRAILTYFIT_ACCEPTANCE_WORKDIR;
  const std::string base = std::string(FRAILTYFIT_CLI) +
                           " mc --reps 24 --n 100 --size 2 --beta 0.6931471805599453 --frailty gamma --theta 2"
                           " --baseline exp:1.0 --censoring exp:0.1246 --seed 20261016";
  const std::string a = dir + "/acceptance_mc_jobs1.json", b = dir + "/acceptance_mc_jobs4.json";
  const int ra = std::system((base + " --jobs 1 --output " + a).c_str());
  const int rb = std::system((base + " --jobs 4 --output " + b).c_str());
  if (ra != 0 || rb != 0) return {false, fmt("cli exit status %d / %d", ra, rb)};
  const std::string ta = slurp(a), tb = slurp(b);
  std::remove(a.c_str());
  std::remove(b.c_str());
  return {!ta.empty() && ta == tb, fmt("mc reports of %zu and %zu bytes are %s", ta.size(), tb.size(),
                                       ta == tb ? "byte-identical" : "different")};
}

}  // namespace

int main() {
  bool ok = true;
  ok &= run(1, "gamma closed form vs quadrature", 5, gamma_quadrature_grid);
  ok &= run(2, "psi monotone, bounded, gamma tail", 0, psi_shape);
  ok &= run(3, "Cox reduction and Breslow hazard", 30, cox_reduction);
  ok &= run(4, "D against finite differences", 60, jacobian_fd);
  ok &= run(6, "root against brute-force minimiser", 120, brute_force_root);
  ok &= run(7, "Monte Carlo calibration, n=200", 900, monte_carlo);
  ok &= run(8, "error shrinks from n=100 to n=400", 0, consistency);
  ok &= run(5, "martingale residuals sum to zero", 0, martingale);
  ok &= run(9, "mc report identical at --jobs 1 and 4", 0, determinism);
  std::printf("acceptance %s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}
