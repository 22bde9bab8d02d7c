#include "frailtyfit/errors.hpp"
#include "frailtyfit/solver.hpp"
#include "root_oracle.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

using namespace frailtyfit;

namespace {

void check_fit_invariants(const Dataset& ds, const FrailtyModel& fm, const FitResult& fr, const SolverConfig& cfg) {
  CHECK(fr.converged);
  CHECK(fr.score_norm <= cfg.tol_score);
  CHECK(std::abs(fr.martingale_sum) < 1e-8);
  CHECK(fr.covariance == fr.covariance.transpose());
  CHECK((fr.covariance.diagonal().array() >= 0).all());
  // idempotence: re-profiling at the reported root reproduces a root
  CHECK(profile_score(ds, fm, fr.gamma_hat).lpNorm<Eigen::Infinity>() <= cfg.tol_score);
}

}  // namespace

TEST_CASE("solver: fits every frailty family on simulated data") {
  const auto ds = generate(test_support::mc_design(150, 1.5, 21));
  const SolverConfig cfg;
  for (const auto& fm : {FrailtyModel::gamma(1.0), FrailtyModel::lognormal(1.0), FrailtyModel::inverse_gaussian(1.0),
                         FrailtyModel::gamma(1.0).with_quadrature(), FrailtyModel::degenerate()}) {
    const auto fr = fit(ds, fm, cfg);
    check_fit_invariants(ds, fm, fr, cfg);
    CHECK(fr.iterations <= 15);
    CHECK(fr.score.size() == parameter_count(ds, fm));
  }
}

TEST_CASE("solver: closed-form and quadrature gamma give the same root") {
  const auto ds = generate(test_support::mc_design(100, 2.0, 5));
  const auto a = fit(ds, FrailtyModel::gamma(1.0));
  const auto b = fit(ds, FrailtyModel::gamma(1.0).with_quadrature());
  CHECK((a.estimates() - b.estimates()).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.std_errors() - b.std_errors()).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("solver: a custom density equal to gamma reproduces the gamma fit") {
  DensitySpec spec;
  spec.name = "gamma-as-custom";
  spec.log_density = [](double w, double theta) {
    const double a = 1 / theta;
    return a * std::log(a) - std::lgamma(a) + (a - 1) * std::log(w) - a * w;
  };
  const auto ds = generate(test_support::mc_design(80, 1.0, 9));
  const auto a = fit(ds, FrailtyModel::gamma(1.0));
  const auto b = fit(ds, FrailtyModel::custom(spec, 1.0));
  CHECK((a.estimates() - b.estimates()).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(std::abs(b.martingale_sum) < 1e-8);
}

TEST_CASE("solver: degenerate frailty reproduces the Cox partial-likelihood fit") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto ds = test_support::random_dataset(900 + seed, 100, 3, 2, seed % 2 ? 0.05 : 0.0);
    const SolverConfig cfg;
    const auto fr = fit(ds, FrailtyModel::degenerate(), cfg);
    check_fit_invariants(ds, FrailtyModel::degenerate(), fr, cfg);
    const auto cox = oracle::cox_fit(test_support::cox_data(ds));
    CHECK((fr.gamma_hat.beta - cox.beta).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("solver: near-independence data agree with the Cox fit") {
  auto cfg = test_support::mc_design(200, 0.01, 33);
  const auto ds = generate(cfg);
  // theta-hat may sit on its lower bound (no interior root); beta is then
  // the root of the beta equations at that theta.
  double beta_hat;
  try {
    beta_hat = fit(ds, FrailtyModel::gamma(1.0)).gamma_hat.beta(0);
  } catch (const ConvergenceError& e) {
    CHECK(std::string(e.what()).find("boundary") != std::string::npos);
    CHECK(e.partial().gamma_hat.theta == doctest::Approx(SolverConfig{}.theta_min));
    CHECK(e.partial().score.head(1).lpNorm<Eigen::Infinity>() <= SolverConfig{}.tol_score);
    beta_hat = e.partial().gamma_hat.beta(0);
  }
  const auto cox = oracle::cox_fit(test_support::cox_data(ds));
  const double se = std::sqrt(cox.information.inverse()(0, 0));
  CHECK(std::abs(beta_hat - cox.beta(0)) < 3 * se);
}

TEST_CASE("solver: Cox pre-fit start reaches the same root") {
  const auto ds = generate(test_support::mc_design(100, 1.0, 44));
  SolverConfig a, b;
  b.cox_start = true;
  const auto fa = fit(ds, FrailtyModel::gamma(1.0), a);
  const auto fb = fit(ds, FrailtyModel::gamma(1.0), b);
  CHECK((fa.estimates() - fb.estimates()).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("solver: root matches a brute-force minimiser of |U|^2") {
  int done = 0;
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
    auto objective = [&](const Eigen::Vector2d& x) {
      return profile_score(ds, fm, ParameterVector{Eigen::VectorXd::Constant(1, x(0)), std::exp(x(1))}).squaredNorm();
    };
    const auto m = oracle::grid_polish(objective, {-3, 3, -3, 3});
    CHECK_MESSAGE(std::abs(m.x(0) - fr.gamma_hat.beta(0)) < 1e-4, "seed ", seed, " oracle beta ", m.x(0));
    CHECK_MESSAGE(std::abs(std::exp(m.x(1)) - fr.gamma_hat.theta) < 1e-4 * std::max(1.0, fr.gamma_hat.theta), "seed ",
                  seed, " oracle theta ", std::exp(m.x(1)));
    ++done;
  }
  CHECK(done == 5);
}

TEST_CASE("solver: Newton step reduces |U| within the halving budget") {
  const SolverConfig cfg;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto ds = test_support::random_dataset(1200 + seed, 15, 3, 1, 0.1);
    const auto fm = FrailtyModel::gamma(1.0);
    const ParameterVector g{Eigen::VectorXd::Constant(1, 0.5), 1.5};
    const auto hp = profile_hazard(ds, fm, g);
    const Eigen::VectorXd u = score(ds, fm, g, hp.lambda).u;
    const Eigen::MatrixXd D = compute_D(ds, fm, g, hp, hazard_sensitivity(ds, fm, g, hp));
    const Eigen::VectorXd step = -D.fullPivLu().solve(u);
    bool reduced = false;
    double t = 1;
    for (int h = 0; h <= cfg.step_halvings && !reduced; ++h, t /= 2) {
      const ParameterVector x{g.beta + t * step.head(1), g.theta + t * step(1)};
      if (x.theta <= 0) continue;
      reduced = profile_score(ds, fm, x).lpNorm<Eigen::Infinity>() < u.lpNorm<Eigen::Infinity>();
    }
    CHECK_MESSAGE(reduced, "seed ", seed);
  }
}

TEST_CASE("solver: error paths") {
  const Dataset none({Cluster{"a", {Subject{1.0, 0, {0.0}}, Subject{2.0, 0, {1.0}}}}}, {"z"});
  CHECK_THROWS_AS(fit(none, FrailtyModel::gamma(1.0)), EstimationError);

  const auto ds = generate(test_support::mc_design(100, 2.0, 3));
  SolverConfig one;
  one.max_iter = 1;
  try {
    fit(ds, FrailtyModel::gamma(1.0), one);
    FAIL("expected a ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK_FALSE(e.partial().converged);
    CHECK(e.partial().iterations == 1);
    CHECK(std::string(e.what()).find("no convergence") != std::string::npos);
  }

  SolverConfig bad;
  bad.tol_score = 0;
  CHECK_THROWS_AS(fit(ds, FrailtyModel::gamma(1.0), bad), ValidationError);
  bad = SolverConfig{};
  bad.beta0 = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(fit(ds, FrailtyModel::gamma(1.0), bad), ValidationError);
}

TEST_CASE("solver: theta excursions are clamped with a warning") {
  const auto ds = generate(test_support::mc_design(200, 3.0, 12));
  SolverConfig cfg;
  cfg.theta0 = 0.2;
  cfg.theta_max = 0.3;
  try {
    const auto fr = fit(ds, FrailtyModel::gamma(1.0), cfg);
    FAIL("root lies outside the box, fit should not converge");
  } catch (const ConvergenceError& e) {
    bool warned = false;
    for (const auto& w : e.partial().warnings) warned |= w.find("clamped") != std::string::npos;
    CHECK(warned);
    CHECK(std::string(e.what()).find("boundary") != std::string::npos);
    CHECK(e.partial().gamma_hat.theta <= 0.3 * (1 + 1e-12));
  }
}
