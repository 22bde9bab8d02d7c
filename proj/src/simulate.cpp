#include "frailtyfit/simulate.hpp"

#include "frailtyfit/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

namespace frailtyfit {

double Baseline::cumulative(double t) const {
  return kind == Kind::exponential ? rate * t : std::pow(t / scale, shape);
}

double Baseline::inverse(double x) const {
  return kind == Kind::exponential ? x / rate : scale * std::pow(x, 1.0 / shape);
}

void SimConfig::validate() const {
  if (n_clusters < 1) throw ValidationError("n_clusters must be positive");
  if (cluster_size < 1) throw ValidationError("cluster_size must be positive");
  if (!beta.allFinite()) throw ValidationError("beta must be finite");
  if (!covariates.empty() && covariates.size() != static_cast<std::size_t>(beta.size()))
    throw ValidationError("need one covariate law per beta entry");
  for (const auto& c : covariates)
    if (c.kind == CovariateLaw::Kind::bernoulli && !(c.q >= 0.0 && c.q <= 1.0))
      throw ValidationError("bernoulli probability must lie in [0, 1]");
  if (frailty != "none" && frailty != "degenerate" && !(theta > 0.0 && std::isfinite(theta)))
    throw ValidationError("theta must be positive");
  if (frailty != "gamma" && frailty != "lognormal" && frailty != "invgauss" && frailty != "inverse-gaussian" &&
      frailty != "none" && frailty != "degenerate")
    throw ValidationError("cannot simulate frailty kind '" + frailty + "'");
  if (baseline.kind == Baseline::Kind::exponential && !(baseline.rate > 0.0))
    throw ValidationError("baseline rate must be positive");
  if (baseline.kind == Baseline::Kind::weibull && !(baseline.shape > 0.0 && baseline.scale > 0.0))
    throw ValidationError("weibull shape and scale must be positive");
  if (censoring.kind != Censoring::Kind::none && !(censoring.value > 0.0 && std::isfinite(censoring.value)))
    throw ValidationError("censoring parameter must be positive");
}

namespace {

std::pair<std::string, std::vector<double>> split_law(const std::string& text) {
  const auto colon = text.find(':');
  std::string head = text.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != item.size()) throw ValidationError("bad number '" + item + "' in '" + text + "'");
      args.push_back(v);
    }
  }
  return {head, args};
}

void need_args(const std::string& text, const std::vector<double>& args, std::size_t n) {
  if (args.size() != n)
    throw ValidationError("'" + text + "' needs " + std::to_string(n) + " parameter" + (n == 1 ? "" : "s"));
  for (double a : args)
    if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("parameters in '" + text + "' must be positive");
}

}  // namespace

Baseline parse_baseline(const std::string& text) {
  const auto [head, args] = split_law(text);
  Baseline b;
  if (head == "exp" || head == "exponential") {
    need_args(text, args, 1);
    b.rate = args[0];
  } else if (head == "weibull") {
    need_args(text, args, 2);
    b.kind = Baseline::Kind::weibull;
    b.shape = args[0];
    b.scale = args[1];
  } else {
    throw ValidationError("unknown baseline '" + text + "' (use exp:rate or weibull:shape,scale)");
  }
  return b;
}

Censoring parse_censoring(const std::string& text) {
  const auto [head, args] = split_law(text);
  Censoring c;
  if (head == "none") {
    need_args(text, args, 0);
    return c;
  }
  if (head == "exp" || head == "exponential") c.kind = Censoring::Kind::exponential;
  else if (head == "uniform") c.kind = Censoring::Kind::uniform;
  else if (head == "admin") c.kind = Censoring::Kind::admin;
  else throw ValidationError("unknown censoring '" + text + "' (use none, exp:rate, uniform:c or admin:t)");
  need_args(text, args, 1);
  c.value = args[0];
  return c;
}

CovariateLaw parse_covariate_law(const std::string& text) {
  const auto [head, args] = split_law(text);
  CovariateLaw law;
  if (head == "bernoulli") {
    if (args.size() != 1 || !(args[0] >= 0.0 && args[0] <= 1.0))
      throw ValidationError("'" + text + "' needs a probability in [0, 1]");
    law.q = args[0];
  } else if (head == "normal") {
    if (!args.empty()) throw ValidationError("'normal' takes no parameters");
    law.kind = CovariateLaw::Kind::normal;
  } else {
    throw ValidationError("unknown covariate law '" + text + "' (use bernoulli:q or normal)");
  }
  return law;
}

std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t r) {
  std::uint64_t z = seed + (r + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Dataset generate(const SimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(replication_seed(cfg.seed, ~std::uint64_t{0}));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::exponential_distribution<double> unit_exp(1.0);
  const auto p = cfg.beta.size();

  auto draw_frailty = [&]() -> double {
    const double th = cfg.theta;
    if (cfg.frailty == "gamma") return std::gamma_distribution<double>(1.0 / th, th)(rng);
    if (cfg.frailty == "lognormal") return std::exp(-0.5 * th + std::sqrt(th) * norm(rng));
    if (cfg.frailty == "invgauss" || cfg.frailty == "inverse-gaussian") {
      // mean 1, shape 1/theta (Michael, Schucany and Haas)
      const double lam = 1.0 / th;
      const double nu = norm(rng);
      const double y = nu * nu;
      const double x = 1.0 + y / (2 * lam) - std::sqrt(4 * lam * y + y * y) / (2 * lam);
      return unif(rng) <= 1.0 / (1.0 + x) ? x : 1.0 / x;
    }
    return 1.0;
  };

  std::vector<Cluster> clusters;
  clusters.reserve(static_cast<std::size_t>(cfg.n_clusters));
  for (int i = 0; i < cfg.n_clusters; ++i) {
    Cluster cl{std::to_string(i + 1), {}};
    const double w = draw_frailty();
    for (int j = 0; j < cfg.cluster_size; ++j) {
      Subject s;
      double lp = 0.0;
      for (Eigen::Index r = 0; r < p; ++r) {
        const CovariateLaw law = cfg.covariates.empty() ? CovariateLaw{} : cfg.covariates[static_cast<std::size_t>(r)];
        const double z = law.kind == CovariateLaw::Kind::bernoulli ? (unif(rng) < law.q ? 1.0 : 0.0) : norm(rng);
        s.covariates.push_back(z);
        lp += cfg.beta(r) * z;
      }
      const double t0 = cfg.baseline.inverse(unit_exp(rng) / (w * std::exp(lp)));
      double c = INFINITY;
      switch (cfg.censoring.kind) {
        case Censoring::Kind::none: break;
        case Censoring::Kind::exponential: c = unit_exp(rng) / cfg.censoring.value; break;
        case Censoring::Kind::uniform: c = cfg.censoring.value * unif(rng); break;
        case Censoring::Kind::admin: c = cfg.censoring.value; break;
      }
      s.time = std::min(t0, c);
      s.status = t0 <= c ? 1 : 0;
      cl.members.push_back(std::move(s));
    }
    clusters.push_back(std::move(cl));
  }
  return Dataset(std::move(clusters));
}

int default_thread_count() {
  if (const char* env = std::getenv("FRAILTY_FIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min(v, 1024L));
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

McReport run_mc(const SimConfig& cfg, int reps, const SolverConfig& solver_cfg, int threads, int nodes) {
  if (reps < 1) throw ValidationError("reps must be at least 1");
  cfg.validate();
  solver_cfg.validate();
  const bool no_theta = cfg.frailty == "none" || cfg.frailty == "degenerate";
  const FrailtyModel fm = FrailtyModel::from_name(cfg.frailty, no_theta ? 1.0 : cfg.theta, nodes);
  const auto p = cfg.beta.size();
  const Eigen::Index q = p + (fm.has_theta() ? 1 : 0);

  struct Outcome {
    bool ok = false;
    Eigen::VectorXd est, se;
    double martingale_sum = 0.0;
    std::string message;
  };
  std::vector<Outcome> out(static_cast<std::size_t>(reps));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int r = next++; r < reps; r = next++) {
      Outcome& o = out[static_cast<std::size_t>(r)];
      try {
        SimConfig c = cfg;
        c.seed = replication_seed(cfg.seed, static_cast<std::uint64_t>(r));
        const Dataset ds = generate(c);
        const FitResult fr = fit(ds, fm, solver_cfg);
        o.est = fr.estimates();
        o.se = fr.std_errors();
        o.martingale_sum = fr.martingale_sum;
        o.ok = true;
      } catch (const std::exception& e) {
        o.message = e.what();
      }
    }
  };
  int nt = threads > 0 ? threads : default_thread_count();
  nt = std::min(nt, reps);
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  McReport rep;
  rep.replications = reps;
  for (Eigen::Index r = 0; r < p; ++r) rep.names.push_back("z" + std::to_string(r + 1));
  if (fm.has_theta()) rep.names.push_back("theta");
  rep.truth.resize(q);
  rep.truth.head(p) = cfg.beta;
  if (fm.has_theta()) rep.truth(p) = cfg.theta;

  for (int r = 0; r < reps; ++r) {
    const auto& o = out[static_cast<std::size_t>(r)];
    if (o.ok) ++rep.successes;
    else rep.failure_messages.push_back("replication " + std::to_string(r) + ": " + o.message);
  }
  rep.failures = reps - rep.successes;
  rep.estimates.resize(rep.successes, q);
  rep.std_errors.resize(rep.successes, q);
  {
    Eigen::Index row = 0;
    for (const auto& o : out) {
      if (!o.ok) continue;
      rep.estimates.row(row) = o.est.transpose();
      rep.std_errors.row(row) = o.se.transpose();
      rep.max_abs_martingale_sum = std::max(rep.max_abs_martingale_sum, std::abs(o.martingale_sum));
      ++row;
    }
  }

  const double nan = std::nan("");
  rep.mean_estimates = Eigen::VectorXd::Constant(q, nan);
  rep.empirical_sd = Eigen::VectorXd::Constant(q, nan);
  rep.mean_reported_se = Eigen::VectorXd::Constant(q, nan);
  rep.coverage_95 = Eigen::VectorXd::Constant(q, nan);
  rep.mean_abs_error = Eigen::VectorXd::Constant(q, nan);
  const int m = rep.successes;
  if (m > 0) {
    constexpr double z975 = 1.959963984540054;
    for (Eigen::Index c = 0; c < q; ++c) {
      const auto col = rep.estimates.col(c);
      const double mean = col.mean();
      rep.mean_estimates(c) = mean;
      rep.empirical_sd(c) = m > 1 ? std::sqrt((col.array() - mean).square().sum() / (m - 1)) : nan;
      rep.mean_abs_error(c) = (col.array() - rep.truth(c)).abs().mean();
      double se_sum = 0.0, covered = 0.0;
      int se_count = 0;
      for (int r = 0; r < m; ++r) {
        const double se = rep.std_errors(r, c);
        if (!std::isfinite(se)) continue;
        se_sum += se;
        ++se_count;
        if (std::abs(rep.estimates(r, c) - rep.truth(c)) <= z975 * se) covered += 1.0;
      }
      if (se_count > 0) {
        rep.mean_reported_se(c) = se_sum / se_count;
        rep.coverage_95(c) = covered / se_count;
      }
    }
  }
  return rep;
}

}  // namespace frailtyfit
