#pragma once

#include "cox_oracle.hpp"
#include "frailtyfit/data.hpp"
#include "frailtyfit/simulate.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace test_support {

// Small clustered data with gamma(1) frailty, Exp(0.5) censoring and times
// rounded to `grain` so that ties occur. Always has at least one event.
inline frailtyfit::Dataset random_dataset(std::uint64_t seed, int n, int max_size, int p, double grain = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(1, max_size);
  std::normal_distribution<double> norm;
  std::gamma_distribution<double> frailty(1.0, 1.0);
  std::exponential_distribution<double> unit(1.0);
  for (;;) {
    std::vector<frailtyfit::Cluster> cl;
    int events = 0;
    for (int i = 0; i < n; ++i) {
      frailtyfit::Cluster c;
      c.id = "c" + std::to_string(i);
      const double w = frailty(rng);
      const int m = size(rng);
      for (int j = 0; j < m; ++j) {
        frailtyfit::Subject s;
        double lp = 0.0;
        for (int r = 0; r < p; ++r) {
          s.covariates.push_back(norm(rng));
          lp += 0.5 * s.covariates.back();
        }
        double t = unit(rng) / (w * std::exp(lp));
        const double cens = 2.0 * unit(rng);
        s.status = t <= cens;
        t = std::min(t, cens);
        if (grain > 0) t = std::max(grain, std::ceil(t / grain) * grain);
        s.time = t;
        events += s.status;
        c.members.push_back(s);
      }
      cl.push_back(c);
    }
    if (events > 0) {
      std::vector<std::string> names;
      for (int r = 0; r < p; ++r) names.push_back("z" + std::to_string(r + 1));
      return frailtyfit::Dataset(cl, names);
    }
  }
}

inline oracle::CoxData cox_data(const frailtyfit::Dataset& ds) {
  oracle::CoxData d;
  const auto t = ds.times();
  const auto st = ds.statuses();
  d.time.assign(t.begin(), t.end());
  d.status.assign(st.begin(), st.end());
  d.z = ds.covariates();
  return d;
}

// The Monte Carlo design: clusters of 2, one Bernoulli(0.5) covariate,
// exponential(1) baseline, exponential censoring giving about 30% censoring.
inline frailtyfit::SimConfig mc_design(int n, double theta, std::uint64_t seed) {
  frailtyfit::SimConfig c;
  c.n_clusters = n;
  c.cluster_size = 2;
  c.beta = Eigen::VectorXd::Constant(1, std::log(2.0));
  c.frailty = "gamma";
  c.theta = theta;
  c.censoring.kind = frailtyfit::Censoring::Kind::exponential;
  c.censoring.value = 0.1246;
  c.seed = seed;
  return c;
}

}  // namespace test_support
