#pragma once

#include <Eigen/Core>

#include <cstddef>

namespace frailtyfit {

// gamma = (beta_1..beta_p, theta).
struct ParameterVector {
  Eigen::VectorXd beta;
  double theta = 1.0;

  std::size_t p() const { return static_cast<std::size_t>(beta.size()); }

  Eigen::VectorXd packed() const {
    Eigen::VectorXd g(beta.size() + 1);
    g.head(beta.size()) = beta;
    g(beta.size()) = theta;
    return g;
  }

  static ParameterVector unpack(const Eigen::VectorXd& g) {
    return ParameterVector{g.head(g.size() - 1), g(g.size() - 1)};
  }
};

}  // namespace frailtyfit
