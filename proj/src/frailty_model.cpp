#include "frailtyfit/frailty_model.hpp"

#include "frailtyfit/errors.hpp"
#include "quadrature.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

namespace frailtyfit {

std::string_view to_string(FrailtyKind kind) {
  switch (kind) {
    case FrailtyKind::gamma: return "gamma";
    case FrailtyKind::lognormal: return "lognormal";
    case FrailtyKind::inverse_gaussian: return "invgauss";
    case FrailtyKind::custom: return "custom";
    case FrailtyKind::degenerate: return "none";
  }
  return "unknown";
}

FrailtyModel::FrailtyModel(FrailtyKind kind, double theta, int nodes) : kind_(kind), theta_(theta), nodes_(nodes) {
  if (!(theta_ > 0.0) || !std::isfinite(theta_)) return;  // rejected by validate()
  switch (kind_) {
    case FrailtyKind::gamma: {
      const double a = 1.0 / theta_;
      c_ = {a * std::log(a) - std::lgamma(a), boost::math::digamma(a), boost::math::trigamma(a)};
      break;
    }
    case FrailtyKind::lognormal:
      c_ = {-0.5 * std::log(2.0 * std::numbers::pi * theta_), 0.0, 0.0};
      break;
    case FrailtyKind::inverse_gaussian:
      c_ = {0.5 * std::log(1.0 / (2.0 * std::numbers::pi * theta_)), 0.0, 0.0};
      break;
    default:
      break;
  }
}

void FrailtyModel::validate() const {
  if (nodes_ < 8) throw ValidationError("quadrature_nodes must be at least 8");
  if (kind_ == FrailtyKind::degenerate) return;
  if (!admissible(theta_)) {
    std::ostringstream os;
    os << name() << " frailty: theta=" << theta_ << " is outside the admissible domain";
    throw ValidationError(os.str());
  }
  double total = 0.0;
  try {
    total = std::exp(detail::quadrature_bundle(*this, 0, 0.0).log_scale_anchor);
  } catch (const std::runtime_error& e) {
    throw ValidationError(name() + " frailty: cannot integrate the density and its first moments: " + e.what());
  }
  if (!(std::abs(total - 1.0) <= 1e-6)) {
    std::ostringstream os;
    os.precision(10);
    os << name() << " frailty density integrates to " << total << ", not 1";
    throw ValidationError(os.str());
  }
}

FrailtyModel FrailtyModel::gamma(double theta, int nodes) {
  FrailtyModel fm(FrailtyKind::gamma, theta, nodes);
  fm.validate();
  return fm;
}

FrailtyModel FrailtyModel::lognormal(double theta, int nodes) {
  FrailtyModel fm(FrailtyKind::lognormal, theta, nodes);
  fm.validate();
  return fm;
}

FrailtyModel FrailtyModel::inverse_gaussian(double theta, int nodes) {
  FrailtyModel fm(FrailtyKind::inverse_gaussian, theta, nodes);
  fm.validate();
  return fm;
}

FrailtyModel FrailtyModel::custom(DensitySpec spec, double theta, int nodes) {
  if (!spec.log_density) throw ValidationError("custom frailty needs a log density");
  FrailtyModel fm(FrailtyKind::custom, theta, nodes);
  fm.custom_ = std::make_shared<const DensitySpec>(std::move(spec));
  fm.validate();
  return fm;
}

FrailtyModel FrailtyModel::degenerate() { return FrailtyModel(FrailtyKind::degenerate, 0.0, default_nodes); }

FrailtyModel FrailtyModel::from_name(std::string_view kind, double theta, int nodes) {
  if (kind == "gamma") return gamma(theta, nodes);
  if (kind == "lognormal") return lognormal(theta, nodes);
  if (kind == "invgauss" || kind == "inverse-gaussian" || kind == "inverse_gaussian")
    return inverse_gaussian(theta, nodes);
  if (kind == "none" || kind == "degenerate") return degenerate();
  throw ValidationError("unknown frailty kind '" + std::string(kind) + "'");
}

FrailtyModel FrailtyModel::with_theta(double theta) const {
  if (kind_ == FrailtyKind::degenerate) return *this;
  FrailtyModel fm(kind_, theta, nodes_);
  fm.force_quadrature_ = force_quadrature_;
  fm.custom_ = custom_;
  fm.validate();
  return fm;
}

FrailtyModel FrailtyModel::with_quadrature() const {
  FrailtyModel fm = *this;
  fm.force_quadrature_ = true;
  return fm;
}

std::string FrailtyModel::name() const {
  if (kind_ == FrailtyKind::custom) return custom_->name;
  return std::string(to_string(kind_));
}

bool FrailtyModel::admissible(double theta) const {
  if (!std::isfinite(theta)) return false;
  switch (kind_) {
    case FrailtyKind::custom: return custom_->admissible(theta);
    case FrailtyKind::degenerate: return true;
    default: return theta > 0.0;
  }
}

std::optional<double> FrailtyModel::tail_exponent() const {
  switch (kind_) {
    case FrailtyKind::gamma: return 1.0 / theta_;
    case FrailtyKind::custom:
      if (custom_->tail_exponent) return custom_->tail_exponent(theta_);
      return std::nullopt;
    default:
      // lognormal and inverse Gaussian densities vanish faster than any power at 0.
      return std::nullopt;
  }
}

double FrailtyModel::log_density_at(double u) const {
  const double w = std::exp(u);
  switch (kind_) {
    case FrailtyKind::gamma: {
      const double a = 1.0 / theta_;
      return c_[0] + (a - 1.0) * u - a * w;
    }
    case FrailtyKind::lognormal: {
      const double d = u + 0.5 * theta_;
      return -u + c_[0] - d * d / (2.0 * theta_);
    }
    case FrailtyKind::inverse_gaussian: {
      const double q = w - 2.0 + std::exp(-u);
      return c_[0] - 1.5 * u - q / (2.0 * theta_);
    }
    case FrailtyKind::custom: return custom_->log_density(w, theta_);
    case FrailtyKind::degenerate: break;
  }
  throw ValidationError("degenerate frailty has no density");
}

double FrailtyModel::dlog_dtheta_at(double u) const {
  const double w = std::exp(u);
  switch (kind_) {
    case FrailtyKind::gamma: {
      const double a = 1.0 / theta_;
      const double g = std::log(a) + 1.0 - c_[1] + u - w;
      return -a * a * g;
    }
    case FrailtyKind::lognormal:
      return -0.5 / theta_ + u * u / (2.0 * theta_ * theta_) - 0.125;
    case FrailtyKind::inverse_gaussian: {
      const double q = w - 2.0 + std::exp(-u);
      return -0.5 / theta_ + q / (2.0 * theta_ * theta_);
    }
    case FrailtyKind::custom: {
      if (custom_->dlog_dtheta) return custom_->dlog_dtheta(w, theta_);
      const double e = 1e-6 * std::max(1.0, theta_);
      return (custom_->log_density(w, theta_ + e) - custom_->log_density(w, theta_ - e)) / (2.0 * e);
    }
    case FrailtyKind::degenerate: break;
  }
  return 0.0;
}

double FrailtyModel::d2log_dtheta2_at(double u) const {
  const double w = std::exp(u);
  switch (kind_) {
    case FrailtyKind::gamma: {
      const double a = 1.0 / theta_;
      const double g = std::log(a) + 1.0 - c_[1] + u - w;
      return 2.0 * a * a * a * g + a * a * a - a * a * a * a * c_[2];
    }
    case FrailtyKind::lognormal:
      return 0.5 / (theta_ * theta_) - u * u / (theta_ * theta_ * theta_);
    case FrailtyKind::inverse_gaussian: {
      const double q = w - 2.0 + std::exp(-u);
      return 0.5 / (theta_ * theta_) - q / (theta_ * theta_ * theta_);
    }
    case FrailtyKind::custom: {
      if (custom_->d2log_dtheta2) return custom_->d2log_dtheta2(w, theta_);
      // Wider step than the first derivative: a second difference loses
      // twice the digits to cancellation.
      const double e = 1e-4 * std::max(1.0, theta_);
      return (custom_->log_density(w, theta_ + e) - 2.0 * custom_->log_density(w, theta_) +
              custom_->log_density(w, theta_ - e)) /
             (e * e);
    }
    case FrailtyKind::degenerate: break;
  }
  return 0.0;
}

void FrailtyModel::check_moments(int order) const {
  if (kind_ == FrailtyKind::degenerate || kind_ == FrailtyKind::gamma) return;
  const std::string msg = name() + " frailty: moments up to order " + std::to_string(order) + " are not finite";
  PhiBundle b;
  try {
    b = detail::quadrature_bundle(*this, std::max(order - 3, 0), 0.0);
  } catch (const std::runtime_error& e) {
    throw ValidationError(msg + " (" + e.what() + ")");
  }
  for (double v : b.phi)
    if (!std::isfinite(v) || !(v > 0)) throw ValidationError(msg);
}

namespace {

// Closed form for shape = rate = a = 1/theta:
//   phi(s, h) = a^a Gamma(s + a) / (Gamma(a) (h + a)^(s + a)).
// Its a-derivatives are written with finite digamma/trigamma differences and
// log1p so that they stay accurate as theta -> 0.
struct GammaLogDerivs {
  double d1, d2;  // theta-derivatives of log phi(s, h)
};

GammaLogDerivs gamma_log_derivs(double a, int s, double h) {
  double sum1 = 0.0, sum2 = 0.0;
  for (int j = 0; j < s; ++j) {
    const double x = 1.0 / (a + j);
    sum1 += x;
    sum2 += x * x;
  }
  const double la = sum1 - std::log1p(h / a) + (h - s) / (h + a);
  const double laa = -sum2 + h / (a * (a + h)) - (h - s) / ((h + a) * (h + a));
  const double a2 = a * a;
  return {-a2 * la, 2.0 * a2 * a * la + a2 * a2 * laa};
}

PhiBundle gamma_closed_form(const FrailtyModel& fm, int r, double h) {
  const double a = 1.0 / fm.theta();
  PhiBundle b;
  const double c = h + a;
  b.phi[0] = 1.0;
  b.phi[1] = (r + a) / c;
  b.phi[2] = b.phi[1] * (r + 1 + a) / c;
  b.phi[3] = b.phi[2] * (r + 2 + a) / c;
  const auto l0 = gamma_log_derivs(a, r, h);
  const auto l1 = gamma_log_derivs(a, r + 1, h);
  b.phi_theta = {l0.d1, b.phi[1] * l1.d1};
  b.phi_theta_theta = l0.d1 * l0.d1 + l0.d2;
  b.log_scale_anchor = a * std::log(a) - std::lgamma(a) + std::lgamma(r + a) - (r + a) * std::log(c);
  if (!std::isfinite(b.log_scale_anchor) || !std::isfinite(b.phi[3]) || !std::isfinite(b.phi_theta_theta)) {
    std::ostringstream os;
    os.precision(17);
    os << "gamma phi integrals overflow at (r=" << r << ", h=" << h << ", theta=" << fm.theta() << ")";
    throw NumericError(os.str());
  }
  return b;
}

}  // namespace

PhiBundle phi_bundle(const FrailtyModel& fm, int r, double h) {
  if (r < 0 || !(h >= 0.0) || !std::isfinite(h)) throw ValidationError("phi_bundle: need r >= 0 and finite h >= 0");
  if (fm.kind() == FrailtyKind::degenerate) {
    PhiBundle b;
    b.phi = {1.0, 1.0, 1.0, 1.0};
    b.log_scale_anchor = -h;
    return b;
  }
  if (fm.closed_form()) return gamma_closed_form(fm, r, h);
  return detail::quadrature_bundle(fm, r, h);
}

double psi(const FrailtyModel& fm, int r, double h) {
  if (fm.kind() == FrailtyKind::degenerate) return 1.0;
  if (fm.closed_form()) {
    const double a = 1.0 / fm.theta();
    return (r + a) / (h + a);
  }
  return phi_bundle(fm, r, h).psi();
}

double cluster_exposure(const Cluster& cl, const Eigen::VectorXd& beta, const StepFunction& L, double t,
                        std::vector<double>* per_member) {
  if (per_member) per_member->clear();
  double total = 0.0;
  for (const auto& s : cl.members) {
    if (s.covariates.size() != static_cast<std::size_t>(beta.size()))
      throw ValidationError("cluster_exposure: beta length does not match covariates");
    double lp = 0.0;
    for (std::size_t r = 0; r < s.covariates.size(); ++r) lp += beta(static_cast<Eigen::Index>(r)) * s.covariates[r];
    const double hij = L(std::min(s.time, t)) * std::exp(lp);
    if (per_member) per_member->push_back(hij);
    total += hij;
  }
  return total;
}

}  // namespace frailtyfit
