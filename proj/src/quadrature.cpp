#include "quadrature.hpp"

#include "frailtyfit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace frailtyfit::detail {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kTailDrop = 50.0;  // nats below the centre value
constexpr double kMaxT = 9.0;
constexpr double kSelfCheck = 1e-6;
constexpr int kMaxRefinements = 3;

std::string where(int r, double h, double theta) {
  std::ostringstream os;
  os.precision(17);
  os << "(r=" << r << ", h=" << h << ", theta=" << theta << ")";
  return os.str();
}

struct Sums {
  double s[4] = {0, 0, 0, 0};
  double t[2] = {0, 0};
  double tt = 0;
  double abs_t[2] = {0, 0};
  double abs_tt = 0;
};

}  // namespace

PhiBundle quadrature_bundle(const FrailtyModel& fm, int r, double h) {
  // log of w^s e^(-hw) f(w) dw/du at u = log w.
  auto log_integrand = [&](double u, double s) {
    const double w = std::exp(u);
    const double v = s * u - h * w + fm.log_density_at(u) + u;
    return std::isnan(v) ? kNegInf : v;
  };

  const double s_mid = r + 1.5;
  auto mode_search = [&](double u) {
    double d2 = -1.0;
    for (int it = 0; it < 200; ++it) {
      constexpr double e = 1e-3;
      const double g0 = log_integrand(u, s_mid);
      const double gp = log_integrand(u + e, s_mid);
      const double gm = log_integrand(u - e, s_mid);
      if (!std::isfinite(g0) || !std::isfinite(gp) || !std::isfinite(gm)) return std::pair{u, 0.0};
      const double d1 = (gp - gm) / (2 * e);
      d2 = (gp - 2 * g0 + gm) / (e * e);
      const double step = d2 < 0 ? std::clamp(-d1 / d2, -2.0, 2.0) : (d1 > 0 ? 1.0 : -1.0);
      u += step;
      if (std::abs(step) < 1e-7 && d2 < 0) return std::pair{u, d2};
    }
    return std::pair{u, d2 < 0 ? d2 : 0.0};
  };

  auto [u_star, curv] = mode_search(std::log((s_mid + 1.0) / (h + 1.0)));
  if (!(curv < 0)) {
    // Newton lost the integrand; coarse scan for the largest finite value.
    double best = kNegInf;
    for (double u = -60.0; u <= 20.0; u += 0.25) {
      const double g = log_integrand(u, s_mid);
      if (g > best) {
        best = g;
        u_star = u;
      }
    }
    if (!std::isfinite(best)) throw NumericError("phi integrand vanishes everywhere at " + where(r, h, fm.theta()));
    std::tie(u_star, curv) = mode_search(u_star);
    if (!(curv < 0)) curv = -1.0;
  }
  const double sigma = std::clamp(1.0 / std::sqrt(-curv), 1e-4, 20.0);

  const double threshold = log_integrand(u_star, s_mid) - kTailDrop;
  auto tail_value = [&](double t) {
    const double u = u_star + sigma * std::sinh(t);
    return std::max(log_integrand(u, r), log_integrand(u, r + 3.0)) + std::log(sigma * std::cosh(t));
  };
  double t_right = 1.0, t_left = 1.0;
  while (t_right < kMaxT && tail_value(t_right) > threshold) t_right += 0.25;
  while (t_left < kMaxT && tail_value(-t_left) > threshold) t_left += 0.25;

  // The coarse rule is every other node of the fine rule. When the two
  // disagree the grid is refined, a bounded number of times.
  for (int level = 0;; ++level) {
    const int coarse_n = std::max(fm.quadrature_nodes(), 8) << level;
    const int fine_n = 2 * coarse_n - 1;
    const double fine_step = (t_left + t_right) / (fine_n - 1);

    std::vector<double> us(static_cast<std::size_t>(fine_n));
    std::vector<double> base(us.size());
    std::vector<double> sc1(us.size()), sc2(us.size());
    double anchor = kNegInf;
    for (int i = 0; i < fine_n; ++i) {
      const double t = -t_left + i * fine_step;
      const double u = u_star + sigma * std::sinh(t);
      double b = -h * std::exp(u) + fm.log_density_at(u) + u + std::log(sigma * std::cosh(t));
      if (std::isnan(b)) b = kNegInf;
      const auto k = static_cast<std::size_t>(i);
      us[k] = u;
      base[k] = b;
      if (std::isfinite(b)) {
        sc1[k] = fm.dlog_dtheta_at(u);
        sc2[k] = fm.d2log_dtheta2_at(u);
        anchor = std::max(anchor, b + r * u);
      }
    }
    if (!std::isfinite(anchor)) throw NumericError("phi integrand overflow or underflow at " + where(r, h, fm.theta()));

    auto accumulate = [&](int stride, double step) {
      Sums out;
      for (std::size_t k = 0; k < us.size(); k += static_cast<std::size_t>(stride)) {
        if (!std::isfinite(base[k])) continue;
        const double e0 = std::exp(base[k] + r * us[k] - anchor);
        if (e0 == 0.0) continue;
        const double w = std::exp(us[k]);
        const double e1 = e0 * w;
        out.s[0] += e0;
        out.s[1] += e1;
        out.s[2] += e1 * w;
        out.s[3] += e1 * w * w;
        const double d2 = sc1[k] * sc1[k] + sc2[k];
        out.t[0] += e0 * sc1[k];
        out.t[1] += e1 * sc1[k];
        out.tt += e0 * d2;
        out.abs_t[0] += std::abs(e0 * sc1[k]);
        out.abs_t[1] += std::abs(e1 * sc1[k]);
        out.abs_tt += std::abs(e0 * d2);
      }
      for (double& v : out.s) v *= step;
      for (double& v : out.t) v *= step;
      for (double& v : out.abs_t) v *= step;
      out.tt *= step;
      out.abs_tt *= step;
      return out;
    };

    const Sums fine = accumulate(1, fine_step);
    const Sums coarse = accumulate(2, 2 * fine_step);
    if (!(fine.s[0] > 0) || !std::isfinite(fine.s[3]) || !std::isfinite(fine.tt))
      throw NumericError("phi integrals not representable at " + where(r, h, fm.theta()));

    auto rel = [](double a, double b, double scale) { return std::abs(a - b) / std::max(scale, 1e-300); };
    double worst = 0.0;
    for (int k = 0; k < 4; ++k) worst = std::max(worst, rel(coarse.s[k], fine.s[k], std::abs(fine.s[k])));
    for (int k = 0; k < 2; ++k) worst = std::max(worst, rel(coarse.t[k], fine.t[k], fine.abs_t[k]));
    worst = std::max(worst, rel(coarse.tt, fine.tt, fine.abs_tt));
    if (!(worst <= kSelfCheck)) {
      if (level < kMaxRefinements) continue;
      std::ostringstream os;
      os << "quadrature self-check failed at " << where(r, h, fm.theta()) << ": node doubling changed the result by "
         << worst << " (relative)";
      throw AccuracyError(os.str());
    }

    PhiBundle b;
    const double s0 = fine.s[0];
    for (int k = 0; k < 4; ++k) b.phi[static_cast<std::size_t>(k)] = fine.s[k] / s0;
    b.phi_theta = {fine.t[0] / s0, fine.t[1] / s0};
    b.phi_theta_theta = fine.tt / s0;
    b.log_scale_anchor = anchor + std::log(s0);
    return b;
  }
}

}  // namespace frailtyfit::detail
