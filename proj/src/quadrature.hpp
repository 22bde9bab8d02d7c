#pragma once

#include "frailtyfit/frailty_model.hpp"

namespace frailtyfit::detail {

// Tilted-moment integrals of a general frailty density.
//
// The integrand w^s e^(-hw) f(w) is moved to u = log w, centred at the mode
// u* of the middle moment and scaled by its curvature, then mapped through
// u = u* + sigma sinh(t). Power-law behaviour at w -> 0 and exponential
// decay at w -> infinity both become double-exponential decay in t, so the
// trapezoid rule in t converges geometrically, including for the log w
// factors carried by the theta-derivatives of f.
//
// The rule with fm.quadrature_nodes() nodes is checked against the rule with
// the step halved; relative disagreement above 1e-6 raises AccuracyError.
// The refined value is returned.
PhiBundle quadrature_bundle(const FrailtyModel& fm, int r, double h);

}  // namespace frailtyfit::detail
