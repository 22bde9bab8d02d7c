#pragma once

#include "frailtyfit/data.hpp"
#include "frailtyfit/frailty_model.hpp"
#include "frailtyfit/simulate.hpp"
#include "frailtyfit/solver.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace frailtyfit {

inline constexpr int report_schema_version = 1;

// Covariate names followed by "theta" when the model has one.
std::vector<std::string> parameter_names(const Dataset& ds, const FrailtyModel& fm);

// Settings echoed into the output next to the estimates.
struct FitEcho {
  std::string input;
  const FrailtyModel* model = nullptr;
  const SolverConfig* solver = nullptr;
};

// FitOutput document. Works for converged fits and for the partial result
// carried by ConvergenceError (std_errors and covariance are then null).
nlohmann::json fit_output_json(const Dataset& ds, const FitResult& fr, const FitEcho& echo);

nlohmann::json mc_report_json(const McReport& rep, const SimConfig& sim, const SolverConfig& solver);

// name,estimate,std_error
void write_parameter_csv(const Dataset& ds, const FitResult& fr, const FrailtyModel& fm, std::ostream& out);

// time,cumulative_hazard at every knot of the profile estimate.
void write_hazard_csv(const StepFunction& lambda, std::ostream& out);

// One line of text with a trailing newline; NaN and infinities become null.
std::string dump_json(const nlohmann::json& j);

}  // namespace frailtyfit
