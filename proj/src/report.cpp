#include "frailtyfit/report.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace frailtyfit {

namespace {

using nlohmann::json;

std::string number_text(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
  return a;
}

json named_json(const std::vector<std::string>& names, const Eigen::VectorXd& v) {
  json o = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) o[names[i]] = v(static_cast<Eigen::Index>(i));
  return o;
}

json solver_json(const SolverConfig& s) {
  return {{"theta0", s.theta0},
          {"beta0", vector_json(s.beta0)},
          {"tol_score", s.tol_score},
          {"max_iter", s.max_iter},
          {"step_halvings", s.step_halvings},
          {"theta_min", s.theta_min},
          {"theta_max", s.theta_max},
          {"hazard_correction", to_string(s.hazard_correction)},
          {"cox_start", s.cox_start}};
}

void write_value(const json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::number_float:
      out += number_text(j.get<double>());
      return;
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(k).dump(-1, ' ', false, json::error_handler_t::replace) + ": ";
        write_value(v, out, indent, depth + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // numeric rows stay on one line
      bool flat = true;
      for (const auto& v : j) flat &= !v.is_structured();
      out += flat ? "[" : "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += flat ? ", " : ",\n";
        if (!flat) out += pad;
        write_value(j[i], out, indent, depth + 1);
      }
      out += flat ? "]" : "\n" + close_pad + "]";
      return;
    }
    default:
      out += j.dump(-1, ' ', false, json::error_handler_t::replace);
  }
}

}  // namespace

std::vector<std::string> parameter_names(const Dataset& ds, const FrailtyModel& fm) {
  std::vector<std::string> names = ds.covariate_names();
  if (names.size() < ds.p())
    for (std::size_t r = names.size(); r < ds.p(); ++r) names.push_back("z" + std::to_string(r + 1));
  if (fm.has_theta()) names.push_back("theta");
  return names;
}

std::string dump_json(const nlohmann::json& j) {
  std::string out;
  write_value(j, out, 2, 0);
  out += '\n';
  return out;
}

nlohmann::json fit_output_json(const Dataset& ds, const FitResult& fr, const FitEcho& echo) {
  const FrailtyModel& fm = *echo.model;
  const auto names = parameter_names(ds, fm);
  json j;
  j["schema_version"] = report_schema_version;
  j["kind"] = "fit";
  j["estimates"] = named_json(names, fr.estimates());
  if (fr.converged && fr.covariance.size() > 0) {
    j["std_errors"] = named_json(names, fr.std_errors());
    j["covariance"] = matrix_json(fr.covariance);
  } else {
    j["std_errors"] = nullptr;
    j["covariance"] = nullptr;
  }
  j["parameter_names"] = names;
  const auto& L = fr.hazard.lambda;
  j["hazard_knots"] = L.knots();
  j["hazard_cumulative"] = L.cumulative();
  j["convergence"] = {{"converged", fr.converged},
                      {"iterations", fr.iterations},
                      {"score_norm", fr.score_norm},
                      {"score", named_json(names, fr.score)},
                      {"diagnostic", fr.diagnostic},
                      {"warnings", fr.warnings},
                      {"covariance_reliable", fr.converged && fr.covariance_reliable}};
  if (fr.converged) j["convergence"]["martingale_sum"] = fr.martingale_sum;
  j["model"] = {{"frailty", std::string(to_string(fm.kind()))},
                {"closed_form", fm.closed_form()},
                {"quadrature_nodes", fm.quadrature_nodes()},
                {"solver", solver_json(*echo.solver)}};
  j["data"] = {{"input", echo.input},
               {"clusters", ds.n()},
               {"subjects", ds.subject_count()},
               {"events", ds.total_events()},
               {"event_times", ds.K()},
               {"covariates", ds.covariate_names()}};
  return j;
}

nlohmann::json mc_report_json(const McReport& rep, const SimConfig& sim, const SolverConfig& solver) {
  json j;
  j["schema_version"] = report_schema_version;
  j["kind"] = "mc";
  j["replications"] = rep.replications;
  j["successes"] = rep.successes;
  j["failures"] = rep.failures;
  j["parameter_names"] = rep.names;
  j["truth"] = named_json(rep.names, rep.truth);
  j["mean_estimates"] = named_json(rep.names, rep.mean_estimates);
  j["empirical_sd"] = named_json(rep.names, rep.empirical_sd);
  j["mean_reported_se"] = named_json(rep.names, rep.mean_reported_se);
  j["coverage_95"] = named_json(rep.names, rep.coverage_95);
  j["mean_abs_error"] = named_json(rep.names, rep.mean_abs_error);
  j["max_abs_martingale_sum"] = rep.max_abs_martingale_sum;
  j["estimates"] = matrix_json(rep.estimates);
  j["std_errors"] = matrix_json(rep.std_errors);
  j["failure_messages"] = rep.failure_messages;

  json covs = json::array();
  for (const auto& c : sim.covariates) {
    covs.push_back(c.kind == CovariateLaw::Kind::bernoulli ? "bernoulli:" + number_text(c.q) : std::string("normal"));
  }
  std::string baseline = sim.baseline.kind == Baseline::Kind::exponential
                             ? "exp:" + number_text(sim.baseline.rate)
                             : "weibull:" + number_text(sim.baseline.shape) + "," + number_text(sim.baseline.scale);
  std::string censoring;
  switch (sim.censoring.kind) {
    case Censoring::Kind::none: censoring = "none"; break;
    case Censoring::Kind::exponential: censoring = "exp:" + number_text(sim.censoring.value); break;
    case Censoring::Kind::uniform: censoring = "uniform:" + number_text(sim.censoring.value); break;
    case Censoring::Kind::admin: censoring = "admin:" + number_text(sim.censoring.value); break;
  }
  j["design"] = {{"n", sim.n_clusters},
                 {"size", sim.cluster_size},
                 {"beta", vector_json(sim.beta)},
                 {"frailty", sim.frailty},
                 {"theta", sim.theta},
                 {"baseline", baseline},
                 {"censoring", censoring},
                 {"covariates", covs},
                 {"seed", sim.seed}};
  j["solver"] = solver_json(solver);
  return j;
}

void write_parameter_csv(const Dataset& ds, const FitResult& fr, const FrailtyModel& fm, std::ostream& out) {
  const auto names = parameter_names(ds, fm);
  const Eigen::VectorXd est = fr.estimates();
  const Eigen::VectorXd se = fr.std_errors();
  out << "name,estimate,std_error\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double s = fr.converged ? se(k) : std::nan("");
    out << names[i] << ',' << number_text(est(k)) << ',' << (std::isfinite(s) ? number_text(s) : "NA") << '\n';
  }
}

void write_hazard_csv(const StepFunction& lambda, std::ostream& out) {
  out << "time,cumulative_hazard\n";
  for (std::size_t k = 0; k < lambda.size(); ++k)
    out << number_text(lambda.knots()[k]) << ',' << number_text(lambda.cumulative()[k]) << '\n';
}

}  // namespace frailtyfit
