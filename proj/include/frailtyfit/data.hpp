#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace frailtyfit {

struct Subject {
  double time = 0.0;  // follow-up time T_ij = min(failure, censoring)
  int status = 0;     // 1 = event observed
  std::vector<double> covariates;
};

struct Cluster {
  std::string id;
  std::vector<Subject> members;
};

// Right-continuous nondecreasing step function, zero before the first knot.
class StepFunction {
 public:
  enum class Side { right, left };

  StepFunction() = default;
  StepFunction(std::vector<double> knots, std::vector<double> cumulative);

  static StepFunction from_jumps(std::vector<double> knots, const std::vector<double>& jumps);

  // f(t) for Side::right, f(t-) for Side::left.
  double eval(double t, Side side = Side::right) const;
  double operator()(double t) const { return eval(t, Side::right); }
  double left_limit(double t) const { return eval(t, Side::left); }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& cumulative() const { return cumulative_; }
  std::size_t size() const { return knots_.size(); }
  double jump(std::size_t k) const { return k == 0 ? cumulative_[0] : cumulative_[k] - cumulative_[k - 1]; }

 private:
  std::vector<double> knots_;
  std::vector<double> cumulative_;
};

// Clustered right-censored survival data with an event-time index.
//
// Subjects are also exposed as a flat cluster-major array: subject s of
// cluster i lives at cluster_begin(i) + j. Event times are the distinct
// times with status 1 (tau_1 < ... < tau_K) with multiplicities d_k.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Cluster> clusters, std::vector<std::string> covariate_names = {});

  std::size_t n() const { return clusters_.size(); }
  std::size_t p() const { return p_; }
  std::size_t subject_count() const { return times_.size(); }
  std::size_t max_cluster_size() const { return max_size_; }
  double tau() const { return tau_; }

  const std::vector<Cluster>& clusters() const { return clusters_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  std::size_t K() const { return event_times_.size(); }
  const std::vector<double>& event_times() const { return event_times_; }
  const std::vector<int>& event_counts() const { return event_counts_; }
  int total_events() const { return total_events_; }

  std::span<const double> times() const { return times_; }
  std::span<const int> statuses() const { return statuses_; }
  const Eigen::MatrixXd& covariates() const { return z_; }
  std::size_t cluster_begin(std::size_t i) const { return offsets_[i]; }
  std::size_t cluster_end(std::size_t i) const { return offsets_[i + 1]; }
  std::size_t cluster_of(std::size_t s) const { return cluster_of_[s]; }
  int cluster_events(std::size_t i) const { return cluster_events_[i]; }

  // Number of event times <= T_s. Subject s is at risk at knot k (0-based)
  // iff k < knots_through(s); its cumulative hazard Lambda(T_s) is the value
  // after knot knots_through(s) - 1.
  int knots_through(std::size_t s) const { return knots_through_[s]; }

  // Subjects whose last at-risk knot is k - 1, i.e. who leave the risk set
  // just before knot k. Indexed 0..K.
  const std::vector<std::size_t>& leaving_before(std::size_t k) const { return leaving_[k]; }

  // Subjects with an event at knot k.
  const std::vector<std::size_t>& failing_at(std::size_t k) const { return failing_[k]; }

  // exp(beta' Z_s) for every subject.
  std::vector<double> relative_risk(const Eigen::VectorXd& beta) const;

 private:
  std::vector<Cluster> clusters_;
  std::vector<std::string> covariate_names_;
  std::size_t p_ = 0;
  std::size_t max_size_ = 0;
  double tau_ = 0.0;
  std::vector<double> event_times_;
  std::vector<int> event_counts_;
  int total_events_ = 0;

  std::vector<double> times_;
  std::vector<int> statuses_;
  Eigen::MatrixXd z_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> cluster_of_;
  std::vector<int> cluster_events_;
  std::vector<int> knots_through_;
  std::vector<std::vector<std::size_t>> leaving_;
  std::vector<std::vector<std::size_t>> failing_;
};

struct CsvSchema {
  std::string cluster_column = "cluster";
  std::string time_column = "time";
  std::string status_column = "status";
  // Empty: every remaining column, in header order.
  std::vector<std::string> covariate_columns;
};

Dataset ingest_csv(std::istream& source, const CsvSchema& schema = {});
Dataset read_csv_file(const std::string& path, const CsvSchema& schema = {});

// Writes `cluster,time,status,<covariates>` with round-trip precision.
void emit_csv(const Dataset& ds, std::ostream& out);

struct RiskSetTotal {
  double total = 0.0;
  std::vector<double> per_cluster;  // R_i.(t)
};

// Sum over subjects with T_ij >= t of exp(beta' Z_ij).
RiskSetTotal risk_set_total(const Dataset& ds, double t, const Eigen::VectorXd& beta);

}  // namespace frailtyfit
