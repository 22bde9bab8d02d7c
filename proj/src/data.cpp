#include "frailtyfit/data.hpp"

#include "frailtyfit/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string_view>
#include <unordered_map>

namespace frailtyfit {

StepFunction::StepFunction(std::vector<double> knots, std::vector<double> cumulative)
    : knots_(std::move(knots)), cumulative_(std::move(cumulative)) {
  if (knots_.size() != cumulative_.size())
    throw ValidationError("step function: knots and cumulative differ in length");
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    if (!std::isfinite(knots_[k]) || !std::isfinite(cumulative_[k]))
      throw ValidationError("step function: non-finite knot or value");
    if (k > 0 && !(knots_[k] > knots_[k - 1]))
      throw ValidationError("step function: knots must be strictly increasing");
    const double prev = k == 0 ? 0.0 : cumulative_[k - 1];
    if (!(cumulative_[k] > prev))
      throw ValidationError("step function: jumps must be positive");
  }
}

StepFunction StepFunction::from_jumps(std::vector<double> knots, const std::vector<double>& jumps) {
  std::vector<double> cum(jumps.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    acc += jumps[k];
    cum[k] = acc;
  }
  return StepFunction(std::move(knots), std::move(cum));
}

double StepFunction::eval(double t, Side side) const {
  // Index of the first knot strictly greater than t (right) or >= t (left).
  auto it = side == Side::right ? std::upper_bound(knots_.begin(), knots_.end(), t)
                                : std::lower_bound(knots_.begin(), knots_.end(), t);
  const auto idx = static_cast<std::size_t>(it - knots_.begin());
  return idx == 0 ? 0.0 : cumulative_[idx - 1];
}

Dataset::Dataset(std::vector<Cluster> clusters, std::vector<std::string> covariate_names)
    : clusters_(std::move(clusters)), covariate_names_(std::move(covariate_names)) {
  if (clusters_.empty()) throw ValidationError("dataset has no clusters");
  p_ = clusters_.front().members.empty() ? 0 : clusters_.front().members.front().covariates.size();

  std::size_t total = 0;
  for (const auto& cl : clusters_) {
    if (cl.members.empty()) throw ValidationError("cluster '" + cl.id + "' has no members");
    max_size_ = std::max(max_size_, cl.members.size());
    total += cl.members.size();
    for (const auto& s : cl.members) {
      if (!std::isfinite(s.time) || s.time < 0.0)
        throw ValidationError("cluster '" + cl.id + "': time must be finite and >= 0");
      if (s.status != 0 && s.status != 1)
        throw ValidationError("cluster '" + cl.id + "': status must be 0 or 1");
      if (s.covariates.size() != p_)
        throw SchemaError("cluster '" + cl.id + "': inconsistent covariate count");
      for (double z : s.covariates)
        if (!std::isfinite(z)) throw ValidationError("cluster '" + cl.id + "': non-finite covariate");
    }
  }
  if (covariate_names_.empty()) {
    for (std::size_t r = 0; r < p_; ++r) covariate_names_.push_back("z" + std::to_string(r + 1));
  } else if (covariate_names_.size() != p_) {
    throw SchemaError("covariate name count does not match covariate dimension");
  }

  times_.reserve(total);
  statuses_.reserve(total);
  z_.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(p_));
  offsets_.reserve(clusters_.size() + 1);
  cluster_events_.assign(clusters_.size(), 0);
  offsets_.push_back(0);
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    for (const auto& s : clusters_[i].members) {
      const auto row = static_cast<Eigen::Index>(times_.size());
      for (std::size_t r = 0; r < p_; ++r) z_(row, static_cast<Eigen::Index>(r)) = s.covariates[r];
      times_.push_back(s.time);
      statuses_.push_back(s.status);
      cluster_of_.push_back(i);
      cluster_events_[i] += s.status;
      tau_ = std::max(tau_, s.time);
    }
    offsets_.push_back(times_.size());
  }

  std::map<double, int> counts;
  for (std::size_t s = 0; s < times_.size(); ++s)
    if (statuses_[s] == 1) ++counts[times_[s]];
  for (const auto& [t, d] : counts) {
    event_times_.push_back(t);
    event_counts_.push_back(d);
    total_events_ += d;
  }

  const std::size_t K = event_times_.size();
  knots_through_.resize(times_.size());
  leaving_.assign(K + 1, {});
  failing_.assign(K, {});
  for (std::size_t s = 0; s < times_.size(); ++s) {
    const auto c = std::upper_bound(event_times_.begin(), event_times_.end(), times_[s]) - event_times_.begin();
    knots_through_[s] = static_cast<int>(c);
    leaving_[static_cast<std::size_t>(c)].push_back(s);
    if (statuses_[s] == 1) failing_[static_cast<std::size_t>(c - 1)].push_back(s);
  }
}

std::vector<double> Dataset::relative_risk(const Eigen::VectorXd& beta) const {
  if (static_cast<std::size_t>(beta.size()) != p_) throw ValidationError("beta length does not match p");
  std::vector<double> out(times_.size());
  if (p_ == 0) {
    std::fill(out.begin(), out.end(), 1.0);
    return out;
  }
  const Eigen::VectorXd lp = z_ * beta;
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = std::exp(lp(static_cast<Eigen::Index>(s)));
  return out;
}

namespace {

std::string_view trim(std::string_view v) {
  while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
  while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '\r')) v.remove_suffix(1);
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t line, std::string_view column) {
  double v = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
    throw ParseError("column '" + std::string(column) + "': cannot parse '" + std::string(field) + "' as a number", line);
  return v;
}

}  // namespace

Dataset ingest_csv(std::istream& source, const CsvSchema& schema) {
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(source, line)) {
    ++lineno;
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw ParseError("empty input: missing header row", 0);
  if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::vector<std::string> header;
  for (auto f : split(line)) header.emplace_back(f);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name.empty()) throw SchemaError("empty column name in header", lineno);
    if (!col.emplace(name, c).second) throw SchemaError("duplicate column '" + name + "'", lineno);
  }
  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("header lacks required column '" + name + "'", lineno);
    return it->second;
  };
  const std::size_t c_cluster = require(schema.cluster_column);
  const std::size_t c_time = require(schema.time_column);
  const std::size_t c_status = require(schema.status_column);

  std::vector<std::size_t> c_cov;
  std::vector<std::string> cov_names;
  if (schema.covariate_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == c_cluster || c == c_time || c == c_status) continue;
      c_cov.push_back(c);
      cov_names.emplace_back(header[c]);
    }
  } else {
    for (const auto& name : schema.covariate_columns) {
      c_cov.push_back(require(name));
      cov_names.push_back(name);
    }
  }

  std::vector<Cluster> clusters;
  std::unordered_map<std::string, std::size_t> index;
  while (std::getline(source, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size())
      throw SchemaError("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()),
                        lineno);
    Subject s;
    s.time = parse_number(fields[c_time], lineno, header[c_time]);
    const double status = parse_number(fields[c_status], lineno, header[c_status]);
    if (!std::isfinite(s.time) || s.time < 0.0)
      throw ValidationError("line " + std::to_string(lineno) + ": time must be finite and >= 0");
    if (status != 0.0 && status != 1.0)
      throw ValidationError("line " + std::to_string(lineno) + ": status must be 0 or 1");
    s.status = static_cast<int>(status);
    s.covariates.reserve(c_cov.size());
    for (std::size_t c : c_cov) {
      const double z = parse_number(fields[c], lineno, header[c]);
      if (!std::isfinite(z))
        throw ValidationError("line " + std::to_string(lineno) + ": covariate '" + std::string(header[c]) + "' is not finite");
      s.covariates.push_back(z);
    }
    const std::string id(fields[c_cluster]);
    if (id.empty()) throw ParseError("empty cluster id", lineno);
    auto [it, inserted] = index.emplace(id, clusters.size());
    if (inserted) clusters.push_back(Cluster{id, {}});
    clusters[it->second].members.push_back(std::move(s));
  }
  if (clusters.empty()) throw ParseError("no data rows after header", lineno);
  return Dataset(std::move(clusters), std::move(cov_names));
}

Dataset read_csv_file(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  try {
    return ingest_csv(in, schema);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), 0);
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void emit_csv(const Dataset& ds, std::ostream& out) {
  out << "cluster,time,status";
  for (const auto& name : ds.covariate_names()) out << ',' << name;
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (const auto& cl : ds.clusters()) {
    for (const auto& s : cl.members) {
      out << cl.id << ',';
      put(s.time);
      out << ',' << s.status;
      for (double z : s.covariates) {
        out << ',';
        put(z);
      }
      out << '\n';
    }
  }
}

RiskSetTotal risk_set_total(const Dataset& ds, double t, const Eigen::VectorXd& beta) {
  const auto rr = ds.relative_risk(beta);
  RiskSetTotal out;
  out.per_cluster.assign(ds.n(), 0.0);
  const auto times = ds.times();
  for (std::size_t s = 0; s < rr.size(); ++s)
    if (times[s] >= t) out.per_cluster[ds.cluster_of(s)] += rr[s];
  for (double r : out.per_cluster) out.total += r;
  return out;
}

}  // namespace frailtyfit
