#pragma once

// Experiment sweeps: build each cell's problem and order, pick the step
// size, run, certify and write trace_<cell>.csv, trace_<cell>.meta.json and
// report_<cell>.json. Configs arrive as JSON (the CLI also converts YAML).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "piag/certify.hpp"
#include "piag/problems.hpp"
#include "piag/schedule.hpp"
#include "piag/solver.hpp"
#include "piag/step_size.hpp"
#include "piag/trace_io.hpp"

namespace piag {

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class StepMode { corollary2, theorem2, explicit_eta };

struct StepSizeSpec {
  StepMode mode = StepMode::corollary2;
  std::optional<double> eta;    // absolute step
  std::optional<double> eta_L;  // step as a multiple of 1/L
  int a = 3;                    // history parameter for theorem2 mode
};

struct ExperimentConfig {
  std::string name = "experiment";
  nlohmann::json problem;
  /// Explicit order, or null for the K-driven choice (full / cyclic / delay).
  nlohmann::json policy;
  StepSizeSpec step;
  std::optional<Iteration> iterations;
  std::optional<Iteration> windows;  // iterations = windows * (aK + 1)
  std::optional<double> target_epsilon;
  std::optional<double> target_relative;  // target = target_relative * F_0
  int recursion_a = 3;
  double reference_tolerance = 1e-12;
  std::vector<Iteration> sweep_K;
  std::vector<double> sweep_Q;
  std::vector<double> sweep_eta;
  unsigned jobs = 1;

  static ExperimentConfig from_json(const nlohmann::json& j);
};

namespace detail {

template <class T>
std::vector<T> list_or_scalar(const nlohmann::json& j) {
  if (j.is_array()) return j.get<std::vector<T>>();
  return {j.get<T>()};
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("config must be a mapping");
    static const char* known[] = {"name",           "problem",         "policy",
                                  "step_size",      "iterations",      "windows",
                                  "target_epsilon", "target_relative", "certify",
                                  "reference_tolerance", "sweep",      "jobs"};
    for (const auto& [key, _] : j.items())
      if (std::find_if(std::begin(known), std::end(known),
                       [&](const char* k) { return key == k; }) == std::end(known))
        throw ConfigError("unknown config key '" + key + "'");

    ExperimentConfig c;
    c.name = j.value("name", c.name);
    if (!j.contains("problem")) throw ConfigError("config needs a 'problem' section");
    c.problem = j.at("problem");
    if (!c.problem.contains("generator")) throw ConfigError("problem needs a 'generator'");
    if (j.contains("policy")) {
      c.policy = j.at("policy");
      if (c.policy.is_string()) c.policy = nlohmann::json{{"kind", c.policy.get<std::string>()}};
      if (c.policy.value("kind", std::string{}) == "auto") c.policy = nullptr;
    }
    if (j.contains("step_size")) {
      const auto& s = j.at("step_size");
      const auto mode = s.value("mode", std::string("corollary2"));
      if (mode == "corollary2")
        c.step.mode = StepMode::corollary2;
      else if (mode == "theorem2")
        c.step.mode = StepMode::theorem2;
      else if (mode == "explicit")
        c.step.mode = StepMode::explicit_eta;
      else
        throw ConfigError("unknown step_size mode '" + mode + "'");
      if (s.contains("eta")) c.step.eta = s.at("eta").get<double>();
      if (s.contains("eta_L")) c.step.eta_L = s.at("eta_L").get<double>();
      c.step.a = s.value("a", 3);
      if (c.step.mode == StepMode::explicit_eta && !c.step.eta && !c.step.eta_L)
        throw ConfigError("explicit step size needs 'eta' or 'eta_L'");
      if (c.step.a < 3) throw ConfigError("step_size.a must be >= 3");
    }
    if (j.contains("iterations")) c.iterations = j.at("iterations").get<Iteration>();
    if (j.contains("windows")) c.windows = j.at("windows").get<Iteration>();
    if (c.iterations && *c.iterations < 0) throw ConfigError("iterations must be >= 0");
    if (c.windows && *c.windows < 1) throw ConfigError("windows must be >= 1");
    if (j.contains("target_epsilon")) c.target_epsilon = j.at("target_epsilon").get<double>();
    if (j.contains("target_relative")) c.target_relative = j.at("target_relative").get<double>();
    if (j.contains("certify")) c.recursion_a = j.at("certify").value("a", 3);
    if (c.recursion_a < 2) throw ConfigError("certify.a must be >= 2");
    c.reference_tolerance = j.value("reference_tolerance", c.reference_tolerance);
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      for (const auto& [key, _] : s.items())
        if (key != "K" && key != "Q" && key != "eta")
          throw ConfigError("unknown sweep axis '" + key + "'");
      if (s.contains("K")) c.sweep_K = detail::list_or_scalar<Iteration>(s.at("K"));
      if (s.contains("Q")) c.sweep_Q = detail::list_or_scalar<double>(s.at("Q"));
      if (s.contains("eta")) c.sweep_eta = detail::list_or_scalar<double>(s.at("eta"));
      for (Iteration K : c.sweep_K)
        if (K < 0) throw ConfigError("sweep K values must be >= 0");
      for (double Q : c.sweep_Q)
        if (!(Q > 1.0)) throw ConfigError("sweep Q values must be > 1");
      for (double e : c.sweep_eta)
        if (!(e > 0.0)) throw ConfigError("sweep eta values must be > 0");
    }
    c.jobs = std::max(1u, j.value("jobs", 1u));
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

/// One fully determined run of a sweep.
struct CellPlan {
  std::string id;
  nlohmann::json problem;
  nlohmann::json policy;  // null: choose from K
  std::optional<Iteration> K;
  std::optional<double> eta;
};

inline std::string axis_label(const char* axis, double v) {
  std::ostringstream os;
  os << axis << v;
  return os.str();
}

/// Cartesian product of the sweep axes in K, Q, eta order.
inline std::vector<CellPlan> plan_cells(const ExperimentConfig& c) {
  std::vector<std::optional<Iteration>> Ks(c.sweep_K.begin(), c.sweep_K.end());
  std::vector<std::optional<double>> Qs(c.sweep_Q.begin(), c.sweep_Q.end());
  std::vector<std::optional<double>> etas(c.sweep_eta.begin(), c.sweep_eta.end());
  if (Ks.empty()) Ks.push_back(std::nullopt);
  if (Qs.empty()) Qs.push_back(std::nullopt);
  if (etas.empty()) etas.push_back(std::nullopt);

  if (!c.sweep_Q.empty() && c.problem.at("generator") != "regularized_least_squares")
    throw ConfigError("sweeping Q is supported for regularized_least_squares only");

  std::vector<CellPlan> cells;
  for (const auto& K : Ks)
    for (const auto& Q : Qs)
      for (const auto& eta : etas) {
        CellPlan p;
        p.problem = c.problem;
        if (Q) p.problem["condition_number"] = *Q;
        p.policy = K ? nlohmann::json() : c.policy;
        p.K = K;
        p.eta = eta;
        char idx[16];
        std::snprintf(idx, sizeof idx, "%03zu", cells.size());
        p.id = idx;
        if (K) p.id += "_" + axis_label("K", double(*K));
        if (Q) p.id += "_" + axis_label("Q", *Q);
        if (eta) p.id += "_" + axis_label("eta", *eta);
        cells.push_back(std::move(p));
      }
  return cells;
}

/// full for K = 0, cyclic for K = m - 1, uniform delay K otherwise.
inline OrderPolicy policy_for_staleness(std::size_t m, Iteration K) {
  if (K == 0) return OrderPolicy::full(m);
  if (K == Iteration(m) - 1) return OrderPolicy::cyclic(m);
  return OrderPolicy::uniform_delay(m, K);
}

struct CellResult {
  std::string id;
  bool failed = false;
  std::string error;
  nlohmann::json report;
};

inline nlohmann::json run_cell(const ExperimentConfig& c, const CellPlan& plan,
                               const std::filesystem::path& out_dir) {
  ProblemInstance problem = problem_from_json(plan.problem, false);
  problem.set_reference(solve_reference(problem, c.reference_tolerance));
  const double L = problem.smooth().L();
  const double mu = problem.smooth().mu();

  OrderPolicy policy = plan.K ? policy_for_staleness(problem.m(), *plan.K)
                       : plan.policy.is_null() ? OrderPolicy::full(problem.m())
                                               : OrderPolicy::from_json(plan.policy, problem.m());
  const Iteration K = policy.certified_staleness();

  const auto cor2 = step_size_corollary2(L, mu, K);
  double eta = cor2.eta;
  int envelope_a = cor2.a;
  std::string mode = "corollary2";
  if (plan.eta) {
    eta = *plan.eta;
    mode = "explicit";
  } else if (c.step.mode == StepMode::theorem2) {
    eta = step_size_theorem2(L, mu, K, c.step.a);
    envelope_a = c.step.a;
    mode = "theorem2";
  } else if (c.step.mode == StepMode::explicit_eta) {
    eta = c.step.eta ? *c.step.eta : *c.step.eta_L / L;
    mode = "explicit";
  }

  SolverConfig cfg = SolverConfig::for_policy(policy, eta, 1000);
  cfg.a = envelope_a;
  if (c.iterations)
    cfg.max_iters = *c.iterations;
  else if (c.windows)
    cfg.max_iters = *c.windows * (Iteration(envelope_a) * K + 1);

  const Vector x0 = Vector::Zero(problem.n());
  const double F0 = problem.objective(x0) - problem.reference().value;
  if (c.target_epsilon)
    cfg.target_epsilon = *c.target_epsilon;
  else if (c.target_relative)
    cfg.target_epsilon = *c.target_relative * F0;

  const IterateTrace trace = run(problem, cfg, x0);

  CertifyOptions opt;
  opt.recursion_a = c.recursion_a;
  opt.envelope_a = envelope_a;
  opt.complexity_epsilon = cfg.target_epsilon;
  std::vector<CertificateReport> checks;
  if (trace.iterations() >= 1) checks = certify_all(trace, opt);

  bool failed = trace.status == RunStatus::diverged || trace.status == RunStatus::non_finite;
  nlohmann::json check_json = nlohmann::json::array();
  for (const auto& r : checks) {
    failed = failed || r.failed();
    check_json.push_back(r.to_json());
  }

  nlohmann::json report{{"cell", plan.id},
                        {"step_mode", mode},
                        {"eta", eta},
                        {"K", K},
                        {"a", envelope_a},
                        {"recursion_a", c.recursion_a},
                        {"L", L},
                        {"mu", mu},
                        {"Q", L / mu},
                        {"kappa_bound", 1.0 - eta * mu / 18.0},
                        {"empirical_rate", empirical_rate(trace)},
                        {"iterations", trace.iterations()},
                        {"run_status", to_string(trace.status)},
                        {"diagnostic", trace.diagnostic},
                        {"pass", !failed},
                        {"checks", check_json}};

  write_file_atomic(out_dir / ("trace_" + plan.id + ".csv"), trace_csv_string(trace));
  write_file_atomic(out_dir / ("trace_" + plan.id + ".meta.json"),
                    trace_metadata_json(trace).dump(2) + "\n");
  write_file_atomic(out_dir / ("report_" + plan.id + ".json"), report.dump(2) + "\n");
  return report;
}

// ---------------------------------------------------------------------------
// Summaries

struct SummaryRow {
  std::string cell;
  std::string check;
  std::string status;  // PASS, FAIL, N/A, REFUSED, ERROR
  std::optional<double> worst_margin;
  std::optional<double> empirical_rate;
  std::optional<double> kappa_bound;
  std::string note;

  bool failing() const { return status == "FAIL" || status == "ERROR"; }
};

struct Summary {
  std::vector<SummaryRow> rows;
  int exit_code = 0;
  std::string text;
};

namespace detail {

inline std::optional<double> optional_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) return std::nullopt;
  return j.at(key).get<double>();
}

inline std::string fmt_opt(const std::optional<double>& v) {
  if (!v || std::isnan(*v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

inline std::vector<SummaryRow> rows_from_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return {{path.filename().string(), "-", "ERROR", {}, {}, {}, "unreadable report"}};
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    return {{path.filename().string(), "-", "ERROR", {}, {}, {}, "malformed JSON"}};
  }
  std::vector<SummaryRow> rows;
  try {
    const std::string cell = j.at("cell").get<std::string>();
    const auto rate = optional_number(j, "empirical_rate");
    const auto kappa = optional_number(j, "kappa_bound");
    const std::string run_status = j.value("run_status", std::string("completed"));
    if (run_status == "diverged" || run_status == "non_finite")
      rows.push_back({cell, "run", "FAIL", {}, rate, kappa, j.value("diagnostic", run_status)});
    for (const auto& cj : j.at("checks")) {
      const auto r = CertificateReport::from_json(cj);
      SummaryRow row{cell, r.check, "PASS", r.worst_margin, rate, kappa, r.detail};
      switch (r.status) {
        case CheckStatus::pass: row.status = "PASS"; break;
        case CheckStatus::fail: row.status = "FAIL"; break;
        case CheckStatus::not_applicable: row.status = "N/A"; break;
        case CheckStatus::refused: row.status = "REFUSED"; break;
      }
      // A margin below tolerance fails regardless of the recorded flag.
      if (r.worst_margin && (std::isnan(*r.worst_margin) || *r.worst_margin < -r.tolerance))
        row.status = "FAIL";
      if (!cj.at("pass").get<bool>() && r.status == CheckStatus::pass) row.status = "FAIL";
      rows.push_back(std::move(row));
    }
  } catch (const std::exception& e) {
    return {{path.filename().string(), "-", "ERROR", {}, {}, {}, std::string("bad report: ") + e.what()}};
  }
  return rows;
}

}  // namespace detail

/// One row per (cell, check), failing rows first. Exit code 1 if any row
/// fails or a report cannot be read.
inline Summary report_summary(const std::vector<std::filesystem::path>& reports) {
  Summary s;
  for (const auto& p : reports) {
    auto rows = detail::rows_from_report(p);
    s.rows.insert(s.rows.end(), rows.begin(), rows.end());
  }
  std::stable_partition(s.rows.begin(), s.rows.end(),
                        [](const SummaryRow& r) { return r.failing(); });
  std::ostringstream os;
  if (!s.rows.empty()) {
    char line[512];
    std::snprintf(line, sizeof line, "%-24s %-22s %-8s %14s %14s %14s\n", "cell", "check",
                  "status", "worst_margin", "emp_rate", "1-eta*mu/18");
    os << line;
    for (const auto& r : s.rows) {
      std::snprintf(line, sizeof line, "%-24s %-22s %-8s %14s %14s %14s\n", r.cell.c_str(),
                    r.check.c_str(), r.status.c_str(), detail::fmt_opt(r.worst_margin).c_str(),
                    detail::fmt_opt(r.empirical_rate).c_str(),
                    detail::fmt_opt(r.kappa_bound).c_str());
      os << line;
      if (r.failing()) s.exit_code = 1;
    }
  }
  s.text = os.str();
  return s;
}

/// report_*.json files in dir, sorted by name.
inline std::vector<std::filesystem::path> find_reports(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("report_", 0) == 0 && e.path().extension() == ".json")
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::vector<CellResult> cells;
  Summary summary;
  int exit_code = 0;
};

/// Runs every cell (up to `jobs` at once), writes per-cell files and
/// summary.txt into out_dir. Exit code 0 when everything certifies, 1 when
/// any run diverges, any check fails or a cell errors out.
inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const std::filesystem::path& out_dir) {
  const auto plans = plan_cells(config);
  // Surface configuration problems before any work starts.
  for (const auto& p : plans) {
    try {
      const auto probe = problem_from_json(p.problem, false);
      if (!p.K && !p.policy.is_null()) (void)OrderPolicy::from_json(p.policy, probe.m());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("cell ") + p.id + ": " + e.what());
    }
  }
  std::filesystem::create_directories(out_dir);

  ExperimentResult result;
  result.cells.resize(plans.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      CellResult& cell = result.cells[i];
      cell.id = plans[i].id;
      try {
        cell.report = run_cell(config, plans[i], out_dir);
        cell.failed = !cell.report.at("pass").get<bool>();
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
    }
  };
  const unsigned n_workers = std::min<unsigned>(config.jobs, unsigned(plans.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  std::vector<std::filesystem::path> reports;
  for (const auto& cell : result.cells) {
    if (!cell.error.empty()) {
      // Leave an error report behind so summaries see the cell.
      nlohmann::json err{{"cell", cell.id}, {"error", cell.error}};
      write_file_atomic(out_dir / ("report_" + cell.id + ".json"), err.dump(2) + "\n");
    }
    reports.push_back(out_dir / ("report_" + cell.id + ".json"));
    if (cell.failed) result.exit_code = 1;
  }
  result.summary = report_summary(reports);
  write_file_atomic(out_dir / "summary.txt", result.summary.text);
  if (result.summary.exit_code != 0) result.exit_code = 1;
  return result;
}

}  // namespace piag
