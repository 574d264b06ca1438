#pragma once

// Proximal incremental aggregated gradient iteration
//
//   x_{k+1} = prox_r^eta(x_k - eta g_k) = x_k + eta d_k,
//   d_k = -g_k - h_{k+1},  h_{k+1} in subdiff r(x_{k+1}).
//
// Components due at iteration k are refreshed before g_k is formed, so a
// component refreshed at k contributes grad f_i(x_k).

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "piag/problems.hpp"
#include "piag/prox.hpp"
#include "piag/schedule.hpp"
#include "piag/step_size.hpp"
#include "piag/types.hpp"

namespace piag {

struct SolverConfig {
  double eta = 0.0;
  /// Staleness bound. Must cover the policy's certified staleness.
  Iteration K = 0;
  OrderPolicy policy = OrderPolicy::full(1);
  Iteration max_iters = 1000;
  /// History parameter used by the envelope check.
  int a = 3;
  /// Stop once F(x_k) - F(x*) <= target_epsilon.
  std::optional<double> target_epsilon;
  /// Keep every x_k and d_k in the trace.
  bool store_iterates = true;
  double divergence_factor = 1e6;

  /// Config for `policy` with K set to its certified staleness.
  static SolverConfig for_policy(OrderPolicy policy, double eta, Iteration max_iters) {
    SolverConfig c;
    c.K = policy.certified_staleness();
    c.policy = std::move(policy);
    c.eta = eta;
    c.max_iters = max_iters;
    return c;
  }

  void validate(const ProblemInstance& p) const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("eta must be > 0");
    if (K < 0) throw std::invalid_argument("K must be >= 0");
    if (max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
    if (policy.m() != p.m())
      throw std::invalid_argument("policy component count does not match the problem");
    if (policy.certified_staleness() > K)
      throw std::invalid_argument("order policy can exceed the declared staleness bound K");
    if (target_epsilon && !(*target_epsilon >= 0.0))
      throw std::invalid_argument("target_epsilon must be >= 0");
  }

  /// eta <= 1/(L(K+1)), the hypothesis of the descent and direction bounds.
  bool within_descent_bound(double L) const {
    return eta <= 1.0 / (L * (static_cast<double>(K) + 1.0)) * (1.0 + 1e-12);
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"eta", eta},
                     {"K", K},
                     {"policy", policy.to_json()},
                     {"max_iters", max_iters},
                     {"a", a}};
    j["target_epsilon"] = target_epsilon ? nlohmann::json(*target_epsilon) : nlohmann::json();
    return j;
  }
};

struct StepResult {
  Vector x_next;
  Vector d;  // (x_next - x_k) / eta
  Vector h;  // -g - d, the subgradient of r picked at x_next
  Vector g;  // aggregated gradient used
};

/// One iteration at index k. `history` must end at x_k.
inline StepResult piag_step(const ConstVectorRef& x_k, GradientTable& table,
                            const OrderPolicy& policy, const ProxOperator& op, double eta,
                            Iteration k, const IterateHistory& history) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be > 0");
  refresh(table, policy, k, history);
  StepResult s;
  s.g = table.aggregated_gradient();
  const Vector y = x_k - eta * s.g;
  if (!y.allFinite())
    throw std::domain_error("non-finite iterate at k = " + std::to_string(k) +
                            " (step size too large or bad oracle)");
  s.x_next = op.apply(y, eta);
  s.d = (s.x_next - x_k) / eta;
  s.h = -s.g - s.d;
  return s;
}

enum class RunStatus { completed, target_reached, diverged, non_finite };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::target_reached: return "target_reached";
    case RunStatus::diverged: return "diverged";
    case RunStatus::non_finite: return "non_finite";
  }
  return "?";
}

/// Quantities recorded at iteration k. norm_d and grad_error describe the
/// step computed at x_k, including for the final row where that step is
/// not applied.
struct TraceRow {
  Iteration k = 0;
  double objective = 0.0;      // F(x_k)
  double suboptimality = 0.0;  // F(x_k) - F(x*), NaN without a reference
  double norm_d = 0.0;
  double dist_to_opt = 0.0;    // ||x_k - x*||, NaN without a reference
  double grad_error = 0.0;     // ||grad f(x_k) - g_k||
  Iteration staleness = 0;     // max_i (k - tau_i)
};

struct IterateTrace {
  std::vector<TraceRow> rows;
  std::vector<Vector> iterates;    // x_0 .. x_N when stored
  std::vector<Vector> directions;  // d_0 .. d_N when stored

  double eta = 0.0;
  Iteration K = 0;
  int a = 3;
  double L = 0.0;
  double mu = 0.0;
  double Q = 0.0;

  bool has_reference = false;
  double reference_value = std::numeric_limits<double>::quiet_NaN();
  double reference_residual = std::numeric_limits<double>::quiet_NaN();

  RunStatus status = RunStatus::completed;
  std::string diagnostic;
  nlohmann::json metadata;

  /// Iterations executed; rows.size() == iterations() + 1.
  Iteration iterations() const { return Iteration(rows.size()) - 1; }
  double F(Iteration k) const { return rows.at(std::size_t(k)).suboptimality; }
  double norm_d(Iteration k) const { return rows.at(std::size_t(k)).norm_d; }

  /// Suboptimality below which reference error dominates.
  double noise_floor() const {
    if (!has_reference) return 0.0;
    return 100.0 * (reference_residual +
                    std::numeric_limits<double>::epsilon() * (1.0 + std::abs(reference_value)));
  }
};

/// Runs PIAG from x0 for config.max_iters iterations or until the target
/// suboptimality is reached. Divergence (F_k > factor * F_0) and non-finite
/// iterates end the run early with a diagnostic in the trace.
inline IterateTrace run(const ProblemInstance& problem, const SolverConfig& config,
                        const ConstVectorRef& x0) {
  config.validate(problem);
  if (x0.size() != problem.n()) throw std::invalid_argument("x0 has the wrong dimension");
  if (!x0.allFinite()) throw std::domain_error("x0 must be finite");

  const SmoothSum& f = problem.smooth();
  IterateTrace trace;
  trace.eta = config.eta;
  trace.K = config.K;
  trace.a = config.a;
  trace.L = f.L();
  trace.mu = f.mu();
  trace.Q = f.Q();
  trace.has_reference = problem.has_reference();
  if (trace.has_reference) {
    trace.reference_value = problem.reference().value;
    trace.reference_residual = problem.reference().residual;
  }
  trace.metadata = {{"problem", problem.to_json()},
                    {"config", config.to_json()},
                    {"constants", {{"L", trace.L}, {"mu", trace.mu}, {"Q", trace.Q}}}};

  const double nan = std::numeric_limits<double>::quiet_NaN();
  IterateHistory history(config.policy.max_source_lag());
  Vector x = x0;
  history.push(x);
  GradientTable table(f, x);

  double F0 = 0.0;
  double threshold = std::numeric_limits<double>::infinity();
  for (Iteration k = 0;; ++k) {
    const double obj = problem.objective(x);
    const double sub = trace.has_reference ? obj - trace.reference_value : nan;

    StepResult step;
    try {
      step = piag_step(x, table, config.policy, problem.regularizer(), config.eta, k, history);
    } catch (const std::domain_error& e) {
      trace.status = RunStatus::non_finite;
      trace.diagnostic = e.what();
      break;
    }
    const Iteration stale = table.max_staleness(k);
    if (stale > config.K)
      throw std::logic_error("staleness bound violated at k = " + std::to_string(k));

    TraceRow row;
    row.k = k;
    row.objective = obj;
    row.suboptimality = sub;
    row.norm_d = step.d.norm();
    row.dist_to_opt = trace.has_reference ? (x - problem.reference().x).norm() : nan;
    row.grad_error = (f.gradient(x) - step.g).norm();
    row.staleness = stale;
    trace.rows.push_back(row);
    if (config.store_iterates) {
      trace.iterates.push_back(x);
      trace.directions.push_back(step.d);
    }

    // Divergence is measured on suboptimality when a reference exists.
    const double progress = trace.has_reference ? sub : std::abs(obj);
    if (k == 0) {
      F0 = progress;
      const double floor = trace.has_reference ? trace.noise_floor() : 1.0;
      threshold = config.divergence_factor * std::max(F0, floor);
    }
    if (!std::isfinite(obj)) {
      trace.status = RunStatus::non_finite;
      trace.diagnostic = "non-finite objective at k = " + std::to_string(k);
      break;
    }
    if (progress > threshold) {
      trace.status = RunStatus::diverged;
      char buf[200];
      std::snprintf(buf, sizeof buf,
                    "diverged at k = %lld: F_k = %.6g exceeds %.3g * max(F_0, noise floor); "
                    "eta = %.6g (eta L = %.3g) is too large",
                    static_cast<long long>(k), progress, config.divergence_factor, config.eta,
                    config.eta * trace.L);
      trace.diagnostic = buf;
      break;
    }
    if (config.target_epsilon && trace.has_reference && sub <= *config.target_epsilon) {
      trace.status = RunStatus::target_reached;
      break;
    }
    if (k >= config.max_iters) break;

    x = std::move(step.x_next);
    history.push(x);
  }
  return trace;
}

inline IterateTrace run(const ProblemInstance& problem, const SolverConfig& config) {
  return run(problem, config, Vector::Zero(problem.n()));
}

}  // namespace piag
