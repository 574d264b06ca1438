#pragma once

// Runtime certification of the descent, distance, direction and recursion
// inequalities behind the linear-rate guarantee, evaluated along a trace.
//
// Every check compares a bound side B against an observed side O and
// records the normalized margin (B - O) / (1 + |B|). A check passes when
// every margin is >= -tolerance. Sums over empty index ranges are zero and
// (k - K)_+ = max(k - K, 0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "piag/solver.hpp"
#include "piag/step_size.hpp"

namespace piag {

inline constexpr double kCertifyTolerance = 1e-8;

enum class CheckStatus { pass, fail, not_applicable, refused };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::not_applicable: return "not_applicable";
    case CheckStatus::refused: return "refused";
  }
  return "?";
}

inline CheckStatus check_status_from_string(const std::string& s) {
  if (s == "pass") return CheckStatus::pass;
  if (s == "fail") return CheckStatus::fail;
  if (s == "not_applicable") return CheckStatus::not_applicable;
  if (s == "refused") return CheckStatus::refused;
  throw std::invalid_argument("unknown check status '" + s + "'");
}

struct CertificateReport {
  std::string check;
  CheckStatus status = CheckStatus::not_applicable;
  std::size_t iterations_checked = 0;
  std::size_t iterations_skipped = 0;
  /// Smallest normalized margin seen; nullopt when nothing was checked.
  std::optional<double> worst_margin;
  std::optional<Iteration> first_violation;
  double tolerance = kCertifyTolerance;
  std::string detail;

  bool passed() const { return status == CheckStatus::pass; }
  bool failed() const { return status == CheckStatus::fail; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["check"] = check;
    j["pass"] = passed();
    j["status"] = to_string(status);
    j["worst_margin"] = worst_margin ? nlohmann::json(*worst_margin) : nlohmann::json();
    j["first_violation"] = first_violation ? nlohmann::json(*first_violation) : nlohmann::json();
    j["iterations_checked"] = iterations_checked;
    j["iterations_skipped"] = iterations_skipped;
    j["tolerance"] = tolerance;
    j["detail"] = detail;
    return j;
  }

  static CertificateReport from_json(const nlohmann::json& j) {
    CertificateReport r;
    r.check = j.at("check").get<std::string>();
    r.status = j.contains("status") ? check_status_from_string(j.at("status").get<std::string>())
                                    : (j.at("pass").get<bool>() ? CheckStatus::pass
                                                                : CheckStatus::fail);
    if (!j.at("worst_margin").is_null()) r.worst_margin = j.at("worst_margin").get<double>();
    if (!j.at("first_violation").is_null())
      r.first_violation = j.at("first_violation").get<Iteration>();
    r.iterations_checked = j.at("iterations_checked").get<std::size_t>();
    r.iterations_skipped = j.value("iterations_skipped", std::size_t{0});
    r.tolerance = j.at("tolerance").get<double>();
    r.detail = j.value("detail", std::string{});
    return r;
  }
};

/// Accumulates per-iteration comparisons into a report.
class MarginTracker {
 public:
  explicit MarginTracker(std::string name, double tol = kCertifyTolerance)
      : report_{std::move(name)} {
    report_.tolerance = tol;
  }

  /// Records bound >= observed at iteration k.
  void add(Iteration k, double bound, double observed) {
    const double margin = (bound - observed) / (1.0 + std::abs(bound));
    ++report_.iterations_checked;
    if (!report_.worst_margin || margin < *report_.worst_margin || std::isnan(margin))
      report_.worst_margin = margin;
    if ((std::isnan(margin) || margin < -report_.tolerance) && !report_.first_violation)
      report_.first_violation = k;
  }

  void skip() { ++report_.iterations_skipped; }

  CertificateReport finish(std::string detail = {}) {
    report_.detail = std::move(detail);
    if (report_.first_violation)
      report_.status = CheckStatus::fail;
    else if (report_.iterations_checked > 0)
      report_.status = CheckStatus::pass;
    else
      report_.status = CheckStatus::not_applicable;
    return report_;
  }

 private:
  CertificateReport report_;
};

/// epsilon_i = 2 eta L (eta K L)^(i-1) for i = 1..a-1 and the rate
/// 1 - eta mu / 18.
struct TheoryConstants {
  double eta = 0.0;
  double L = 0.0;
  double mu = 0.0;
  double Q = 0.0;
  Iteration K = 0;
  int a = 2;
  std::vector<double> epsilon;  // epsilon[i-1] = epsilon_i

  TheoryConstants(double eta_, double L_, double mu_, Iteration K_, int a_)
      : eta(eta_), L(L_), mu(mu_), Q(L_ / mu_), K(K_), a(a_) {
    if (a < 2) throw std::invalid_argument("history parameter a must be >= 2");
    const double ratio = eta * static_cast<double>(K) * L;
    for (int i = 1; i <= a - 1; ++i) epsilon.push_back(2.0 * eta * L * std::pow(ratio, i - 1));
  }

  static TheoryConstants from_trace(const IterateTrace& t, int a) {
    return {t.eta, t.L, t.mu, t.K, a};
  }

  double epsilon_sum() const {
    double s = 0.0;
    for (double e : epsilon) s += e;
    return s;
  }
  double epsilon_last() const { return epsilon.back(); }

  double kappa_bound() const { return 1.0 - eta * mu / 18.0; }

  /// (1 + 8 (aK+1) Q (eta K L)^(a-1)) / (1 + eta mu / 8), the contraction
  /// obtained before simplification; never larger than kappa_bound() under
  /// the theorem step size.
  double kappa_exact() const {
    const double Kd = static_cast<double>(K);
    return (1.0 + 8.0 * (a * Kd + 1.0) * Q * std::pow(eta * Kd * L, a - 1)) /
           (1.0 + eta * mu / 8.0);
  }
};

namespace detail {

inline void require_reference(const IterateTrace& t, const char* check) {
  if (!t.has_reference)
    throw std::invalid_argument(std::string(check) + " needs a reference optimum x*");
}

inline void require_steps(const IterateTrace& t, const char* check) {
  if (t.iterations() < 1)
    throw std::invalid_argument(std::string(check) + " needs a trace with at least one step");
}

/// sum_{j=lo}^{hi} ||d_j||^p over the clamped range.
inline double window_sum(const IterateTrace& t, Iteration lo, Iteration hi, int power) {
  lo = std::max<Iteration>(lo, 0);
  double s = 0.0;
  for (Iteration j = lo; j <= hi; ++j) {
    const double v = t.norm_d(j);
    s += power == 1 ? v : v * v;
  }
  return s;
}

/// Nonzero suboptimality too small to be distinguished from reference error.
/// An exact zero (x_k identical to the stored optimum) is still meaningful.
inline bool in_noise(double F, double floor) { return F != 0.0 && std::abs(F) < floor; }

inline CertificateReport refused(const std::string& name, const std::string& why) {
  CertificateReport r{name};
  r.status = CheckStatus::refused;
  r.detail = why;
  return r;
}

inline bool eta_within_descent(const IterateTrace& t) {
  return t.eta <= 1.0 / (t.L * (static_cast<double>(t.K) + 1.0)) * (1.0 + 1e-12);
}

}  // namespace detail

/// F_{k+1} <= F_k - (eta/2)||d_k||^2 + (eta^2 L / 2) sum_{j=(k-K)_+}^{k-1} ||d_j||^2
inline CertificateReport check_lemma1(const IterateTrace& t) {
  const char* name = "lemma1_descent";
  detail::require_reference(t, name);
  detail::require_steps(t, name);
  if (!detail::eta_within_descent(t))
    return detail::refused(name, "eta exceeds 1/(L(K+1))");
  MarginTracker tracker(name);
  const double floor = t.noise_floor();
  for (Iteration k = 0; k + 1 <= t.iterations(); ++k) {
    if (detail::in_noise(t.F(k), floor) || detail::in_noise(t.F(k + 1), floor)) {
      tracker.skip();
      continue;
    }
    const double dk = t.norm_d(k);
    const double bound = t.F(k) - 0.5 * t.eta * dk * dk +
                         0.5 * t.eta * t.eta * t.L * detail::window_sum(t, k - t.K, k - 1, 2);
    tracker.add(k, bound, t.F(k + 1));
  }
  return tracker.finish();
}

/// ||grad f(x_k) - g_k|| <= eta L sum_{j=(k-K)_+}^{k-1} ||d_j||
inline CertificateReport check_gradient_error(const IterateTrace& t) {
  MarginTracker tracker("gradient_error");
  for (Iteration k = 0; k <= t.iterations(); ++k) {
    const double bound = t.eta * t.L * detail::window_sum(t, k - t.K, k - 1, 1);
    tracker.add(k, bound, t.rows[std::size_t(k)].grad_error);
  }
  return tracker.finish();
}

/// ||x_k - x*|| <= (2/mu)||d_k|| + 2 eta Q sum_{j=(k-K)_+}^{k-1} ||d_j||
inline CertificateReport check_lemma2(const IterateTrace& t) {
  const char* name = "lemma2_distance";
  detail::require_reference(t, name);
  if (!(t.eta <= (1.0 / t.L) * (1.0 + 1e-12))) return detail::refused(name, "eta exceeds 1/L");
  MarginTracker tracker(name);
  for (Iteration k = 0; k <= t.iterations(); ++k) {
    const double bound = (2.0 / t.mu) * t.norm_d(k) +
                         2.0 * t.eta * t.Q * detail::window_sum(t, k - t.K, k - 1, 1);
    tracker.add(k, bound, t.rows[std::size_t(k)].dist_to_opt);
  }
  return tracker.finish();
}

/// -||d_k||^2 <= -(mu/4) F_{k+1} + eta L sum_{j=(k-K)_+}^{k-1} ||d_j||^2
inline CertificateReport check_lemma3(const IterateTrace& t) {
  const char* name = "lemma3_direction";
  detail::require_reference(t, name);
  detail::require_steps(t, name);
  if (!detail::eta_within_descent(t))
    return detail::refused(name, "eta exceeds 1/(L(K+1))");
  MarginTracker tracker(name);
  const double floor = t.noise_floor();
  for (Iteration k = 0; k + 1 <= t.iterations(); ++k) {
    if (detail::in_noise(t.F(k + 1), floor)) {
      tracker.skip();
      continue;
    }
    const double dk = t.norm_d(k);
    const double bound = -0.25 * t.mu * t.F(k + 1) +
                         t.eta * t.L * detail::window_sum(t, k - t.K, k - 1, 2);
    tracker.add(k, bound, -dk * dk);
  }
  return tracker.finish();
}

namespace detail {

/// Shared driver for the two a-step recursions, checked for aK+1 <= k < N.
template <class Remainder>
CertificateReport check_recursion(const IterateTrace& t, int a, const char* name,
                                  Remainder remainder) {
  if (a < 2) throw std::invalid_argument("history parameter a must be >= 2");
  require_reference(t, name);
  require_steps(t, name);
  if (!eta_within_descent(t)) return refused(name, "eta exceeds 1/(L(K+1))");
  const TheoryConstants c = TheoryConstants::from_trace(t, a);
  const double eps_sum = c.epsilon_sum();
  const double lhs_factor = 1.0 + t.eta * t.mu / 8.0;
  const Iteration start = Iteration(a) * t.K + 1;
  const double floor = t.noise_floor();
  MarginTracker tracker(name);
  for (Iteration k = start; k + 1 <= t.iterations(); ++k) {
    bool noisy = in_noise(t.F(k + 1), floor) || in_noise(t.F(k), floor);
    double bound = (1.0 - eps_sum) * t.F(k);
    for (int i = 1; i <= a - 1; ++i) {
      const Iteration idx = k - Iteration(i) * t.K;
      noisy = noisy || in_noise(t.F(idx), floor);
      bound += c.epsilon[std::size_t(i - 1)] * t.F(idx);
    }
    if (noisy) {
      tracker.skip();
      continue;
    }
    bound += remainder(c, k);
    tracker.add(k, bound, lhs_factor * t.F(k + 1));
  }
  auto report = tracker.finish();
  if (report.iterations_checked == 0 && report.iterations_skipped == 0)
    report.detail = "trace shorter than aK + 2 rows";
  return report;
}

}  // namespace detail

/// (1 + eta mu/8) F_{k+1} <= (1 - sum eps_i) F_k + sum eps_i F_{k-iK}
///                          + (eta^2 K L / 2) eps_{a-1} sum_{j=k-aK}^{k-1} ||d_j||^2
inline CertificateReport check_theorem1_recursion(const IterateTrace& t, int a) {
  return detail::check_recursion(t, a, "theorem1_recursion",
                                 [&t, a](const TheoryConstants& c, Iteration k) {
                                   const double Kd = static_cast<double>(t.K);
                                   return 0.5 * t.eta * t.eta * Kd * t.L * c.epsilon_last() *
                                          detail::window_sum(t, k - Iteration(a) * t.K, k - 1, 2);
                                 });
}

/// (1 + eta mu/8) F_{k+1} <= (1 - sum eps_i) F_k + sum eps_i F_{k-iK}
///                          + 4 K Q eps_{a-1} sum_{j=k-aK}^{k} F_j
inline CertificateReport check_corollary1_recursion(const IterateTrace& t, int a) {
  return detail::check_recursion(t, a, "corollary1_recursion",
                                 [&t, a](const TheoryConstants& c, Iteration k) {
                                   double s = 0.0;
                                   for (Iteration j = k - Iteration(a) * t.K; j <= k; ++j)
                                     s += t.F(j);
                                   return 4.0 * static_cast<double>(t.K) * t.Q *
                                          c.epsilon_last() * s;
                                 });
}

/// Given Z_{k+1} <= p Z_k + sum_{l=0}^{A} q_l Z_{k-l} for k >= A with
/// r = p + sum q_l < 1, checks Z_k <= r^((k+1)/(A+1) - 1) max_{0<=j<=A} Z_j
/// for k >= A+1. q may be shorter than A+1; missing lags are zero.
inline CertificateReport check_sequence_lemma(std::span<const double> Z, double p,
                                              std::span<const double> q, std::size_t A) {
  if (!(p >= 0.0)) throw std::invalid_argument("p must be >= 0");
  if (q.size() > A + 1) throw std::invalid_argument("q has more lags than A + 1");
  double r = p;
  for (double v : q) {
    if (!(v >= 0.0)) throw std::invalid_argument("q entries must be >= 0");
    r += v;
  }
  if (!(r < 1.0)) throw std::invalid_argument("p + sum q must be < 1");
  for (double z : Z)
    if (!(z >= 0.0)) throw std::invalid_argument("sequence must be nonnegative");

  for (std::size_t k = A; k + 1 < Z.size(); ++k) {
    double rhs = p * Z[k];
    for (std::size_t l = 0; l < q.size(); ++l) rhs += q[l] * Z[k - l];
    if ((rhs - Z[k + 1]) / (1.0 + std::abs(rhs)) < -kCertifyTolerance)
      throw std::invalid_argument("sequence violates the recursion hypothesis at k = " +
                                  std::to_string(k));
  }

  MarginTracker tracker("sequence_lemma");
  if (Z.size() <= A + 1) return tracker.finish("sequence shorter than A + 2 terms");
  const double head = *std::max_element(Z.begin(), Z.begin() + std::ptrdiff_t(A + 1));
  const double log_r = std::log(r);
  for (std::size_t k = A + 1; k < Z.size(); ++k) {
    const double expo = double(k + 1) / double(A + 1) - 1.0;
    const double bound = r == 0.0 ? 0.0 : head * std::exp(expo * log_r);
    tracker.add(Iteration(k), bound, Z[k]);
  }
  return tracker.finish();
}

/// Least-squares slope of log F_k over the last half of the trace, as a
/// per-iteration rate. NaN if fewer than two usable points.
inline double empirical_rate(const IterateTrace& t) {
  const double floor = std::max(t.noise_floor(), std::numeric_limits<double>::min());
  const Iteration n = t.iterations();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t cnt = 0;
  for (Iteration k = n / 2; k <= n; ++k) {
    const double F = t.F(k);
    if (!(F > floor)) continue;
    const double x = double(k), y = std::log(F);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt < 2) return std::numeric_limits<double>::quiet_NaN();
  const double denom = double(cnt) * sxx - sx * sx;
  if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::exp((double(cnt) * sxy - sx * sy) / denom);
}

/// c_env * (1 - eta mu/18)^((k+1)/(aK+1) - 1).
inline double envelope_value(double c_env, double eta, double mu, int a, Iteration K, Iteration k) {
  const double window = double(Iteration(a) * K + 1);
  const double expo = double(k + 1) / window - 1.0;
  return c_env * std::exp(expo * std::log1p(-eta * mu / 18.0));
}

/// F_k <= (1 - eta mu/18)^((k+1)/(aK+1) - 1) max_{0<=j<=aK} F_j for k >= aK+1.
/// Refused when eta is above the theorem step size for this a.
inline CertificateReport check_theorem2_envelope(const IterateTrace& t, int a) {
  const char* name = "theorem2_envelope";
  if (a < 3) throw std::invalid_argument("history parameter a must be >= 3");
  detail::require_reference(t, name);
  const double eta_max = step_size_theorem2(t.L, t.mu, t.K, a);
  if (t.eta > eta_max * (1.0 + 1e-12))
    return detail::refused(name, "eta = " + std::to_string(t.eta) +
                                     " exceeds the guaranteed step " + std::to_string(eta_max));
  const Iteration window = Iteration(a) * t.K + 1;
  MarginTracker tracker(name);
  if (t.iterations() < window) return tracker.finish("trace shorter than aK + 2 rows");
  double c_env = t.F(0);
  for (Iteration j = 1; j < window; ++j) c_env = std::max(c_env, t.F(j));
  for (Iteration k = window; k <= t.iterations(); ++k)
    tracker.add(k, envelope_value(c_env, t.eta, t.mu, a, t.K, k), t.F(k));
  char buf[160];
  std::snprintf(buf, sizeof buf, "empirical rate %.6g vs guaranteed per-window rate %.6g",
                empirical_rate(t), 1.0 - t.eta * t.mu / 18.0);
  return tracker.finish(buf);
}

struct ComplexityComparison {
  std::optional<Iteration> k_actual;
  std::int64_t k_bound = 0;
  double c = 0.0;
  double epsilon = 0.0;
  bool within_bound() const { return !k_actual || *k_actual <= k_bound; }
};

/// First k with F_k <= epsilon against the iteration bound, with
/// c = max_{0<=j<=aK} F_j and a from the corollary step size.
inline ComplexityComparison empirical_vs_bound_complexity(const IterateTrace& t, double epsilon) {
  detail::require_reference(t, "complexity");
  const auto step = step_size_corollary2(t.L, t.mu, t.K);
  const Iteration last = std::min<Iteration>(Iteration(step.a) * t.K, t.iterations());
  ComplexityComparison out;
  out.epsilon = epsilon;
  out.c = t.F(0);
  for (Iteration j = 1; j <= last; ++j) out.c = std::max(out.c, t.F(j));
  for (Iteration k = 0; k <= t.iterations(); ++k) {
    if (t.F(k) <= epsilon) {
      out.k_actual = k;
      break;
    }
  }
  out.k_bound = out.c > 0.0 ? iteration_complexity(t.L, t.mu, t.K, out.c, epsilon) : 0;
  return out;
}

inline CertificateReport check_complexity(const IterateTrace& t, double epsilon) {
  const auto cmp = empirical_vs_bound_complexity(t, epsilon);
  CertificateReport r{"corollary2_complexity"};
  if (!cmp.k_actual) {
    r.status = CheckStatus::not_applicable;
    r.detail = "target not reached within the iteration budget";
    return r;
  }
  r.iterations_checked = 1;
  r.worst_margin = (double(cmp.k_bound) - double(*cmp.k_actual)) / (1.0 + double(cmp.k_bound));
  r.status = *cmp.k_actual <= cmp.k_bound ? CheckStatus::pass : CheckStatus::fail;
  if (r.failed()) r.first_violation = *cmp.k_actual;
  r.detail = "k_actual = " + std::to_string(*cmp.k_actual) +
             ", k_bound = " + std::to_string(cmp.k_bound);
  return r;
}

struct CertifyOptions {
  int recursion_a = 3;        // for the two recursions
  int envelope_a = 3;         // for the envelope
  std::optional<double> complexity_epsilon;
};

/// All trace checks in a fixed order.
inline std::vector<CertificateReport> certify_all(const IterateTrace& t,
                                                  const CertifyOptions& opt) {
  std::vector<CertificateReport> out;
  out.push_back(check_lemma1(t));
  out.push_back(check_gradient_error(t));
  out.push_back(check_lemma2(t));
  out.push_back(check_lemma3(t));
  out.push_back(check_theorem1_recursion(t, opt.recursion_a));
  out.push_back(check_corollary1_recursion(t, opt.recursion_a));
  out.push_back(check_theorem2_envelope(t, opt.envelope_a));
  if (opt.complexity_epsilon) out.push_back(check_complexity(t, *opt.complexity_epsilon));
  return out;
}

}  // namespace piag
