#pragma once

// Step sizes and iteration bounds that come with the linear-rate guarantee
//
//   F_k <= (1 - eta mu / 18)^((k+1)/(aK+1) - 1) * max_{0<=j<=aK} F_j.
//
// Logarithms are natural throughout.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "piag/types.hpp"

namespace piag {

namespace detail {

inline void check_constants(double L, double mu) {
  if (!(mu > 0.0) || !(L >= mu) || !std::isfinite(L))
    throw std::invalid_argument("need L >= mu > 0");
}

}  // namespace detail

/// (1 / (144 (aK+1) K Q^2))^(1/(a-2)), for K >= 1 and a >= 3.
inline double eta_bar(double Q, Iteration K, int a) {
  if (a < 3) throw std::invalid_argument("history parameter a must be >= 3");
  if (K < 1) throw std::invalid_argument("eta_bar is defined for K >= 1");
  const double Kd = static_cast<double>(K);
  const double base = 1.0 / (144.0 * (a * Kd + 1.0) * Kd * Q * Q);
  return std::pow(base, 1.0 / (a - 2));
}

/// (1/a) (1 / (12 (K+1) Q))^(2/(a-2)).
inline double eta_tilde(double Q, Iteration K, int a) {
  if (a < 3) throw std::invalid_argument("history parameter a must be >= 3");
  const double base = 1.0 / (12.0 * (static_cast<double>(K) + 1.0) * Q);
  return std::pow(base, 2.0 / (a - 2)) / a;
}

/// Largest step with the guaranteed envelope for history parameter a:
/// eta_bar_a / (3 L (K+1)). At K = 0 the formula is undefined and 1/(3L)
/// is returned instead.
inline double step_size_theorem2(double L, double mu, Iteration K, int a) {
  detail::check_constants(L, mu);
  if (a < 3) throw std::invalid_argument("history parameter a must be >= 3");
  if (K < 0) throw std::invalid_argument("staleness bound K must be >= 0");
  if (K == 0) return 1.0 / (3.0 * L);
  return eta_bar(L / mu, K, a) / (3.0 * L * (static_cast<double>(K) + 1.0));
}

struct Corollary2Step {
  int a = 0;
  double eta = 0.0;
  double eta_tilde = 0.0;
};

/// a = ceil(ln(12 (K+1) Q)) + 2 and eta = eta_tilde_a / (3 L (K+1)).
inline Corollary2Step step_size_corollary2(double L, double mu, Iteration K) {
  detail::check_constants(L, mu);
  if (K < 0) throw std::invalid_argument("staleness bound K must be >= 0");
  const double Q = L / mu;
  const double Kp1 = static_cast<double>(K) + 1.0;
  Corollary2Step s;
  s.a = static_cast<int>(std::ceil(std::log(12.0 * Kp1 * Q))) + 2;
  s.eta_tilde = eta_tilde(Q, K, s.a);
  s.eta = s.eta_tilde / (3.0 * L * Kp1);
  // eta_tilde never exceeds eta_bar and is at least 1/(a e^2).
  if (K >= 1 && !(s.eta_tilde <= eta_bar(Q, K, s.a) * (1.0 + 1e-12)))
    throw std::logic_error("corollary step exceeds the theorem bound");
  if (!(s.eta_tilde * s.a * std::numbers::e * std::numbers::e >= 1.0 - 1e-12))
    throw std::logic_error("corollary step below its lower bound");
  return s;
}

/// 54 e^2, the constant in the iteration bound.
inline constexpr double kComplexityConstant = 54.0 * std::numbers::e * std::numbers::e;

/// ceil(M a^2 (K+1)^2 Q ln(c/eps) + aK) with a from step_size_corollary2.
/// Returns 0 when eps > c (the start is already eps-optimal).
inline std::int64_t iteration_complexity(double L, double mu, Iteration K, double c,
                                         double epsilon) {
  if (!(c > 0.0) || !(epsilon > 0.0))
    throw std::invalid_argument("need c > 0 and epsilon > 0");
  if (epsilon > c) return 0;
  const auto step = step_size_corollary2(L, mu, K);
  const double Kp1 = static_cast<double>(K) + 1.0;
  const double a = step.a;
  const double bound = kComplexityConstant * a * a * Kp1 * Kp1 * (L / mu) * std::log(c / epsilon) +
                       a * static_cast<double>(K);
  if (bound >= static_cast<double>(std::numeric_limits<std::int64_t>::max()))
    return std::numeric_limits<std::int64_t>::max();
  return static_cast<std::int64_t>(std::ceil(bound));
}

}  // namespace piag
