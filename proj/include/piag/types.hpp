#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace piag {

using Vector = Eigen::VectorXd;
using VectorRef = Eigen::Ref<Vector>;
using ConstVectorRef = Eigen::Ref<const Vector>;

/// Iteration counter. Signed so that window arithmetic like k - K stays
/// well defined before clamping.
using Iteration = std::int64_t;

/// Seeded Gaussian source. mt19937_64 and libstdc++'s normal_distribution
/// are both fully specified for a given seed, so generated data is
/// bit-reproducible from run to run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  Vector normal_vector(Eigen::Index n, double scale = 1.0) {
    Vector v(n);
    for (Eigen::Index j = 0; j < n; ++j) v[j] = scale * normal();
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Raised when an iterative routine runs out of budget before reaching its
/// tolerance. Carries the residual reached.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

inline bool all_finite(const ConstVectorRef& v) { return v.allFinite(); }

}  // namespace piag
