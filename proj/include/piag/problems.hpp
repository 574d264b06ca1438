#pragma once

// Composite test problems  F(x) = (1/m) sum_i f_i(x) + r(x)  with declared
// smoothness and strong-convexity constants and a reference optimum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "piag/prox.hpp"
#include "piag/types.hpp"

namespace piag {

namespace detail {

inline nlohmann::json to_json_array(const ConstVectorRef& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j) {
  auto vals = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(vals.data(), Eigen::Index(vals.size()));
}

}  // namespace detail

/// One smooth summand f_i with an L_i-Lipschitz gradient. Implementations
/// are immutable after construction.
class ComponentOracle {
 public:
  virtual ~ComponentOracle() = default;

  virtual Eigen::Index dimension() const = 0;
  virtual double value(const ConstVectorRef& x) const = 0;
  virtual void gradient(const ConstVectorRef& x, VectorRef out) const = 0;
  virtual double lipschitz() const = 0;
  virtual nlohmann::json to_json() const = 0;

  Vector gradient(const ConstVectorRef& x) const {
    Vector g(dimension());
    gradient(x, g);
    return g;
  }
};

/// f(x) = 1/2 (a^T x - b)^2 + (ridge / 2) ||x - center||^2,
/// L = ||a||^2 + ridge.
class QuadraticComponent final : public ComponentOracle {
 public:
  QuadraticComponent(Vector a, double b, double ridge, Vector center)
      : a_(std::move(a)), b_(b), ridge_(ridge), center_(std::move(center)) {
    if (a_.size() == 0) throw std::invalid_argument("component dimension must be >= 1");
    if (center_.size() != a_.size())
      throw std::invalid_argument("component center has wrong dimension");
    if (!(ridge_ >= 0.0)) throw std::invalid_argument("ridge weight must be >= 0");
  }

  QuadraticComponent(Vector a, double b, double ridge)
      : QuadraticComponent(a, b, ridge, Vector::Zero(a.size())) {}

  Eigen::Index dimension() const override { return a_.size(); }

  double value(const ConstVectorRef& x) const override {
    const double r = a_.dot(x) - b_;
    return 0.5 * r * r + 0.5 * ridge_ * (x - center_).squaredNorm();
  }

  void gradient(const ConstVectorRef& x, VectorRef out) const override {
    const double r = a_.dot(x) - b_;
    out = r * a_ + ridge_ * (x - center_);
  }
  using ComponentOracle::gradient;

  double lipschitz() const override { return a_.squaredNorm() + ridge_; }

  nlohmann::json to_json() const override {
    return {{"a", detail::to_json_array(a_)},
            {"b", b_},
            {"ridge", ridge_},
            {"center", detail::to_json_array(center_)}};
  }

  static std::shared_ptr<const QuadraticComponent> from_json(const nlohmann::json& j) {
    Vector a = detail::vector_from_json(j.at("a"));
    Vector c = j.contains("center") ? detail::vector_from_json(j.at("center"))
                                    : Vector::Zero(a.size());
    return std::make_shared<QuadraticComponent>(std::move(a), j.at("b").get<double>(),
                                                j.value("ridge", 0.0), std::move(c));
  }

  const Vector& row() const { return a_; }
  double target() const { return b_; }
  double ridge() const { return ridge_; }
  const Vector& center() const { return center_; }

 private:
  Vector a_;
  double b_;
  double ridge_;
  Vector center_;
};

using ComponentPtr = std::shared_ptr<const ComponentOracle>;

/// f = (1/m) sum_i f_i with L = mean(L_i) and a declared strong-convexity
/// modulus mu. Individual components need not be convex.
class SmoothSum {
 public:
  SmoothSum(std::vector<ComponentPtr> components, double mu)
      : components_(std::move(components)), mu_(mu) {
    if (components_.empty()) throw std::invalid_argument("need at least one component");
    n_ = components_.front()->dimension();
    double total = 0.0;
    for (const auto& c : components_) {
      if (!c) throw std::invalid_argument("null component");
      if (c->dimension() != n_) throw std::invalid_argument("components disagree on dimension");
      total += c->lipschitz();
    }
    L_ = total / static_cast<double>(components_.size());
    if (!(mu_ > 0.0)) throw std::invalid_argument("strong convexity modulus must be > 0");
    if (mu_ > L_)
      throw std::invalid_argument("declared mu exceeds L; no function satisfies both");
  }

  std::size_t m() const { return components_.size(); }
  Eigen::Index n() const { return n_; }
  const ComponentOracle& component(std::size_t i) const { return *components_.at(i); }
  const std::vector<ComponentPtr>& components() const { return components_; }

  double L() const { return L_; }
  double mu() const { return mu_; }
  double Q() const { return L_ / mu_; }

  double value(const ConstVectorRef& x) const {
    double total = 0.0;
    for (const auto& c : components_) total += c->value(x);
    return total / static_cast<double>(m());
  }

  /// (sum_i grad f_i(x)) / m, summed in index order.
  Vector gradient(const ConstVectorRef& x) const {
    Vector sum = Vector::Zero(n_);
    Vector gi(n_);
    for (const auto& c : components_) {
      c->gradient(x, gi);
      sum += gi;
    }
    return sum / static_cast<double>(m());
  }

 private:
  std::vector<ComponentPtr> components_;
  Eigen::Index n_ = 0;
  double mu_;
  double L_ = 0.0;
};

struct ReferenceSolution {
  Vector x;
  double value = 0.0;
  double residual = 0.0;
  std::int64_t iterations = 0;
};

/// A composite problem plus the generator description that rebuilds it.
class ProblemInstance {
 public:
  ProblemInstance(SmoothSum smooth, ProxOperator regularizer, nlohmann::json spec = {})
      : smooth_(std::move(smooth)), regularizer_(std::move(regularizer)), spec_(std::move(spec)) {}

  const SmoothSum& smooth() const { return smooth_; }
  const ProxOperator& regularizer() const { return regularizer_; }
  Eigen::Index n() const { return smooth_.n(); }
  std::size_t m() const { return smooth_.m(); }

  /// F(x) = f(x) + r(x). Points outside dom r are an error, never +inf.
  double objective(const ConstVectorRef& x) const {
    const double r = regularizer_.value(x);
    if (!std::isfinite(r)) throw std::domain_error("objective evaluated at an infeasible point");
    return smooth_.value(x) + r;
  }

  bool has_reference() const { return reference_.has_value(); }
  const ReferenceSolution& reference() const {
    if (!reference_) throw std::logic_error("problem has no reference optimum");
    return *reference_;
  }
  void set_reference(ReferenceSolution ref) { reference_ = std::move(ref); }

  /// Generator parameters and declared constants.
  nlohmann::json to_json() const {
    nlohmann::json j = spec_;
    j["regularizer"] = regularizer_.to_json();
    j["declared"] = {{"L", smooth_.L()}, {"mu", smooth_.mu()}, {"Q", smooth_.Q()}};
    return j;
  }
  const nlohmann::json& generator_spec() const { return spec_; }

 private:
  SmoothSum smooth_;
  ProxOperator regularizer_;
  nlohmann::json spec_;
  std::optional<ReferenceSolution> reference_;
};

/// ||x - prox(x - eta grad f(x))|| : zero exactly at the optimum.
inline double fixed_point_residual(const ProblemInstance& p, const ConstVectorRef& x, double eta) {
  const Vector g = p.smooth().gradient(x);
  return (x - p.regularizer().apply(x - eta * g, eta)).norm();
}

/// Full proximal-gradient iteration at eta = 1/L, stopped once
/// ||x_{k+1} - x_k|| / eta <= residual_tol. Coded separately from the PIAG
/// solver so it can serve as an independent oracle.
inline ReferenceSolution solve_reference(const ProblemInstance& p, double residual_tol = 1e-12,
                                         std::int64_t max_iters = 2'000'000) {
  const double eta = 1.0 / p.smooth().L();
  Vector x = p.regularizer().apply(Vector::Zero(p.n()), eta);
  double residual = std::numeric_limits<double>::infinity();
  std::int64_t it = 0;
  while (it < max_iters) {
    const Vector g = p.smooth().gradient(x);
    Vector next = p.regularizer().apply(x - eta * g, eta);
    residual = (next - x).norm() / eta;
    x = std::move(next);
    ++it;
    if (residual <= residual_tol) break;
  }
  if (!(residual <= residual_tol))
    throw ConvergenceError("reference solver exhausted its budget at residual " +
                               std::to_string(residual),
                           residual);
  return {x, p.objective(x), residual, it};
}

inline ProblemInstance with_reference(ProblemInstance p, double residual_tol = 1e-12) {
  p.set_reference(solve_reference(p, residual_tol));
  return p;
}

// ---------------------------------------------------------------------------
// Generators

/// Rows a_i ~ N(0, I), targets b_i = a_i^T x_true + 0.1 * noise, where
/// x_true has every other coordinate zeroed.
struct LeastSquaresData {
  Eigen::MatrixXd A;  // m x n
  Vector b;
};

inline LeastSquaresData generate_least_squares_data(std::size_t m, Eigen::Index n,
                                                    std::uint64_t seed) {
  Rng rng(seed);
  LeastSquaresData d{Eigen::MatrixXd(Eigen::Index(m), n), Vector(Eigen::Index(m))};
  Vector x_true = rng.normal_vector(n);
  for (Eigen::Index j = 1; j < n; j += 2) x_true[j] = 0.0;
  for (Eigen::Index i = 0; i < Eigen::Index(m); ++i)
    for (Eigen::Index j = 0; j < n; ++j) d.A(i, j) = rng.normal();
  for (Eigen::Index i = 0; i < Eigen::Index(m); ++i)
    d.b[i] = d.A.row(i).dot(x_true) + 0.1 * rng.normal();
  return d;
}

/// f_i(x) = 1/2 (a_i^T x - b_i)^2 + (l2/2) ||x||^2, r = l1 ||.||_1, mu = l2.
inline ProblemInstance make_regularized_least_squares(const Eigen::MatrixXd& A, const Vector& b,
                                                      double l1_weight, double l2_weight,
                                                      nlohmann::json spec = {}) {
  if (A.rows() == 0 || A.cols() == 0) throw std::invalid_argument("need m >= 1 and n >= 1");
  if (b.size() != A.rows()) throw std::invalid_argument("target size must equal row count");
  if (!(l2_weight > 0.0)) throw std::invalid_argument("l2_weight must be > 0");
  std::vector<ComponentPtr> comps;
  comps.reserve(std::size_t(A.rows()));
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    comps.push_back(std::make_shared<QuadraticComponent>(Vector(A.row(i).transpose()), b[i],
                                                         l2_weight));
  if (spec.is_null()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : comps) rows.push_back(c->to_json());
    spec = {{"generator", "explicit_quadratic"}, {"components", rows}, {"mu", l2_weight}};
  }
  return ProblemInstance(SmoothSum(std::move(comps), l2_weight), ProxOperator::l1(l1_weight),
                         std::move(spec));
}

inline ProblemInstance make_regularized_least_squares(std::size_t m, Eigen::Index n,
                                                      std::uint64_t seed, double l1_weight,
                                                      double l2_weight,
                                                      bool compute_reference = true) {
  if (m == 0 || n <= 0) throw std::invalid_argument("need m >= 1 and n >= 1");
  if (!(l2_weight > 0.0)) throw std::invalid_argument("l2_weight must be > 0");
  const auto data = generate_least_squares_data(m, n, seed);
  nlohmann::json spec{{"generator", "regularized_least_squares"},
                      {"m", m},
                      {"n", n},
                      {"seed", seed},
                      {"l1_weight", l1_weight},
                      {"l2_weight", l2_weight}};
  auto p = make_regularized_least_squares(data.A, data.b, l1_weight, l2_weight, std::move(spec));
  return compute_reference ? with_reference(std::move(p)) : p;
}

/// Ridge weight that makes L / mu equal the requested condition number for
/// the seeded least-squares data: mu = s / (Q - 1) with s = mean ||a_i||^2.
inline double ridge_for_condition_number(std::size_t m, Eigen::Index n, std::uint64_t seed,
                                         double Q) {
  if (!(Q > 1.0)) throw std::invalid_argument("condition number must be > 1");
  const auto data = generate_least_squares_data(m, n, seed);
  return data.A.rowwise().squaredNorm().mean() / (Q - 1.0);
}

/// f_i(x) = 1/2 (a_i^T (x - c))^2 + (ridge/2) ||x - c||^2 for i = 1..n with
/// a_i ~ N(0, I) and c ~ N(0, 4I), so the unconstrained minimizer c usually
/// lies outside the box and the constrained optimum sits on its boundary.
inline ProblemInstance make_constrained_quadratic(Eigen::Index n, std::uint64_t seed,
                                                  double box_lo, double box_hi,
                                                  double ridge = 1.0,
                                                  bool compute_reference = true) {
  if (n <= 0) throw std::invalid_argument("need n >= 1");
  if (!(box_lo < box_hi)) throw std::invalid_argument("empty box: need box_lo < box_hi");
  if (!(ridge > 0.0)) throw std::invalid_argument("ridge must be > 0");
  Rng rng(seed);
  const Vector center = rng.normal_vector(n, 2.0);
  std::vector<ComponentPtr> comps;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector a = rng.normal_vector(n);
    const double b = a.dot(center);
    comps.push_back(std::make_shared<QuadraticComponent>(std::move(a), b, ridge, center));
  }
  nlohmann::json spec{{"generator", "constrained_quadratic"}, {"n", n},          {"seed", seed},
                      {"box_lo", box_lo},                    {"box_hi", box_hi}, {"ridge", ridge}};
  ProblemInstance p(SmoothSum(std::move(comps), ridge), ProxOperator::box(box_lo, box_hi),
                    std::move(spec));
  return compute_reference ? with_reference(std::move(p)) : p;
}

/// Problem from explicit quadratic components.
inline ProblemInstance make_explicit_quadratic(std::vector<ComponentPtr> components, double mu,
                                               ProxOperator regularizer,
                                               bool compute_reference = true) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : components) rows.push_back(c->to_json());
  nlohmann::json spec{{"generator", "explicit_quadratic"}, {"components", rows}, {"mu", mu}};
  ProblemInstance p(SmoothSum(std::move(components), mu), std::move(regularizer), std::move(spec));
  return compute_reference ? with_reference(std::move(p)) : p;
}

/// Rebuilds a problem from its JSON description. If "declared" constants
/// are present they must match the rebuilt instance.
inline ProblemInstance problem_from_json(const nlohmann::json& j, bool compute_reference = true) {
  const auto gen = j.at("generator").get<std::string>();
  const auto require_keys = [&](std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
      if (key == "generator" || key == "declared" || key == "regularizer") continue;
      if (std::find_if(allowed.begin(), allowed.end(),
                       [&](const char* a) { return key == a; }) == allowed.end())
        throw std::invalid_argument("unknown key '" + key + "' for generator " + gen);
    }
  };
  std::optional<ProblemInstance> p;
  if (gen == "regularized_least_squares") {
    require_keys({"m", "n", "seed", "l1_weight", "l2_weight", "condition_number"});
    if (j.contains("condition_number") && j.contains("l2_weight"))
      throw std::invalid_argument("give either condition_number or l2_weight, not both");
    const auto m = j.at("m").get<std::size_t>();
    const auto n = j.at("n").get<Eigen::Index>();
    const auto seed = j.at("seed").get<std::uint64_t>();
    double l2 = j.value("l2_weight", 1.0);
    if (j.contains("condition_number"))
      l2 = ridge_for_condition_number(m, n, seed, j.at("condition_number").get<double>());
    p = make_regularized_least_squares(m, n, seed, j.value("l1_weight", 0.0), l2, false);
  } else if (gen == "constrained_quadratic") {
    require_keys({"n", "seed", "box_lo", "box_hi", "ridge"});
    p = make_constrained_quadratic(j.at("n").get<Eigen::Index>(), j.at("seed").get<std::uint64_t>(),
                                   j.at("box_lo").get<double>(), j.at("box_hi").get<double>(),
                                   j.value("ridge", 1.0), false);
  } else if (gen == "explicit_quadratic") {
    require_keys({"components", "mu"});
    std::vector<ComponentPtr> comps;
    for (const auto& c : j.at("components")) comps.push_back(QuadraticComponent::from_json(c));
    const ProxOperator reg =
        j.contains("regularizer") ? ProxOperator::from_json(j.at("regularizer")) : ProxOperator{};
    p = make_explicit_quadratic(std::move(comps), j.at("mu").get<double>(), reg, false);
  } else {
    throw std::invalid_argument("unknown problem generator '" + gen + "'");
  }
  if (j.contains("declared")) {
    const auto& d = j.at("declared");
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(b)); };
    if (!close(d.at("L").get<double>(), p->smooth().L()) ||
        !close(d.at("mu").get<double>(), p->smooth().mu()))
      throw std::invalid_argument("declared constants do not match the rebuilt problem");
  }
  return compute_reference ? with_reference(std::move(*p)) : std::move(*p);
}

/// Sampled secant estimates of the smoothness and strong-convexity moduli.
struct ConstantEstimate {
  double L_hat = 0.0;
  double mu_hat = std::numeric_limits<double>::infinity();
  std::size_t pairs_used = 0;

  /// mu_hat >= mu (1 - tol) and L_hat <= L (1 + tol).
  bool consistent_with(double L, double mu, double tol = 1e-9) const {
    return mu_hat >= mu * (1.0 - tol) && L_hat <= L * (1.0 + tol);
  }
};

inline ConstantEstimate estimate_constants(const ProblemInstance& p, std::size_t samples,
                                           std::uint64_t seed) {
  if (samples < 2) throw std::invalid_argument("estimate_constants needs at least 2 samples");
  Rng rng(seed);
  ConstantEstimate est;
  const SmoothSum& f = p.smooth();
  for (std::size_t s = 0; s < samples; ++s) {
    const Vector x = rng.normal_vector(f.n(), 2.0);
    const Vector y = x + rng.normal_vector(f.n());
    const Vector dx = x - y;
    const double dn2 = dx.squaredNorm();
    if (std::sqrt(dn2) < 1e-12) continue;
    const Vector dg = f.gradient(x) - f.gradient(y);
    est.L_hat = std::max(est.L_hat, dg.norm() / std::sqrt(dn2));
    est.mu_hat = std::min(est.mu_hat, dx.dot(dg) / dn2);
    ++est.pairs_used;
  }
  return est;
}

}  // namespace piag
