#pragma once

// Proximal operators for the separable regularizers used in composite
// objectives F(x) = f(x) + r(x).
//
//   prox_r^eta(y) = argmin_x  1/2 ||x - y||^2 + eta * r(x)
//
// Every kind in the catalog is coordinate-separable, so apply() works one
// coordinate at a time in closed form.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "piag/types.hpp"

namespace piag {

enum class ProxKind { zero, l1, squared_l2, box, elastic_net };

inline const char* to_string(ProxKind kind) {
  switch (kind) {
    case ProxKind::zero: return "zero";
    case ProxKind::l1: return "l1";
    case ProxKind::squared_l2: return "squared_l2";
    case ProxKind::box: return "box";
    case ProxKind::elastic_net: return "elastic_net";
  }
  return "?";
}

inline ProxKind prox_kind_from_string(const std::string& s) {
  if (s == "zero") return ProxKind::zero;
  if (s == "l1") return ProxKind::l1;
  if (s == "squared_l2") return ProxKind::squared_l2;
  if (s == "box") return ProxKind::box;
  if (s == "elastic_net") return ProxKind::elastic_net;
  throw std::invalid_argument("unknown regularizer kind '" + s + "'");
}

/// Regularizer descriptor.
///
///   zero         r(x) = 0
///   l1           r(x) = l1 * ||x||_1
///   squared_l2   r(x) = (l2 / 2) * ||x||^2
///   elastic_net  r(x) = l1 * ||x||_1 + (l2 / 2) * ||x||^2
///   box          r(x) = indicator of {lo <= x <= hi}
///
/// Box bounds are stored per coordinate. A bound vector of size 1 is
/// broadcast to any dimension.
class ProxOperator {
 public:
  ProxOperator() = default;

  static ProxOperator zero() { return {}; }

  static ProxOperator l1(double weight) {
    check_weight(weight, "l1");
    ProxOperator op;
    op.kind_ = ProxKind::l1;
    op.l1_ = weight;
    return op;
  }

  static ProxOperator squared_l2(double weight) {
    check_weight(weight, "squared_l2");
    ProxOperator op;
    op.kind_ = ProxKind::squared_l2;
    op.l2_ = weight;
    return op;
  }

  static ProxOperator elastic_net(double l1_weight, double l2_weight) {
    check_weight(l1_weight, "elastic_net l1");
    check_weight(l2_weight, "elastic_net l2");
    ProxOperator op;
    op.kind_ = ProxKind::elastic_net;
    op.l1_ = l1_weight;
    op.l2_ = l2_weight;
    return op;
  }

  static ProxOperator box(double lo, double hi) {
    Vector l(1), h(1);
    l[0] = lo;
    h[0] = hi;
    return box(std::move(l), std::move(h));
  }

  static ProxOperator box(Vector lo, Vector hi) {
    if (lo.size() != hi.size() || lo.size() == 0)
      throw std::invalid_argument("box bounds must be non-empty and of equal size");
    for (Eigen::Index j = 0; j < lo.size(); ++j) {
      if (std::isnan(lo[j]) || std::isnan(hi[j]) || !(lo[j] <= hi[j]))
        throw std::invalid_argument("box requires lo <= hi in every coordinate");
    }
    ProxOperator op;
    op.kind_ = ProxKind::box;
    op.lo_ = std::move(lo);
    op.hi_ = std::move(hi);
    return op;
  }

  ProxKind kind() const { return kind_; }
  double l1_weight() const { return l1_; }
  double l2_weight() const { return l2_; }

  double lower(Eigen::Index j) const { return lo_.size() == 1 ? lo_[0] : lo_[j]; }
  double upper(Eigen::Index j) const { return hi_.size() == 1 ? hi_[0] : hi_[j]; }

  /// Closed-form proximal step on one coordinate.
  double apply_scalar(double y, double eta, Eigen::Index j = 0) const {
    switch (kind_) {
      case ProxKind::zero:
        return y;
      case ProxKind::l1:
        return soft_threshold(y, eta * l1_);
      case ProxKind::squared_l2:
        return y / (1.0 + eta * l2_);
      case ProxKind::elastic_net:
        return soft_threshold(y, eta * l1_) / (1.0 + eta * l2_);
      case ProxKind::box:
        return std::clamp(y, lower(j), upper(j));
    }
    return y;
  }

  /// prox_r^eta(y). Rejects eta <= 0 and non-finite coordinates.
  Vector apply(const ConstVectorRef& y, double eta) const {
    if (!(eta > 0.0) || !std::isfinite(eta))
      throw std::invalid_argument("prox step size must be positive and finite");
    if (!y.allFinite()) throw std::domain_error("prox input has non-finite coordinates");
    check_dimension(y.size());
    Vector x(y.size());
    for (Eigen::Index j = 0; j < y.size(); ++j) x[j] = apply_scalar(y[j], eta, j);
    return x;
  }

  /// r on one coordinate; +inf outside the box.
  double value_scalar(double x, Eigen::Index j = 0) const {
    switch (kind_) {
      case ProxKind::zero:
        return 0.0;
      case ProxKind::l1:
        return l1_ * std::abs(x);
      case ProxKind::squared_l2:
        return 0.5 * l2_ * x * x;
      case ProxKind::elastic_net:
        return l1_ * std::abs(x) + 0.5 * l2_ * x * x;
      case ProxKind::box:
        return (x >= lower(j) && x <= upper(j)) ? 0.0
                                                 : std::numeric_limits<double>::infinity();
    }
    return 0.0;
  }

  /// r(x); +inf for points outside the box.
  double value(const ConstVectorRef& x) const {
    check_dimension(x.size());
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) total += value_scalar(x[j], j);
    return total;
  }

  bool is_feasible(const ConstVectorRef& x) const { return std::isfinite(value(x)); }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind_)}};
    switch (kind_) {
      case ProxKind::zero: break;
      case ProxKind::l1: j["weight"] = l1_; break;
      case ProxKind::squared_l2: j["weight"] = l2_; break;
      case ProxKind::elastic_net:
        j["l1_weight"] = l1_;
        j["l2_weight"] = l2_;
        break;
      case ProxKind::box:
        j["lo"] = std::vector<double>(lo_.data(), lo_.data() + lo_.size());
        j["hi"] = std::vector<double>(hi_.data(), hi_.data() + hi_.size());
        break;
    }
    return j;
  }

  static ProxOperator from_json(const nlohmann::json& j) {
    switch (prox_kind_from_string(j.at("kind").get<std::string>())) {
      case ProxKind::zero: return zero();
      case ProxKind::l1: return l1(j.at("weight").get<double>());
      case ProxKind::squared_l2: return squared_l2(j.at("weight").get<double>());
      case ProxKind::elastic_net:
        return elastic_net(j.at("l1_weight").get<double>(), j.at("l2_weight").get<double>());
      case ProxKind::box: {
        auto bound = [](const nlohmann::json& b) {
          if (b.is_number()) {
            Vector v(1);
            v[0] = b.get<double>();
            return v;
          }
          auto vals = b.get<std::vector<double>>();
          return Vector(Eigen::Map<const Vector>(vals.data(), Eigen::Index(vals.size())));
        };
        return box(bound(j.at("lo")), bound(j.at("hi")));
      }
    }
    throw std::invalid_argument("bad regularizer descriptor");
  }

  friend bool operator==(const ProxOperator& a, const ProxOperator& b) {
    auto same = [](const Vector& u, const Vector& v) { return u.size() == v.size() && u == v; };
    return a.kind_ == b.kind_ && a.l1_ == b.l1_ && a.l2_ == b.l2_ && same(a.lo_, b.lo_) &&
           same(a.hi_, b.hi_);
  }

 private:
  static double soft_threshold(double y, double t) {
    const double shrunk = std::abs(y) - t;
    return shrunk > 0.0 ? std::copysign(shrunk, y) : 0.0;
  }

  static void check_weight(double w, const char* what) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument(std::string(what) + " weight must be finite and >= 0");
  }

  void check_dimension(Eigen::Index n) const {
    if (kind_ == ProxKind::box && lo_.size() != 1 && lo_.size() != n)
      throw std::invalid_argument("box bounds do not match vector dimension");
  }

  ProxKind kind_ = ProxKind::zero;
  double l1_ = 0.0;
  double l2_ = 0.0;
  Vector lo_;
  Vector hi_;
};

/// Subgradient of r at x_next selected by the proximal step
///   x_next = prox(x_prev - eta * g),
/// i.e. h = (x_prev - eta * g - x_next) / eta.
inline Vector subgradient_residual(const ProxOperator& /*op*/, const ConstVectorRef& x_prev,
                                   const ConstVectorRef& x_next, const ConstVectorRef& g,
                                   double eta) {
  return (x_prev - eta * g - x_next) / eta;
}

/// Subgradient inequality r(z) >= r(x) + <h, z - x> - tol. Returns the
/// signed slack r(z) - r(x) - <h, z - x> (+inf when z is outside dom r).
inline double subgradient_slack(const ProxOperator& op, const ConstVectorRef& x,
                                const ConstVectorRef& h, const ConstVectorRef& z) {
  return op.value(z) - op.value(x) - h.dot(z - x);
}

}  // namespace piag
