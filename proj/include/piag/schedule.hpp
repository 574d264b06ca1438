#pragma once

// Refresh orders and the table of stored component gradients that forms
//   g_k = (1/m) sum_i grad f_i(x_{tau_i(k)}),   k - K <= tau_i(k) <= k.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "piag/problems.hpp"
#include "piag/types.hpp"

namespace piag {

enum class OrderKind { full, cyclic, shuffled_cyclic, fixed_delay };

inline const char* to_string(OrderKind k) {
  switch (k) {
    case OrderKind::full: return "full";
    case OrderKind::cyclic: return "cyclic";
    case OrderKind::shuffled_cyclic: return "shuffled_cyclic";
    case OrderKind::fixed_delay: return "fixed_delay";
  }
  return "?";
}

/// One table update: component i receives grad f_i(x_source).
struct Refresh {
  std::size_t component;
  Iteration source;
};

/// Deterministic rule for which components are refreshed at iteration k.
///
///   full             every component at x_k                      K = 0
///   cyclic           component k mod m at x_k                    K = m - 1
///   shuffled_cyclic  a fresh seeded permutation per epoch of m   K = 2m - 2
///   fixed_delay      every component i at x_{max(0, k - d_i)}    K = max d_i
class OrderPolicy {
 public:
  static OrderPolicy full(std::size_t m) { return OrderPolicy(OrderKind::full, m); }
  static OrderPolicy cyclic(std::size_t m) { return OrderPolicy(OrderKind::cyclic, m); }

  static OrderPolicy shuffled_cyclic(std::size_t m, std::uint64_t seed) {
    OrderPolicy p(OrderKind::shuffled_cyclic, m);
    p.seed_ = seed;
    return p;
  }

  static OrderPolicy fixed_delay(std::vector<Iteration> delays) {
    OrderPolicy p(OrderKind::fixed_delay, delays.size());
    for (Iteration d : delays)
      if (d < 0) throw std::invalid_argument("delays must be >= 0");
    p.delays_ = std::move(delays);
    return p;
  }

  static OrderPolicy uniform_delay(std::size_t m, Iteration delay) {
    return fixed_delay(std::vector<Iteration>(m, delay));
  }

  OrderKind kind() const { return kind_; }
  std::size_t m() const { return m_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Iteration>& delays() const { return delays_; }

  /// Staleness bound this order guarantees.
  Iteration certified_staleness() const {
    switch (kind_) {
      case OrderKind::full: return 0;
      case OrderKind::cyclic: return Iteration(m_) - 1;
      case OrderKind::shuffled_cyclic: return m_ == 1 ? 0 : 2 * Iteration(m_) - 2;
      case OrderKind::fixed_delay: return *std::max_element(delays_.begin(), delays_.end());
    }
    return 0;
  }

  /// Oldest iterate any refresh may reference, relative to k.
  Iteration max_source_lag() const {
    return kind_ == OrderKind::fixed_delay ? certified_staleness() : 0;
  }

  std::vector<Refresh> refresh_set(Iteration k) const {
    if (k < 0) throw std::invalid_argument("iteration index must be >= 0");
    std::vector<Refresh> out;
    switch (kind_) {
      case OrderKind::full:
        out.reserve(m_);
        for (std::size_t i = 0; i < m_; ++i) out.push_back({i, k});
        break;
      case OrderKind::cyclic:
        out.push_back({std::size_t(k % Iteration(m_)), k});
        break;
      case OrderKind::shuffled_cyclic: {
        const auto epoch = std::uint64_t(k / Iteration(m_));
        if (epoch != cached_epoch_ || perm_.empty()) {
          perm_ = epoch_permutation(epoch);
          cached_epoch_ = epoch;
        }
        out.push_back({perm_[std::size_t(k % Iteration(m_))], k});
        break;
      }
      case OrderKind::fixed_delay:
        out.reserve(m_);
        for (std::size_t i = 0; i < m_; ++i) out.push_back({i, std::max<Iteration>(0, k - delays_[i])});
        break;
    }
    return out;
  }

  std::vector<std::size_t> epoch_permutation(std::uint64_t epoch) const {
    std::vector<std::size_t> perm(m_);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::seed_seq seq{std::uint32_t(seed_), std::uint32_t(seed_ >> 32), std::uint32_t(epoch),
                      std::uint32_t(epoch >> 32)};
    std::mt19937_64 eng(seq);
    std::shuffle(perm.begin(), perm.end(), eng);
    return perm;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind_)}, {"m", m_}};
    if (kind_ == OrderKind::shuffled_cyclic) j["seed"] = seed_;
    if (kind_ == OrderKind::fixed_delay) j["delays"] = delays_;
    return j;
  }

  /// Accepts {"kind": ..., "seed": s, "delays": [...] | "delay": d}. m comes
  /// from the problem; an "m" field, if present, must agree.
  static OrderPolicy from_json(const nlohmann::json& j, std::size_t m) {
    if (j.contains("m") && j.at("m").get<std::size_t>() != m)
      throw std::invalid_argument("policy component count does not match the problem");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "full") return full(m);
    if (kind == "cyclic") return cyclic(m);
    if (kind == "shuffled_cyclic") return shuffled_cyclic(m, j.value("seed", std::uint64_t{0}));
    if (kind == "fixed_delay") {
      if (j.contains("delays")) {
        auto d = j.at("delays").get<std::vector<Iteration>>();
        if (d.size() != m) throw std::invalid_argument("need one delay per component");
        return fixed_delay(std::move(d));
      }
      return uniform_delay(m, j.at("delay").get<Iteration>());
    }
    throw std::invalid_argument("unknown order policy '" + kind + "'");
  }

 private:
  OrderPolicy(OrderKind kind, std::size_t m) : kind_(kind), m_(m) {
    if (m == 0) throw std::invalid_argument("policy needs m >= 1");
  }

  OrderKind kind_;
  std::size_t m_;
  std::uint64_t seed_ = 0;
  std::vector<Iteration> delays_;
  mutable std::uint64_t cached_epoch_ = 0;
  mutable std::vector<std::size_t> perm_;
};

/// Sliding window of recent iterates, for orders that refresh at past points.
class IterateHistory {
 public:
  explicit IterateHistory(Iteration depth) : depth_(std::max<Iteration>(depth, 0)) {}

  void push(const ConstVectorRef& x) {
    window_.emplace_back(x);
    ++last_;
    if (Iteration(window_.size()) > depth_ + 1) window_.pop_front();
  }

  /// x_t for t in [last - depth, last].
  const Vector& at(Iteration t) const {
    const Iteration first = last_ - Iteration(window_.size()) + 1;
    if (t < first || t > last_) throw std::out_of_range("iterate no longer in history window");
    return window_[std::size_t(t - first)];
  }

  Iteration last() const { return last_; }

 private:
  Iteration depth_;
  Iteration last_ = -1;
  std::deque<Vector> window_;
};

/// Stored component gradients, their timestamps and a running sum.
///
/// The running sum is updated incrementally (new - old) and rebuilt exactly,
/// in index order, whenever every component is refreshed at once or after
/// resync_interval incremental updates.
class GradientTable {
 public:
  static constexpr std::size_t kDefaultResyncInterval = 100;

  /// Evaluates every component at x0 with timestamp 0, so g_0 = grad f(x0).
  GradientTable(const SmoothSum& f, const ConstVectorRef& x0,
                std::size_t resync_interval = kDefaultResyncInterval)
      : f_(&f),
        grads_(f.n(), Eigen::Index(f.m())),
        points_(f.n(), Eigen::Index(f.m())),
        stamps_(f.m(), 0),
        resync_interval_(std::max<std::size_t>(resync_interval, 1)) {
    if (x0.size() != f.n()) throw std::invalid_argument("x0 has the wrong dimension");
    if (!x0.allFinite()) throw std::domain_error("x0 must be finite");
    for (std::size_t i = 0; i < f.m(); ++i) {
      f.component(i).gradient(x0, grads_.col(Eigen::Index(i)));
      points_.col(Eigen::Index(i)) = x0;
    }
    resync();
  }

  std::size_t m() const { return stamps_.size(); }

  /// Applies one iteration's refresh set.
  void refresh(const std::vector<Refresh>& updates, const IterateHistory& history) {
    if (updates.size() == m()) {
      for (const auto& u : updates) store(u, history);
      resync();
    } else {
      Vector old(f_->n());
      for (const auto& u : updates) {
        old = grads_.col(Eigen::Index(u.component));
        store(u, history);
        sum_ += grads_.col(Eigen::Index(u.component)) - old;
        if (++since_resync_ >= resync_interval_) resync();
      }
    }
  }

  /// (1/m) * running sum.
  Vector aggregated_gradient() const { return sum_ / static_cast<double>(m()); }

  const Vector& running_sum() const { return sum_; }
  Iteration timestamp(std::size_t i) const { return stamps_.at(i); }
  auto stored_gradient(std::size_t i) const { return grads_.col(Eigen::Index(i)); }
  auto stored_point(std::size_t i) const { return points_.col(Eigen::Index(i)); }

  /// max_i (k - tau_i).
  Iteration max_staleness(Iteration k) const {
    Iteration worst = 0;
    for (Iteration t : stamps_) worst = std::max(worst, k - t);
    return worst;
  }

  /// Exact sum of stored gradients, in index order.
  Vector exact_sum() const {
    Vector s = Vector::Zero(f_->n());
    for (Eigen::Index i = 0; i < grads_.cols(); ++i) s += grads_.col(i);
    return s;
  }

  /// ||running - exact|| / max(1, ||exact||).
  double drift() const {
    const Vector exact = exact_sum();
    return (sum_ - exact).norm() / std::max(1.0, exact.norm());
  }

  void resync() {
    sum_ = exact_sum();
    since_resync_ = 0;
  }

 private:
  void store(const Refresh& u, const IterateHistory& history) {
    if (u.component >= m()) throw std::out_of_range("refresh names a missing component");
    const Vector& x = history.at(u.source);
    const auto col = Eigen::Index(u.component);
    f_->component(u.component).gradient(x, grads_.col(col));
    points_.col(col) = x;
    stamps_[u.component] = u.source;
  }

  const SmoothSum* f_;
  Eigen::MatrixXd grads_;
  Eigen::MatrixXd points_;
  std::vector<Iteration> stamps_;
  Vector sum_;
  std::size_t resync_interval_;
  std::size_t since_resync_ = 0;
};

/// Refreshes the table as `policy` prescribes for iteration k. The history
/// must already hold x_k.
inline void refresh(GradientTable& table, const OrderPolicy& policy, Iteration k,
                    const IterateHistory& history) {
  if (history.last() != k) throw std::logic_error("history does not end at the current iterate");
  table.refresh(policy.refresh_set(k), history);
}

}  // namespace piag
