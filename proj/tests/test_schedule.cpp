#include <algorithm>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "piag/problems.hpp"
#include "piag/schedule.hpp"

using namespace piag;

namespace {

Vector scalar(double v) { return Vector::Constant(1, v); }

ComponentPtr quad(Vector a, double b, double ridge = 0.0) {
  return std::make_shared<QuadraticComponent>(std::move(a), b, ridge);
}

/// Drives a table through a scripted sequence of iterates.
struct Script {
  const SmoothSum& f;
  OrderPolicy policy;
  std::vector<Vector> xs;
  IterateHistory history;
  GradientTable table;

  Script(const SmoothSum& f_, OrderPolicy p, std::vector<Vector> xs_)
      : f(f_), policy(std::move(p)), xs(std::move(xs_)), history(policy.max_source_lag()),
        table(f, xs.front()) {
    history.push(xs.front());
  }

  Iteration next = 0;

  void refresh_through(Iteration k) {
    for (; next <= k; ++next) {
      if (next > 0) history.push(xs[std::size_t(next)]);
      refresh(table, policy, next, history);
    }
  }
};

std::vector<Vector> random_path(Eigen::Index n, int len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vector> xs;
  for (int i = 0; i < len; ++i) xs.push_back(rng.normal_vector(n, 3.0));
  return xs;
}

}  // namespace

TEST(GradientTable, SingleComponentInit) {
  SmoothSum f({quad(Vector::Constant(2, 1.5), 0.3, 0.2)}, 0.1);
  const Vector x0 = Vector::Constant(2, -1.0);
  GradientTable t(f, x0);
  EXPECT_EQ(t.aggregated_gradient(), f.component(0).gradient(x0));
}

TEST(GradientTable, IdenticalComponentsInit) {
  SmoothSum f({quad(scalar(1), 0), quad(scalar(1), 0), quad(scalar(1), 0)}, 1.0);
  GradientTable t(f, scalar(3.0));
  EXPECT_EQ(t.aggregated_gradient()[0], 3.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(t.timestamp(i), 0);
}

TEST(GradientTable, LassoInitAtOrigin) {
  const auto p = make_regularized_least_squares(20, 5, 7, 0.1, 1.0, false);
  const auto data = generate_least_squares_data(20, 5, 7);
  GradientTable t(p.smooth(), Vector::Zero(5));
  Vector expected = Vector::Zero(5);
  for (Eigen::Index i = 0; i < 20; ++i) expected -= data.b[i] * data.A.row(i).transpose();
  expected /= 20.0;
  EXPECT_LE((t.aggregated_gradient() - expected).norm(), 1e-14 * (1 + expected.norm()));
}

TEST(GradientTable, FullRefreshGivesExactGradient) {
  const auto p = make_regularized_least_squares(20, 5, 7, 0.1, 1.0, false);
  Script s(p.smooth(), OrderPolicy::full(20), random_path(5, 6, 1));
  for (Iteration k = 0; k < 6; ++k) {
    s.refresh_through(k);
    EXPECT_EQ(s.table.aggregated_gradient(), p.smooth().gradient(s.xs[std::size_t(k)]));
    EXPECT_EQ(s.table.max_staleness(k), 0);
  }
}

TEST(OrderPolicy, CyclicArithmetic) {
  const auto p = OrderPolicy::cyclic(3);
  const auto r = p.refresh_set(4);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].component, 1u);  // the second component
  EXPECT_EQ(r[0].source, 4);
  EXPECT_EQ(p.certified_staleness(), 2);
}

TEST(OrderPolicy, CertifiedStaleness) {
  EXPECT_EQ(OrderPolicy::full(7).certified_staleness(), 0);
  EXPECT_EQ(OrderPolicy::cyclic(1).certified_staleness(), 0);
  EXPECT_EQ(OrderPolicy::cyclic(20).certified_staleness(), 19);
  EXPECT_EQ(OrderPolicy::shuffled_cyclic(5, 1).certified_staleness(), 8);
  EXPECT_EQ(OrderPolicy::shuffled_cyclic(1, 1).certified_staleness(), 0);
  EXPECT_EQ(OrderPolicy::fixed_delay({0, 3, 1}).certified_staleness(), 3);
}

TEST(GradientTable, FixedDelayHandSimulation) {
  // Three components, all delayed by 2: at iteration k every component is
  // evaluated at x_{max(0, k-2)}.
  SmoothSum f({quad(scalar(1), 1), quad(scalar(2), 0), quad(scalar(-1), 3)}, 0.5);
  std::vector<Vector> xs;
  for (int k = 0; k < 10; ++k) xs.push_back(scalar(10.0 + k));
  Script s(f, OrderPolicy::uniform_delay(3, 2), xs);
  const Iteration expected_tau[10] = {0, 0, 0, 1, 2, 3, 4, 5, 6, 7};
  for (Iteration k = 0; k < 10; ++k) {
    s.refresh_through(k);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(s.table.timestamp(i), expected_tau[k]) << "k=" << k << " i=" << i;
      EXPECT_EQ(s.table.stored_point(i)[0], 10.0 + double(expected_tau[k]));
    }
    EXPECT_LE(s.table.max_staleness(k), 2);
  }
}

TEST(GradientTable, CyclicScriptedAggregate) {
  SmoothSum f({quad(Vector::Constant(2, 1.0), 1.0), quad((Vector(2) << 2.0, -1.0).finished(), 0.0),
               quad((Vector(2) << 0.0, 3.0).finished(), -2.0, 0.5)},
              0.5);
  const auto xs = random_path(2, 8, 21);
  Script s(f, OrderPolicy::cyclic(3), xs);
  s.refresh_through(5);
  // At k = 5 component 2 was refreshed at 5, component 1 at 4, component 0 at 3.
  EXPECT_EQ(s.table.timestamp(0), 3);
  EXPECT_EQ(s.table.timestamp(1), 4);
  EXPECT_EQ(s.table.timestamp(2), 5);
  const Vector hand = (f.component(0).gradient(xs[3]) + f.component(1).gradient(xs[4]) +
                       f.component(2).gradient(xs[5])) / 3.0;
  EXPECT_LE((s.table.aggregated_gradient() - hand).norm(), 1e-14 * (1 + hand.norm()));
}

TEST(GradientTable, CyclicStalenessReachesExactlyMMinusOne) {
  const auto p = make_regularized_least_squares(6, 3, 2, 0.0, 1.0, false);
  Script s(p.smooth(), OrderPolicy::cyclic(6), random_path(3, 40, 2));
  Iteration worst = 0;
  for (Iteration k = 0; k < 40; ++k) {
    s.refresh_through(k);
    const Iteration st = s.table.max_staleness(k);
    EXPECT_LE(st, 5);
    if (k >= 5) worst = std::max(worst, st);
  }
  EXPECT_EQ(worst, 5);
}

TEST(OrderPolicy, EveryComponentRefreshedWithinWindow) {
  const std::size_t m = 7;
  for (const auto& policy : {OrderPolicy::full(m), OrderPolicy::cyclic(m),
                             OrderPolicy::shuffled_cyclic(m, 99), OrderPolicy::uniform_delay(m, 3)}) {
    const Iteration K = policy.certified_staleness();
    for (Iteration start = 0; start < 200; ++start) {
      std::set<std::size_t> seen;
      for (Iteration k = start; k <= start + K; ++k)
        for (const auto& r : policy.refresh_set(k)) seen.insert(r.component);
      ASSERT_EQ(seen.size(), m) << to_string(policy.kind()) << " window at " << start;
    }
  }
}

TEST(GradientTable, ShuffledStalenessWithinBound) {
  const auto p = make_regularized_least_squares(5, 2, 4, 0.0, 1.0, false);
  const auto policy = OrderPolicy::shuffled_cyclic(5, 17);
  Script s(p.smooth(), policy, random_path(2, 300, 3));
  Iteration worst = 0;
  for (Iteration k = 0; k < 300; ++k) {
    s.refresh_through(k);
    worst = std::max(worst, s.table.max_staleness(k));
  }
  EXPECT_LE(worst, policy.certified_staleness());
  EXPECT_GT(worst, 4);  // epoch boundaries do stretch staleness past m - 1
}

TEST(OrderPolicy, ShuffledPermutationsAreSeeded) {
  const auto a = OrderPolicy::shuffled_cyclic(10, 5);
  const auto b = OrderPolicy::shuffled_cyclic(10, 5);
  const auto c = OrderPolicy::shuffled_cyclic(10, 6);
  for (std::uint64_t e = 0; e < 5; ++e) {
    auto pa = a.epoch_permutation(e);
    EXPECT_EQ(pa, b.epoch_permutation(e));
    std::vector<std::size_t> sorted = pa;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(10);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    EXPECT_EQ(sorted, iota);
  }
  EXPECT_NE(a.epoch_permutation(0), c.epoch_permutation(0));
  EXPECT_NE(a.epoch_permutation(0), a.epoch_permutation(1));
}

TEST(GradientTable, RunningSumDriftStaysSmall) {
  const auto p = make_regularized_least_squares(30, 4, 8, 0.0, 1.0, false);
  Script s(p.smooth(), OrderPolicy::cyclic(30), random_path(4, 1000, 4));
  for (Iteration k = 0; k < 1000; ++k) {
    s.refresh_through(k);
    ASSERT_LE(s.table.drift(), 1e-10) << "k=" << k;
  }
}

TEST(GradientTable, StoredGradientsMatchStoredPoints) {
  const auto p = make_regularized_least_squares(10, 3, 9, 0.0, 1.0, false);
  Script s(p.smooth(), OrderPolicy::shuffled_cyclic(10, 3), random_path(3, 57, 5));
  s.refresh_through(56);
  for (std::size_t i = 0; i < 10; ++i) {
    const Vector pt = s.table.stored_point(i);
    EXPECT_EQ(Vector(s.table.stored_gradient(i)), p.smooth().component(i).gradient(pt));
  }
}

TEST(GradientTable, Deterministic) {
  const auto p = make_regularized_least_squares(10, 3, 9, 0.0, 1.0, false);
  const auto path = random_path(3, 120, 6);
  Script a(p.smooth(), OrderPolicy::shuffled_cyclic(10, 3), path);
  Script b(p.smooth(), OrderPolicy::shuffled_cyclic(10, 3), path);
  a.refresh_through(119);
  b.refresh_through(119);
  EXPECT_EQ(a.table.running_sum(), b.table.running_sum());
}

TEST(GradientTable, HistoryMustEndAtCurrentIterate) {
  SmoothSum f({quad(scalar(1), 0)}, 1.0);
  IterateHistory h(0);
  h.push(scalar(1.0));
  GradientTable t(f, scalar(1.0));
  EXPECT_THROW(refresh(t, OrderPolicy::full(1), 1, h), std::logic_error);
  EXPECT_THROW(h.at(-1), std::out_of_range);
  h.push(scalar(2.0));
  EXPECT_THROW(h.at(0), std::out_of_range);  // depth 0 keeps only the last iterate
  EXPECT_EQ(h.at(1)[0], 2.0);
}

TEST(GradientTable, RejectsBadStart) {
  SmoothSum f({quad(Vector::Ones(2), 0)}, 1.0);
  EXPECT_THROW(GradientTable(f, Vector::Ones(3)), std::invalid_argument);
  EXPECT_THROW(GradientTable(f, Vector::Constant(2, NAN)), std::domain_error);
}

TEST(OrderPolicy, JsonRoundTripAndErrors) {
  for (const auto& p : {OrderPolicy::full(4), OrderPolicy::cyclic(4), OrderPolicy::shuffled_cyclic(4, 8),
                        OrderPolicy::fixed_delay({1, 0, 2, 2})}) {
    const auto q = OrderPolicy::from_json(nlohmann::json::parse(p.to_json().dump()), 4);
    EXPECT_EQ(q.kind(), p.kind());
    EXPECT_EQ(q.seed(), p.seed());
    EXPECT_EQ(q.delays(), p.delays());
    for (Iteration k = 0; k < 12; ++k) {
      const auto ra = p.refresh_set(k), rb = q.refresh_set(k);
      ASSERT_EQ(ra.size(), rb.size());
      for (std::size_t i = 0; i < ra.size(); ++i) {
        EXPECT_EQ(ra[i].component, rb[i].component);
        EXPECT_EQ(ra[i].source, rb[i].source);
      }
    }
  }
  EXPECT_EQ(OrderPolicy::from_json({{"kind", "fixed_delay"}, {"delay", 3}}, 5).certified_staleness(), 3);
  EXPECT_THROW(OrderPolicy::from_json({{"kind", "cyclic"}, {"m", 3}}, 4), std::invalid_argument);
  EXPECT_THROW(OrderPolicy::from_json({{"kind", "fixed_delay"}, {"delays", {1, 2}}}, 3),
               std::invalid_argument);
  EXPECT_THROW(OrderPolicy::from_json({{"kind", "random"}}, 3), std::invalid_argument);
  EXPECT_THROW(OrderPolicy::cyclic(0), std::invalid_argument);
  EXPECT_THROW(OrderPolicy::fixed_delay({1, -1}), std::invalid_argument);
  EXPECT_THROW(OrderPolicy::cyclic(2).refresh_set(-1), std::invalid_argument);
}
