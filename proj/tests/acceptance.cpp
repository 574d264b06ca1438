// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "piag/certify.hpp"
#include "piag/experiment.hpp"
#include "piag/prox_oracle.hpp"
#include "piag/solver.hpp"
#include "piag/step_size.hpp"
#include "test_support.hpp"

using namespace piag;
namespace fs = std::filesystem;
using Quad = boost::multiprecision::cpp_bin_float_quad;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("criterion %d %s  %s: %s\n", id, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ProblemInstance lasso() { return make_regularized_least_squares(20, 5, 7, 0.1, 1.0); }
ProblemInstance box_quadratic() { return make_constrained_quadratic(4, 3, -1.0, 1.0); }

struct TheoryRun {
  std::string name;
  IterateTrace trace;
  int envelope_a = 0;
};

/// Cyclic order, corollary step, 20 (3K + 1) iterations.
TheoryRun theory_run(const std::string& name, const ProblemInstance& p) {
  const auto policy = OrderPolicy::cyclic(p.m());
  const Iteration K = policy.certified_staleness();
  const auto step = step_size_corollary2(p.smooth().L(), p.smooth().mu(), K);
  auto cfg = SolverConfig::for_policy(policy, step.eta, 20 * (3 * K + 1));
  cfg.a = step.a;
  return {name, run(p, cfg), step.a};
}

void prox_correctness() {
  const auto t0 = Clock::now();
  Rng rng(1);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto c = test::random_prox_case(rng);
    worst = std::max(worst, std::abs(c.op.apply_scalar(c.y, c.eta) -
                                     brute_force_prox<Quad>(c.op, c.y, c.eta)));
  }
  const double secs = seconds_since(t0);
  report(1, worst <= 1e-8 && secs < 1.0, "closed-form prox vs golden-section oracle",
         fmt("1000 cases, max |diff| = %.3g (tol 1e-8), %.3f s (limit 1 s)", worst, secs));
}

void zero_staleness_reduction() {
  const auto p = lasso();
  const double eta = 1.0 / p.smooth().L();
  const auto t = run(p, SolverConfig::for_policy(OrderPolicy::full(p.m()), eta, 500));
  const auto ref = test::textbook_prox_gradient(p, Vector::Zero(p.n()), eta, 500);
  std::size_t mismatches = 0;
  for (std::size_t k = 0; k < ref.size(); ++k)
    if (k >= t.iterates.size() || t.iterates[k] != ref[k]) ++mismatches;
  report(2, mismatches == 0 && t.iterates.size() == 501, "full order at eta = 1/L is textbook prox-gradient",
         fmt("500 iterations, %zu iterates differ bitwise", mismatches));
}

void lemma_suite(const std::vector<TheoryRun>& runs, double secs) {
  bool ok = true;
  std::string detail;
  for (const auto& r : runs) {
    const std::vector<CertificateReport> checks{
        check_lemma1(r.trace),        check_gradient_error(r.trace),
        check_lemma2(r.trace),        check_lemma3(r.trace),
        check_theorem1_recursion(r.trace, 3), check_corollary1_recursion(r.trace, 3)};
    double worst = INFINITY;
    std::size_t skipped = 0;
    for (const auto& c : checks) {
      ok = ok && c.passed() && c.worst_margin && *c.worst_margin >= -1e-8;
      if (!c.passed()) detail += r.name + " " + c.check + " " + to_string(c.status) + "; ";
      if (c.worst_margin) worst = std::min(worst, *c.worst_margin);
      skipped += c.iterations_skipped;
    }
    ok = ok && skipped == 0;
    detail += fmt("%s K=%lld N=%lld worst margin %.3g, skipped %zu; ", r.name.c_str(),
                  (long long)r.trace.K, (long long)r.trace.iterations(), worst, skipped);
  }
  ok = ok && secs < 30.0;
  report(3, ok, "descent, gradient-error, distance, direction and a=3 recursions",
         detail + fmt("%.2f s (limit 30 s)", secs));
}

void envelope(const std::vector<TheoryRun>& runs) {
  bool ok = true;
  std::string detail;
  for (const auto& r : runs) {
    const auto c = check_theorem2_envelope(r.trace, r.envelope_a);
    const bool pass = c.passed();
    ok = ok && pass;
    detail += fmt("%s a=%d checked %zu, %s, worst margin %.3g; ", r.name.c_str(), r.envelope_a,
                  c.iterations_checked, to_string(c.status), c.worst_margin.value_or(NAN));
  }
  report(4, ok, "linear-rate envelope holds at every k >= aK+1", detail);
}

void complexity() {
  bool ok = true;
  std::string detail;
  for (auto [name, p] : {std::pair{std::string("lasso"), lasso()},
                         std::pair{std::string("box-quadratic"), box_quadratic()}}) {
    const auto policy = OrderPolicy::cyclic(p.m());
    const auto step = step_size_corollary2(p.smooth().L(), p.smooth().mu(), policy.certified_staleness());
    auto cfg = SolverConfig::for_policy(policy, step.eta, 50'000'000);
    cfg.store_iterates = false;
    const double F0 = p.objective(Vector::Zero(p.n())) - p.reference().value;
    cfg.target_epsilon = 1e-6 * F0;  // c >= F_0, so this reaches 1e-6 c
    const auto t = run(p, cfg);
    const auto probe = empirical_vs_bound_complexity(t, 1e-6 * F0);
    const auto cmp = empirical_vs_bound_complexity(t, 1e-6 * probe.c);
    const bool pass = cmp.k_actual && *cmp.k_actual <= cmp.k_bound;
    ok = ok && pass;
    detail += fmt("%s k_actual %lld <= k_bound %lld; ", name.c_str(),
                  cmp.k_actual ? (long long)*cmp.k_actual : -1LL, (long long)cmp.k_bound);
  }
  report(5, ok, "first k with F_k <= 1e-6 c is within the iteration bound", detail);
}

void staleness_monotonicity() {
  const auto p = lasso();
  const Iteration Ks[] = {0, 4, 19};
  double eta = INFINITY;
  for (Iteration K : Ks) eta = std::min(eta, step_size_corollary2(p.smooth().L(), p.smooth().mu(), K).eta);
  const double F0 = p.objective(Vector::Zero(p.n())) - p.reference().value;
  std::vector<Iteration> iters;
  std::string detail = fmt("eta = %.4g; ", eta);
  for (Iteration K : Ks) {
    auto cfg = SolverConfig::for_policy(policy_for_staleness(p.m(), K), eta, 50'000'000);
    cfg.store_iterates = false;
    cfg.target_epsilon = 1e-8 * F0;
    const auto t = run(p, cfg);
    const Iteration k = t.status == RunStatus::target_reached ? t.iterations() : -1;
    iters.push_back(k);
    detail += fmt("K=%lld %s: %lld iterations, rate %.9f; ", (long long)K,
                  to_string(policy_for_staleness(p.m(), K).kind()), (long long)k, empirical_rate(t));
  }
  bool ok = iters[0] >= 0;
  for (std::size_t i = 1; i < iters.size(); ++i) ok = ok && iters[i] >= iters[i - 1];
  report(6, ok, "iterations to F_k <= 1e-8 F_0 nondecreasing in K at a common eta", detail);
}

void sequence_lemma() {
  Rng rng(2024);
  int violations = 0;
  std::size_t checked = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t A = std::size_t(rng.uniform(0.0, 8.0));
    const double r = rng.uniform(0.01, 0.99);
    std::vector<double> w(A + 2);
    double total = 0.0;
    for (auto& v : w) total += (v = rng.uniform(0.0, 1.0));
    const double p = r * w[0] / total;
    std::vector<double> q(A + 1);
    for (std::size_t l = 0; l <= A; ++l) q[l] = r * w[l + 1] / total;
    std::vector<double> Z;
    for (std::size_t j = 0; j <= A; ++j) Z.push_back(rng.uniform(0.0, 1.0));
    while (Z.size() < 300) {
      const std::size_t k = Z.size() - 1;
      double next = p * Z[k];
      for (std::size_t l = 0; l <= A; ++l) next += q[l] * Z[k - l];
      Z.push_back(next);
    }
    const auto rep = check_sequence_lemma(Z, p, q, A);
    checked += rep.iterations_checked;
    if (!rep.passed()) ++violations;
  }
  report(7, violations == 0, "sequence lemma on extremal sequences",
         fmt("100 random (p, q, A), %zu terms checked, %d sequences violate", checked, violations));
}

void step_size_spots() {
  const double eta = step_size_theorem2(10.0, 1.0, 4, 3);
  const long double hand = 1.0L / 150.0L / 748800.0L;
  const double rel = double(std::abs((long double)eta - hand) / hand);
  const auto cor = step_size_corollary2(10.0, 1.0, 9);
  const bool ok = rel <= 1e-12 && cor.a == 10;
  report(8, ok, "step-size spot values",
         fmt("theorem step %.12e vs %.12Le (rel err %.2g); corollary a = %d for Q=10, K=9", eta,
             hand, rel, cor.a));
}

void determinism() {
  const fs::path base = fs::temp_directory_path() / ("piag_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(base);
  const auto config = ExperimentConfig::from_json(
      {{"problem",
        {{"generator", "regularized_least_squares"}, {"m", 20}, {"n", 5}, {"seed", 7},
         {"l1_weight", 0.1}, {"l2_weight", 1.0}}},
       {"sweep", {{"K", {0, 4, 19}}}},
       {"windows", 20},
       {"jobs", 3}});
  run_experiment(config, base / "a");
  run_experiment(config, base / "b");
  auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(base / "a")) {
    const auto ext = e.path().extension();
    if (ext != ".csv" && ext != ".json") continue;
    ++files;
    const auto other = base / "b" / e.path().filename();
    if (!fs::exists(other) || read(e.path()) != read(other)) ++differing;
  }
  fs::remove_all(base);
  report(9, files == 9 && differing == 0, "repeated experiment outputs are byte-identical",
         fmt("%zu CSV/JSON files compared, %zu differ", files, differing));
}

}  // namespace

int main() {
  prox_correctness();
  zero_staleness_reduction();
  const auto t0 = Clock::now();
  const std::vector<TheoryRun> runs{theory_run("lasso", lasso()),
                                    theory_run("box-quadratic", box_quadratic())};
  lemma_suite(runs, seconds_since(t0));
  envelope(runs);
  complexity();
  staleness_monotonicity();
  sequence_lemma();
  step_size_spots();
  determinism();
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
