#pragma once

// Derivative-free reference for one coordinate of a separable proximal map.
// Golden-section search on phi(x) = 1/2 (x - y)^2 + eta * r(x) over
// [y - R, y + R] with R = |y| + 10, clipped to the box for the indicator.
//
// Function-value search can only localize a smooth minimum to about
// sqrt(machine epsilon) of the working type, so Real should be wider than
// double when 1e-8 agreement is required.

#include <cmath>

#include "piag/prox.hpp"

namespace piag {

template <class Real = long double>
double brute_force_prox(const ProxOperator& op, double y, double eta, Eigen::Index coord = 0,
                        double tol = 1e-10) {
  using std::abs;
  const Real yy = y;
  const Real step = eta;
  const Real l1 = op.l1_weight();
  const Real l2 = op.l2_weight();

  auto phi = [&](const Real& x) -> Real {
    Real reg = 0;
    switch (op.kind()) {
      case ProxKind::zero: break;
      case ProxKind::l1: reg = l1 * abs(x); break;
      case ProxKind::squared_l2: reg = l2 * x * x / 2; break;
      case ProxKind::elastic_net: reg = l1 * abs(x) + l2 * x * x / 2; break;
      case ProxKind::box: break;  // domain handled by the bracket
    }
    const Real diff = x - yy;
    return diff * diff / 2 + step * reg;
  };

  const Real radius = abs(yy) + 10;
  Real lo = yy - radius;
  Real hi = yy + radius;
  if (op.kind() == ProxKind::box) {
    const Real blo = op.lower(coord);
    const Real bhi = op.upper(coord);
    if (lo < blo) lo = blo;
    if (hi > bhi) hi = bhi;
    if (lo > hi) {  // y is more than R away from the box
      lo = yy < blo ? blo : bhi;
      hi = lo;
    }
  }

  const Real inv_phi = (Real(std::sqrt(5.0L)) - 1) / 2;
  Real c = hi - inv_phi * (hi - lo);
  Real d = lo + inv_phi * (hi - lo);
  Real fc = phi(c);
  Real fd = phi(d);
  while (hi - lo > Real(tol)) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = phi(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = phi(d);
    }
  }
  // Endpoints are candidates too: the minimizer can sit on a box face.
  Real best = (lo + hi) / 2;
  Real fbest = phi(best);
  for (const Real& cand : {lo, hi}) {
    const Real fv = phi(cand);
    if (fv < fbest) {
      best = cand;
      fbest = fv;
    }
  }
  return static_cast<double>(best);
}

}  // namespace piag
