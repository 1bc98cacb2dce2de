#pragma once

#include <functional>

#include "npmix/measures.hpp"

#include <json.hpp>

namespace npmix {

/// Every intermediate quantity of the deterministic critical-point bound,
/// plus the final atom-count bound (raw real and floored-at-one integer).
struct BoundReport {
  double x_min = 0.0, x_max = 0.0;
  double x0 = 0.0, a = 0.0;          // midpoint and half-range, observation units
  double theta_min = 0.0, theta_max = 0.0, r = 0.0;  // parameter units
  double delta = 0.0;
  double tau = 0.0, kappa_max = 0.0, abs_theta_max = 0.0, abs_x_max = 0.0;
  double N1 = 0.0;
  double bound = 0.0;

  double floored() const;
  nlohmann::json to_json() const;
};

/// Deterministic atom-count bound for natural-parameter families. Requires
/// x_min < x_max, x_min <= mu(0) <= x_max, and delta small enough that
/// theta_min - 3*delta and theta_max + 3*delta stay in the parameter domain
/// (plus delta < (1/5) min{theta_min - lo, hi - theta_max} when the domain is
/// bounded).
BoundReport crit_bound(const KernelFamily& kernel, double x_min, double x_max, double delta);

/// crit_bound minimized over 64 log-spaced delta values in
/// [delta_lo, delta_hi].
BoundReport crit_bound_min_delta(const KernelFamily& kernel, double x_min, double x_max,
                                 double delta_lo, double delta_hi);

/// Gaussian specialization: recenters the sample, takes delta = r, floors the
/// bound and never reports less than 1.
double gaussian_atom_bound(const Sample& sample);

/// Poisson: the degree bound x_max. Observations must be nonnegative integers.
long long poisson_atom_bound(const Sample& sample);

/// Zero-count bound for a holomorphic function on the disk of radius r1:
/// log_modulus_ratio / log((r1^2 + r2*r) / (r1*(r2 + r))), for 0 < r < r2 < r1.
double blaschke_zero_bound(double r, double r2, double r1, double log_modulus_ratio);

/// Atom-count bound for the exponential-rate mixture via the zero-counting
/// route, with a worst-case-weights modulus bound measured on the outer
/// circle. Deliberately loose; scales as x_max/x_min.
double exponential_atom_bound(const Sample& sample);

struct KappaGrowth {
  double K0_hat = 0.0;  // min kappa(2 theta) / kappa(theta) over the grid
  double K1_hat = 0.0;  // max
  bool eligible = false;
};

/// Numeric check of the doubling-growth condition
/// K0*kappa(theta) <= kappa(2*theta) <= K1*kappa(theta) on [theta0, theta_hi].
/// Convexity with kappa(0) = 0 forces the ratio >= 2, so eligibility demands
/// a margin: K0_hat > 2 + eligibility_margin.
KappaGrowth kappa_growth_check(const std::function<double(double)>& kappa, double theta0,
                               double theta_hi, int grid, double eligibility_margin = 0.1);
KappaGrowth kappa_growth_check(const KernelFamily& kernel, double theta0, double theta_hi,
                               int grid, double eligibility_margin = 0.1);

}  // namespace npmix
