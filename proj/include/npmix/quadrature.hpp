#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

namespace npmix {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440084436210485); }

/// Gauss-Legendre nodes and weights on [-1, 1], Newton iteration on the
/// Legendre recurrence. Cached per order.
void gauss_legendre(int order, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

/// Adaptive panel-halving integration of a smooth (possibly kinked) integrand.
/// Deterministic subdivision order; absolute tolerance is split across panels.
double integrate(const std::function<double(double)>& f, double lo, double hi,
                 double abs_tol = 1e-12, int max_depth = 48);

/// Same, but the interval is first cut into `initial_panels` equal panels
/// before adapting (for oscillatory integrands).
double integrate_panels(const std::function<double(double)>& f, double lo, double hi,
                        int initial_panels, double abs_tol = 1e-12, int max_depth = 48);

}  // namespace npmix
