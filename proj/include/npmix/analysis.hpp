#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "npmix/measures.hpp"

namespace npmix {

struct CriticalPointReport {
  int count = 0;
  std::vector<double> locations;  // strictly increasing
  int grid_size = 0;
  double lo = 0.0, hi = 0.0;
  /// Set when a 2x-finer pass found a different count (the finer count is
  /// the one reported).
  bool refinement_warning = false;
};

/// Critical points of F(theta) = sum_i w_i (p_theta/p0)(x_i) on [lo, hi]:
/// sign changes of F' on the grid, each refined by bisection to 1e-10.
CriticalPointReport count_critical_points(const KernelFamily& kernel, const Eigen::VectorXd& weights,
                                          const Eigen::VectorXd& data, double lo, double hi,
                                          int grid_size);

/// Strict local maxima of a density on [lo, hi] via the discrete up-down
/// pattern, refined by ternary search.
CriticalPointReport count_density_modes(const std::function<double(double)>& density, double lo,
                                        double hi, int grid_size);

struct QuadratureResult {
  AtomicDistribution distribution;
  int matched_moments = 0;       // 2k - 1
  double max_moment_error = 0.0; // relative
};

class MomentSequenceError : public std::runtime_error {
public:
  MomentSequenceError(const std::string& what, int failing_minor)
      : std::runtime_error(what), failing_minor(failing_minor) {}
  int failing_minor;
};

/// Gauss quadrature from raw moments m_0..m_{2k-1}: recurrence coefficients by
/// successive orthogonalization (Chebyshev algorithm, computed on the interval
/// rescaled to [-1,1]), then eigen-decomposition of the Jacobi matrix. Nodes
/// are the eigenvalues; weights are m_0 times squared first eigenvector
/// components. k = moments.size()/2, capped at 20.
QuadratureResult gauss_quadrature_from_moments(const Eigen::VectorXd& moments, double support_lo,
                                               double support_hi);

struct DivergenceSet {
  double hellinger_sq = 0.0;   // 1 - integral sqrt(p q); in [0, 1]
  double total_variation = 0.0;
  double chi_sq = 0.0;
  bool chi_sq_finite = true;
};

/// Adaptive quadrature of the three f-divergences between two densities on
/// [lo, hi]. Caller is responsible for choosing the interval so that the tail
/// mass outside it is negligible. chi^2 is flagged infinite when q vanishes
/// under nonvanishing p inside the interval.
DivergenceSet divergences(const std::function<double(double)>& p,
                          const std::function<double(double)>& q, double lo, double hi);

/// Raw moments m_0..m_{count-1} of the spec's distribution conditioned on
/// [-a, a]. Throws std::invalid_argument when the conditioning window carries
/// no mass.
Eigen::VectorXd conditioned_moments(const MixingSpec& spec, double a, int count);

/// Density of the unit-variance Gaussian mixture with mixing distribution
/// given by the spec (analytic where possible, quadrature for the sinusoid).
std::function<double(double)> mixture_density_fn(const MixingSpec& spec);
/// Interval [-L, L] outside which that density's mass is negligible.
double mixture_density_support_radius(const MixingSpec& spec);

/// Normalizer c of c*(1 + sin(omega0 x)) on [-a, a], by quadrature.
double sinusoid_normalizer(double a, double omega0);

/// Unnormalized convolution ((1 + sin(omega0 .)) 1_{[-a,a]} * phi)(y), computed
/// through the exact split [Phi(y+a) - Phi(y-a)] + e^{-omega0^2/2} sin(omega0 y) - E(y)
/// with E the tail correction: the oscillation amplitude enters once as an
/// exact factor, so sub-1e-12 wiggles stay noise-free.
double sinusoid_gaussian_convolution_raw(double a, double omega0, double y);

/// Tail correction E(y) = integral over |x| > a of sin(omega0 x) phi(y - x) dx.
double sinusoid_gaussian_tail_term(double a, double omega0, double y);

struct KAtomicApprox {
  AtomicDistribution distribution;
  double tv_bound = 0.0;     // 2 e^{-a^2/2} + 2 e^{a^2/4} (e a^2 / 2k)^k
  double tv_measured = 0.0;  // TV between the two Gaussian mixtures
};

/// k-atomic approximant of a 1-subgaussian mixing distribution: condition on
/// [-a, a], then k-point Gauss quadrature of the conditioned distribution.
KAtomicApprox k_atomic_approximation(const MixingSpec& spec, double a, int k);

/// Smallest k <= k_max with H(p_pi, p_pi'_k) <= 1/(3 sqrt(n)), using
/// a = sqrt(2 ln(6 sqrt(n))); k_max + 1 when none qualifies. A per-pi probe
/// (lower bound on the class-wide degree), Gaussian kernel only.
int statistical_degree(const MixingSpec& spec, const KernelFamily& kernel, Index n, int k_max = 20);

}  // namespace npmix
