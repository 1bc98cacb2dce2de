#pragma once

#include <string>
#include <string_view>
#include <utility>

namespace npmix {

enum class ObservationSpace { RealLine, NonnegIntegers };

enum class KernelId { Gaussian, Poisson, Exponential };

/// One-parameter component family p_theta. The Gaussian and Poisson instances
/// are in natural-parameter form, p_theta(x) = exp(theta*x - kappa(theta)) p0(x),
/// with convex cumulant kappa and increasing mean map mu = kappa'. The
/// exponential instance is parameterized directly by its rate (density
/// theta*exp(-theta*x)) and is flagged via natural_parameter = false; its mean
/// map 1/theta is decreasing and it has no cumulant in this chart.
///
/// Values are immutable after construction and safe to share across threads.
struct KernelFamily {
  KernelId id = KernelId::Gaussian;
  ObservationSpace observation_space = ObservationSpace::RealLine;
  double theta_lo = 0.0;  // open interval (theta_lo, theta_hi)
  double theta_hi = 0.0;
  bool natural_parameter = true;

  const char* name() const;

  /// log p_theta(x) in nats. theta must be inside the parameter domain.
  double log_component_density(double theta, double x) const;

  /// Cumulant kappa(theta); throws std::logic_error for the exponential chart.
  double cumulant(double theta) const;

  /// Mean map: mu(theta) = kappa'(theta) for natural families, 1/theta for the
  /// exponential rate chart.
  double mean(double theta) const;
  double mean_inverse(double x) const;

  /// d/dtheta log p_theta(x); vanishes exactly at critical points of the
  /// gradient function's summands.
  double score(double theta, double x) const;

  bool contains(double theta) const { return theta > theta_lo && theta < theta_hi; }
  void require_in_domain(double theta) const;  // throws std::domain_error
  void require_observation(double x) const;    // throws std::invalid_argument
};

KernelFamily gaussian_kernel();
KernelFamily poisson_kernel();
KernelFamily exponential_kernel();

/// Lookup by CLI/config name: "gaussian" | "poisson" | "exponential".
KernelFamily kernel_by_name(std::string_view name);

double component_density(const KernelFamily& kernel, double theta, double x);

/// (kappa(theta), mu(theta)).
std::pair<double, double> cumulant_quantities(const KernelFamily& kernel, double theta);

/// ln(x!) via a cumulative table; exact for integer arguments.
double log_factorial(long x);

}  // namespace npmix
