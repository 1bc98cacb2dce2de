#include "npmix/kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "npmix/quadrature.hpp"

namespace npmix {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double log_factorial(long x) {
  if (x < 0) throw std::invalid_argument("log_factorial: negative argument");
  thread_local std::vector<double> table{0.0};
  while (static_cast<long>(table.size()) <= x) {
    table.push_back(table.back() + std::log(static_cast<double>(table.size())));
  }
  return table[static_cast<std::size_t>(x)];
}

const char* KernelFamily::name() const {
  switch (id) {
    case KernelId::Gaussian: return "gaussian";
    case KernelId::Poisson: return "poisson";
    case KernelId::Exponential: return "exponential";
  }
  return "?";
}

void KernelFamily::require_in_domain(double theta) const {
  if (!(theta > theta_lo)) {
    throw std::domain_error(std::string(name()) + ": theta = " + std::to_string(theta) +
                            " is not above the lower domain bound " + std::to_string(theta_lo));
  }
  if (!(theta < theta_hi)) {
    throw std::domain_error(std::string(name()) + ": theta = " + std::to_string(theta) +
                            " is not below the upper domain bound " + std::to_string(theta_hi));
  }
}

void KernelFamily::require_observation(double x) const {
  if (observation_space == ObservationSpace::NonnegIntegers) {
    if (!(x >= 0.0) || x != std::floor(x)) {
      throw std::invalid_argument(std::string(name()) + ": observation " + std::to_string(x) +
                                  " is not a nonnegative integer");
    }
  } else if (id == KernelId::Exponential) {
    if (!(x > 0.0)) {
      throw std::invalid_argument(std::string(name()) + ": observation " + std::to_string(x) +
                                  " is not strictly positive");
    }
  } else if (!std::isfinite(x)) {
    throw std::invalid_argument(std::string(name()) + ": observation is not finite");
  }
}

double KernelFamily::log_component_density(double theta, double x) const {
  switch (id) {
    case KernelId::Gaussian: {
      const double d = x - theta;
      return -0.5 * d * d - kLogSqrt2Pi;
    }
    case KernelId::Poisson:
      return theta * x - std::exp(theta) - log_factorial(static_cast<long>(x));
    case KernelId::Exponential:
      return std::log(theta) - theta * x;
  }
  return 0.0;
}

double KernelFamily::cumulant(double theta) const {
  switch (id) {
    case KernelId::Gaussian: return 0.5 * theta * theta;
    case KernelId::Poisson: return std::expm1(theta);
    case KernelId::Exponential:
      throw std::logic_error("exponential kernel is not in natural-parameter form; no cumulant");
  }
  return 0.0;
}

double KernelFamily::mean(double theta) const {
  switch (id) {
    case KernelId::Gaussian: return theta;
    case KernelId::Poisson: return std::exp(theta);
    case KernelId::Exponential: return 1.0 / theta;
  }
  return 0.0;
}

double KernelFamily::mean_inverse(double x) const {
  switch (id) {
    case KernelId::Gaussian: return x;
    case KernelId::Poisson:
      if (!(x > 0.0)) throw std::domain_error("poisson: mean_inverse needs x > 0");
      return std::log(x);
    case KernelId::Exponential:
      if (!(x > 0.0)) throw std::domain_error("exponential: mean_inverse needs x > 0");
      return 1.0 / x;
  }
  return 0.0;
}

double KernelFamily::score(double theta, double x) const {
  switch (id) {
    case KernelId::Gaussian: return x - theta;
    case KernelId::Poisson: return x - std::exp(theta);
    case KernelId::Exponential: return 1.0 / theta - x;
  }
  return 0.0;
}

KernelFamily gaussian_kernel() {
  return KernelFamily{KernelId::Gaussian, ObservationSpace::RealLine, -kInf, kInf, true};
}

KernelFamily poisson_kernel() {
  return KernelFamily{KernelId::Poisson, ObservationSpace::NonnegIntegers, -kInf, kInf, true};
}

KernelFamily exponential_kernel() {
  return KernelFamily{KernelId::Exponential, ObservationSpace::RealLine, 0.0, kInf, false};
}

KernelFamily kernel_by_name(std::string_view name) {
  if (name == "gaussian") return gaussian_kernel();
  if (name == "poisson") return poisson_kernel();
  if (name == "exponential") return exponential_kernel();
  throw std::invalid_argument("unknown kernel: " + std::string(name));
}

double component_density(const KernelFamily& kernel, double theta, double x) {
  kernel.require_in_domain(theta);
  kernel.require_observation(x);
  return std::exp(kernel.log_component_density(theta, x));
}

std::pair<double, double> cumulant_quantities(const KernelFamily& kernel, double theta) {
  kernel.require_in_domain(theta);
  return {kernel.cumulant(theta), kernel.mean(theta)};
}

}  // namespace npmix
