#include "npmix/bounds.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

namespace npmix {

double BoundReport::floored() const { return std::max(1.0, std::floor(bound)); }

nlohmann::json BoundReport::to_json() const {
  return nlohmann::json{{"x_min", x_min},
                        {"x_max", x_max},
                        {"x0", x0},
                        {"a", a},
                        {"theta_min", theta_min},
                        {"theta_max", theta_max},
                        {"r", r},
                        {"delta", delta},
                        {"tau", tau},
                        {"kappa_max", kappa_max},
                        {"abs_theta_max", abs_theta_max},
                        {"abs_x_max", abs_x_max},
                        {"N1", N1},
                        {"bound", bound},
                        {"bound_floored", floored()}};
}

BoundReport crit_bound(const KernelFamily& kernel, double x_min, double x_max, double delta) {
  if (!kernel.natural_parameter) {
    throw std::invalid_argument(
        "crit_bound: kernel is not in natural-parameter form (use exponential_atom_bound)");
  }
  if (!(x_min < x_max)) throw std::invalid_argument("crit_bound: requires x_min < x_max");
  if (!(delta > 0.0)) throw std::invalid_argument("crit_bound: requires delta > 0");
  const double mu0 = kernel.mean(0.0);
  if (!(x_min <= mu0 && mu0 <= x_max)) {
    throw std::invalid_argument("crit_bound: requires x_min <= mu(0) <= x_max, got mu(0) = " +
                                std::to_string(mu0));
  }

  BoundReport rep;
  rep.x_min = x_min;
  rep.x_max = x_max;
  rep.delta = delta;
  rep.x0 = 0.5 * (x_min + x_max);
  rep.a = 0.5 * (x_max - x_min);
  rep.theta_min = kernel.mean_inverse(x_min);
  rep.theta_max = kernel.mean_inverse(x_max);
  rep.r = 0.5 * (rep.theta_max - rep.theta_min);

  const double head = rep.theta_min - kernel.theta_lo;
  const double tail = kernel.theta_hi - rep.theta_max;
  if (!(delta < 0.2 * std::min(head, tail))) {
    throw std::invalid_argument("crit_bound: requires delta < (1/5) min{theta_min - lo, hi - theta_max}");
  }
  if (!kernel.contains(rep.theta_min - 3.0 * delta) || !kernel.contains(rep.theta_max + 3.0 * delta)) {
    throw std::invalid_argument("crit_bound: theta_min - 3 delta or theta_max + 3 delta leaves the domain");
  }

  rep.tau = std::max(kernel.mean(rep.theta_max + delta) - x_max,
                     x_min - kernel.mean(rep.theta_min - delta));
  rep.abs_theta_max = std::max(rep.theta_max, -rep.theta_min);
  rep.abs_x_max = std::max(x_max, -x_min);
  rep.kappa_max = std::max(kernel.cumulant(rep.theta_min - 3.0 * delta),
                           kernel.cumulant(rep.theta_max + 3.0 * delta));
  rep.N1 = 2.0 * (rep.a + std::abs(mu0) + std::abs(rep.x0)) * (rep.abs_theta_max + 2.0 * delta) +
           rep.kappa_max + std::log((rep.abs_x_max + 1.0 / delta) / rep.tau);
  rep.bound = rep.N1 / std::log((2.0 * rep.r + 2.0 * delta) / (2.0 * rep.r + delta));
  return rep;
}

BoundReport crit_bound_min_delta(const KernelFamily& kernel, double x_min, double x_max,
                                 double delta_lo, double delta_hi) {
  if (!(delta_lo > 0.0 && delta_lo < delta_hi)) {
    throw std::invalid_argument("crit_bound_min_delta: need 0 < delta_lo < delta_hi");
  }
  BoundReport best;
  bool have = false;
  const double ratio = std::log(delta_hi / delta_lo);
  for (int i = 0; i < 64; ++i) {
    const double delta = delta_lo * std::exp(ratio * i / 63.0);
    try {
      BoundReport rep = crit_bound(kernel, x_min, x_max, delta);
      if (!have || rep.bound < best.bound) {
        best = rep;
        have = true;
      }
    } catch (const std::invalid_argument&) {
      // delta outside the admissible range for this kernel; skip.
    }
  }
  if (!have) throw std::invalid_argument("crit_bound_min_delta: no admissible delta in range");
  return best;
}

double gaussian_atom_bound(const Sample& sample) {
  if (sample.n() == 1 || sample.x_max() == sample.x_min()) return 1.0;
  const double a = 0.5 * (sample.x_max() - sample.x_min());
  // Recentred data: x0 = 0, delta = r = a.
  const BoundReport rep = crit_bound(gaussian_kernel(), -a, a, a);
  return std::max(1.0, std::floor(rep.bound));
}

long long poisson_atom_bound(const Sample& sample) {
  for (Index i = 0; i < sample.n(); ++i) {
    const double x = sample.values(i);
    if (!(x >= 0.0) || x != std::floor(x)) {
      throw std::invalid_argument("poisson_atom_bound: observations must be nonnegative integers");
    }
  }
  return static_cast<long long>(sample.x_max());
}

double blaschke_zero_bound(double r, double r2, double r1, double log_modulus_ratio) {
  if (!(0.0 < r && r < r2 && r2 < r1)) {
    throw std::invalid_argument("blaschke_zero_bound: requires 0 < r < r2 < r1");
  }
  if (!(log_modulus_ratio >= 0.0)) {
    throw std::invalid_argument("blaschke_zero_bound: log modulus ratio must be >= 0");
  }
  return log_modulus_ratio / std::log((r1 * r1 + r2 * r) / (r1 * (r2 + r)));
}

double exponential_atom_bound(const Sample& sample) {
  for (Index i = 0; i < sample.n(); ++i) {
    if (!(sample.values(i) > 0.0)) {
      throw std::invalid_argument("exponential_atom_bound: observations must be positive");
    }
  }
  if (sample.x_min() == sample.x_max()) return 1.0;

  const double a = 1.0 / sample.x_max();
  const double b = 1.0 / sample.x_min();
  const double r = 0.5 * (b - a);
  const double r2 = 0.5 * (a + b);  // distance from the disk center to the origin
  // r1 = 2r per the root-localization argument when the ordering allows it
  // (x_max/x_min > 3); otherwise widen to keep r < r2 < r1.
  const double r1 = (2.0 * r > r2) ? 2.0 * r : 2.0 * r2;

  // Worst-case-weights modulus of F'(z + r2) = sum_i w_i e^{-(z+r2) x_i} (1 - (z+r2) x_i)
  // on the circle |z| = r1, in log form.
  const int angular = 2048;
  double log_max = 0.0;  // M_f(r2) >= |F'(0)| = 1, so the ratio is >= 1
  for (int g = 0; g < angular; ++g) {
    const double phi = 2.0 * M_PI * g / angular;
    const std::complex<double> w(r2 + r1 * std::cos(phi), r1 * std::sin(phi));
    for (Index i = 0; i < sample.n(); ++i) {
      const double x = sample.values(i);
      const std::complex<double> lin = 1.0 - w * x;
      const double log_term = -w.real() * x + std::log(std::abs(lin));
      log_max = std::max(log_max, log_term);
    }
  }
  return blaschke_zero_bound(r, r2, r1, log_max);
}

KappaGrowth kappa_growth_check(const std::function<double(double)>& kappa, double theta0,
                               double theta_hi, int grid, double eligibility_margin) {
  if (!(theta0 > 0.0) || !(theta_hi > theta0)) {
    throw std::invalid_argument("kappa_growth_check: need 0 < theta0 < theta_hi");
  }
  if (grid < 2) throw std::invalid_argument("kappa_growth_check: grid must be >= 2");
  KappaGrowth out;
  out.K0_hat = std::numeric_limits<double>::infinity();
  out.K1_hat = -std::numeric_limits<double>::infinity();
  for (int g = 0; g < grid; ++g) {
    const double theta = theta0 + (theta_hi - theta0) * g / (grid - 1);
    const double base = kappa(theta);
    if (!(std::abs(base) > 1e-300)) {
      throw std::invalid_argument("kappa_growth_check: kappa vanishes at theta = " +
                                  std::to_string(theta) + "; choose a larger theta0");
    }
    const double ratio = kappa(2.0 * theta) / base;
    out.K0_hat = std::min(out.K0_hat, ratio);
    out.K1_hat = std::max(out.K1_hat, ratio);
  }
  out.eligible = out.K0_hat > 2.0 + eligibility_margin;
  return out;
}

KappaGrowth kappa_growth_check(const KernelFamily& kernel, double theta0, double theta_hi,
                               int grid, double eligibility_margin) {
  return kappa_growth_check([&](double t) { return kernel.cumulant(t); }, theta0, theta_hi, grid,
                            eligibility_margin);
}

}  // namespace npmix
