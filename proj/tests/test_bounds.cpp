#include <doctest.h>

#include <cmath>
#include <complex>

#include "npmix/bounds.hpp"
#include "npmix/solver.hpp"

using namespace npmix;

namespace {

Sample make_sample(std::initializer_list<double> values) {
  return Sample::from_values(Eigen::Map<const Eigen::VectorXd>(values.begin(), Eigen::Index(values.size())));
}

/// Max modulus of ((r - z)/(1 - r z))^n on the circle |z| = rho, sampled.
double blaschke_power_max_modulus(double r, int n, double rho, int samples = 4096) {
  double best = 0.0;
  for (int g = 0; g < samples; ++g) {
    const double phi = 2.0 * M_PI * g / samples;
    const std::complex<double> z = std::polar(rho, phi);
    const std::complex<double> factor = (r - z) / (1.0 - r * z);
    best = std::max(best, std::pow(std::abs(factor), n));
  }
  return best;
}

}  // namespace

TEST_CASE("crit_bound matches the hand-evaluated gaussian case") {
  const auto rep = crit_bound(gaussian_kernel(), -2.0, 2.0, 2.0);
  CHECK(rep.theta_min == doctest::Approx(-2.0));
  CHECK(rep.theta_max == doctest::Approx(2.0));
  CHECK(rep.r == doctest::Approx(2.0));
  CHECK(rep.a == doctest::Approx(2.0));
  CHECK(rep.x0 == doctest::Approx(0.0));
  CHECK(rep.tau == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rep.kappa_max == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(rep.N1 == doctest::Approx(56.2231).epsilon(2e-5));
  CHECK(rep.bound == doctest::Approx(195.43).epsilon(3e-4));
}

TEST_CASE("crit_bound closed form for symmetric gaussian data with delta = r") {
  for (double c : {1.0, 2.0, 3.5, 8.0}) {
    const auto rep = crit_bound(gaussian_kernel(), -c, c, c);
    const double closed = (14.0 * c * c + std::log(1.0 + 1.0 / (c * c))) / std::log(4.0 / 3.0);
    CHECK(rep.bound == doctest::Approx(closed).epsilon(1e-12));
  }
}

TEST_CASE("crit_bound is invariant under data reflection for the gaussian kernel") {
  const auto rep = crit_bound(gaussian_kernel(), -1.0, 3.0, 0.7);
  const auto mirrored = crit_bound(gaussian_kernel(), -3.0, 1.0, 0.7);
  CHECK(rep.bound == doctest::Approx(mirrored.bound).epsilon(1e-13));
  CHECK(rep.N1 == doctest::Approx(mirrored.N1).epsilon(1e-13));
}

TEST_CASE("crit_bound preconditions") {
  CHECK_THROWS_AS(crit_bound(gaussian_kernel(), 2.0, -2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(crit_bound(gaussian_kernel(), -2.0, 2.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(crit_bound(gaussian_kernel(), 1.0, 2.0, 0.5), std::invalid_argument);  // mu(0)=0 outside
  CHECK_THROWS_AS(crit_bound(exponential_kernel(), 1.0, 2.0, 0.1), std::invalid_argument);
  // Poisson: mu(0) = 1 must lie inside [x_min, x_max]; x_min must be positive
  // for a finite theta_min.
  CHECK_NOTHROW(crit_bound(poisson_kernel(), 0.5, 9.0, 0.25));
  CHECK_THROWS_AS(crit_bound(poisson_kernel(), 2.0, 9.0, 0.25), std::invalid_argument);
}

TEST_CASE("delta minimization never exceeds the default-delta bound") {
  const auto fixed = crit_bound(gaussian_kernel(), -2.0, 2.0, 2.0);
  const auto best = crit_bound_min_delta(gaussian_kernel(), -2.0, 2.0, 0.02, 200.0);
  CHECK(best.bound <= fixed.bound + 1e-9);
}

TEST_CASE("gaussian atom bound reference values and scaling band") {
  const Sample range4 = make_sample({-2.0, -1.0, 2.0});
  CHECK(gaussian_atom_bound(range4) == doctest::Approx(195.0));
  CHECK(gaussian_atom_bound(make_sample({5.0})) == 1.0);
  CHECK(gaussian_atom_bound(make_sample({3.0, 3.0})) == 1.0);
  // Recentring: only the range matters.
  const Sample shifted = make_sample({98.0, 99.0, 102.0});
  CHECK(gaussian_atom_bound(shifted) == gaussian_atom_bound(range4));
  // bound / range^2 band over ranges >= 2 (the 14 r^2 term dominates).
  for (double range : {2.0, 2.5, 3.0, 4.0, 6.0, 10.0, 20.0, 50.0}) {
    const Sample s = make_sample({-0.5 * range, 0.5 * range});
    const double ratio = gaussian_atom_bound(s) / (range * range);
    CHECK(ratio >= 12.0);
    CHECK(ratio <= 12.8);
  }
  // At ranges >= 2.5 the tighter printed band holds.
  for (double range : {2.5, 3.0, 4.0, 10.0}) {
    const Sample s = make_sample({-0.5 * range, 0.5 * range});
    const double ratio = gaussian_atom_bound(s) / (range * range);
    CHECK(ratio <= 12.5);
  }
}

TEST_CASE("poisson atom bound is x_max") {
  CHECK(poisson_atom_bound(make_sample({0.0, 1.0, 5.0})) == 5);
  CHECK(poisson_atom_bound(make_sample({0.0})) == 0);
  CHECK(poisson_atom_bound(make_sample({3.0, 3.0, 3.0})) == 3);
  CHECK_THROWS_AS(poisson_atom_bound(make_sample({-1.0, 2.0})), std::invalid_argument);
  CHECK_THROWS_AS(poisson_atom_bound(make_sample({0.5, 2.0})), std::invalid_argument);
}

TEST_CASE("blaschke zero bound reference values") {
  CHECK(blaschke_zero_bound(0.5, 0.75, 1.0, 0.9531017980432486) ==
        doctest::Approx(10.0).epsilon(1e-9));
  CHECK(blaschke_zero_bound(0.5, 0.75, 1.0, 0.0) == 0.0);
  CHECK_THROWS_AS(blaschke_zero_bound(0.75, 0.5, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(blaschke_zero_bound(0.5, 0.75, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("blaschke bound is tight on extremal products") {
  for (auto [r, r2] : {std::pair{0.3, 0.5}, std::pair{0.5, 0.75}}) {
    for (int n = 1; n <= 10; ++n) {
      const double m_outer = blaschke_power_max_modulus(r, n, 1.0);
      const double m_inner = blaschke_power_max_modulus(r, n, r2);
      const double bound = blaschke_zero_bound(r, r2, 1.0, std::log(m_outer / m_inner));
      CHECK(bound == doctest::Approx(double(n)).epsilon(1e-9));
    }
  }
}

TEST_CASE("blaschke bound monotonicity in the log ratio and r2") {
  double prev = -1.0;
  for (double ratio : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    const double bound = blaschke_zero_bound(0.4, 0.6, 1.0, ratio);
    CHECK(bound > prev);
    prev = bound;
  }
  // For a fixed log ratio the denominator log((r1^2 + r2 r)/(r1(r2 + r)))
  // shrinks as r2 grows (derivative of the inner ratio is proportional to
  // r^2 - r1^2 < 0), so the bound grows: a smaller inner circle certifies
  // more zeros per unit of modulus drop.
  prev = -1.0;
  for (double r2 : {0.45, 0.55, 0.65, 0.8, 0.95}) {
    const double bound = blaschke_zero_bound(0.4, r2, 1.0, 1.0);
    CHECK(bound > prev);
    prev = bound;
  }
}

TEST_CASE("extremal circle measurement matches the analytic modulus") {
  // Max of |(r - z)/(1 - r z)| on |z| = rho is (r + rho)/(1 + r rho), at z = -rho.
  const double measured = blaschke_power_max_modulus(0.5, 3, 0.75);
  const double analytic = std::pow(1.25 / 1.375, 3.0);
  CHECK(measured == doctest::Approx(analytic).epsilon(1e-12));
  CHECK(std::log(1.0 / measured) == doctest::Approx(3.0 * std::log(1.1)).epsilon(1e-12));
  CHECK(std::log(1.0 / measured) == doctest::Approx(0.2859305).epsilon(1e-6));
}

TEST_CASE("exponential atom bound finiteness and scaling") {
  CHECK(exponential_atom_bound(make_sample({2.0, 2.0})) == 1.0);
  CHECK_THROWS_AS(exponential_atom_bound(make_sample({-1.0, 2.0})), std::invalid_argument);

  const double b12 = exponential_atom_bound(make_sample({1.0, 2.0}));
  CHECK(b12 > 1.0);
  CHECK(std::isfinite(b12));

  // Theta(x_max/x_min) over {eps, 1} families.
  for (double eps : {0.5, 0.1, 0.02}) {
    const double bound = exponential_atom_bound(make_sample({eps, 1.0}));
    const double normalized = bound * eps;  // bound / (x_max/x_min)
    CHECK(normalized >= 0.5);
    CHECK(normalized <= 10.0);
  }

  // {1/n, log n}: bound grows like n log n, demonstrating the looseness.
  double prev_norm = 0.0;
  for (double n : {100.0, 1000.0, 10000.0}) {
    const double bound = exponential_atom_bound(make_sample({1.0 / n, std::log(n)}));
    const double normalized = bound / (n * std::log(n));
    CHECK(normalized > 0.2);
    CHECK(normalized < 50.0);
    if (prev_norm > 0.0) CHECK(normalized < prev_norm * 3.0);  // stable Theta constant
    prev_norm = normalized;
  }
}

TEST_CASE("kappa growth condition checker") {
  const auto gaussian = kappa_growth_check(gaussian_kernel(), 0.5, 6.0, 64);
  CHECK(gaussian.K0_hat == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(gaussian.K1_hat == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(gaussian.eligible);

  const auto poisson = kappa_growth_check(poisson_kernel(), 1.0, 5.0, 64);
  CHECK(poisson.K0_hat > 2.0);
  CHECK(poisson.K0_hat == doctest::Approx(std::exp(1.0) + 1.0).epsilon(1e-9));  // min at theta0
  CHECK(poisson.eligible);

  // Exponential-tail cumulant -ln(1 - theta) on (0, 1/2): ratio -> 2 from
  // above, correctly flagged ineligible.
  const auto expo_tail = kappa_growth_check(
      [](double t) { return -std::log1p(-t); }, 0.01, 0.49, 128);
  CHECK(expo_tail.K0_hat >= 2.0);
  CHECK(expo_tail.K0_hat < 2.1);
  CHECK(!expo_tail.eligible);

  CHECK_THROWS_AS(kappa_growth_check(gaussian_kernel(), -1.0, 2.0, 16), std::invalid_argument);
  CHECK_THROWS_AS(kappa_growth_check([](double) { return 0.0; }, 1.0, 2.0, 16),
                  std::invalid_argument);
}

TEST_CASE("bound dominance over solver runs") {
  const auto gaussian = gaussian_kernel();
  for (std::uint64_t seed : {201u, 202u, 203u}) {
    const Sample sample = sample_mixture(gaussian, GaussianMixing{0.0, 1.0}, 150, seed);
    const auto sol = solve_npmle(gaussian, sample);
    CHECK(double(sol.pi_hat.size()) <= gaussian_atom_bound(sample));
  }
  const auto poisson = poisson_kernel();
  for (std::uint64_t seed : {204u, 205u}) {
    const Sample sample = sample_mixture(poisson, UniformMixing{0.0, 1.6}, 200, seed);
    const auto sol = solve_npmle(poisson, sample);
    CHECK(sol.pi_hat.size() <= poisson_atom_bound(sample));
  }
}
