#include <doctest.h>

#include <cmath>

#include "npmix/kernels.hpp"
#include "npmix/quadrature.hpp"
#include "npmix/rng.hpp"

using namespace npmix;

TEST_CASE("component density reference values") {
  const auto gaussian = gaussian_kernel();
  const auto poisson = poisson_kernel();
  CHECK(component_density(gaussian, 0.0, 0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
  CHECK(component_density(poisson, 0.0, 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  for (double x : {-3.0, 0.25, 7.0}) {
    CHECK(component_density(gaussian, x, x) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
  }
}

TEST_CASE("cumulant quantities") {
  const auto gaussian = gaussian_kernel();
  const auto poisson = poisson_kernel();
  auto [kg, mg] = cumulant_quantities(gaussian, 2.0);
  CHECK(kg == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(mg == doctest::Approx(2.0).epsilon(1e-14));
  auto [kp0, mp0] = cumulant_quantities(poisson, 0.0);
  CHECK(kp0 == doctest::Approx(0.0));
  CHECK(mp0 == doctest::Approx(1.0));
  auto [kp, mp] = cumulant_quantities(poisson, std::log(5.0));
  CHECK(kp == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(mp == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("mean map consistent with cumulant finite differences") {
  const double h = 1e-6;
  for (const auto& kernel : {gaussian_kernel(), poisson_kernel()}) {
    for (double theta : {-1.5, -0.25, 0.75, 2.0}) {
      const double fd = (kernel.cumulant(theta + h) - kernel.cumulant(theta - h)) / (2.0 * h);
      CHECK(kernel.mean(theta) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("cumulant convexity and mean monotonicity on a grid") {
  for (const auto& kernel : {gaussian_kernel(), poisson_kernel()}) {
    double prev_mean = -1e300;
    for (int g = 0; g <= 80; ++g) {
      const double theta = -4.0 + 8.0 * g / 80.0;
      const double mean = kernel.mean(theta);
      CHECK(mean > prev_mean);
      prev_mean = mean;
    }
    // kappa(t2) below the chord through (t1, t3)
    for (int g = 0; g < 20; ++g) {
      const double t1 = -3.0 + 0.3 * g;
      const double t3 = t1 + 0.618;
      const double t2 = 0.5 * (t1 + t3);
      const double chord = 0.5 * (kernel.cumulant(t1) + kernel.cumulant(t3));
      CHECK(kernel.cumulant(t2) <= chord + 1e-10);
    }
  }
  // Exponential rate chart: mean map decreasing, inverse consistent.
  const auto expo = exponential_kernel();
  CHECK(expo.natural_parameter == false);
  CHECK(expo.mean(1.0) > expo.mean(2.0));
  for (double theta : {0.2, 1.0, 7.5}) {
    CHECK(expo.mean_inverse(expo.mean(theta)) == doctest::Approx(theta).epsilon(1e-12));
  }
}

TEST_CASE("mean map inverse round trip") {
  for (const auto& kernel : {gaussian_kernel(), poisson_kernel()}) {
    for (int g = 0; g <= 40; ++g) {
      const double theta = -2.0 + 4.0 * g / 40.0;
      CHECK(kernel.mean_inverse(kernel.mean(theta)) == doctest::Approx(theta).epsilon(1e-10));
    }
  }
}

TEST_CASE("densities normalize") {
  const auto gaussian = gaussian_kernel();
  for (double theta : {-2.0, 0.0, 3.0}) {
    const double mass = integrate(
        [&](double x) { return std::exp(gaussian.log_component_density(theta, x)); }, theta - 12.0,
        theta + 12.0, 1e-13);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  }
  const auto poisson = poisson_kernel();
  for (double theta : {-1.0, 0.0, 2.0}) {
    double mass = 0.0;
    for (long x = 0; x < 400; ++x) mass += std::exp(poisson.log_component_density(theta, double(x)));
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  }
  const auto expo = exponential_kernel();
  for (double theta : {0.5, 1.0, 4.0}) {
    const double mass = integrate(
        [&](double x) { return std::exp(expo.log_component_density(theta, x)); }, 1e-12,
        80.0 / theta, 1e-13);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("gaussian translation invariance") {
  const auto gaussian = gaussian_kernel();
  CounterRng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const double theta = 4.0 * rng.next_gaussian();
    const double x = theta + rng.next_gaussian();
    const double c = 3.0 * rng.next_gaussian();
    const double base = gaussian.log_component_density(theta, x);
    const double shifted = gaussian.log_component_density(theta + c, x + c);
    CHECK(shifted == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("log density stays finite over the working range") {
  // No underflow to -inf for |theta|, |x| <= 50.
  for (const auto& kernel : {gaussian_kernel(), poisson_kernel()}) {
    for (double theta : {-50.0, -3.0, 0.0, 17.0, 50.0}) {
      for (double x : {0.0, 1.0, 50.0}) {
        const double value = kernel.log_component_density(theta, x);
        CHECK(std::isfinite(value));
      }
    }
  }
}

TEST_CASE("domain errors name the offending bound") {
  const auto expo = exponential_kernel();
  CHECK_THROWS_AS(component_density(expo, -1.0, 1.0), std::domain_error);
  CHECK_THROWS_WITH_AS(component_density(expo, 0.0, 1.0),
                       doctest::Contains("lower domain bound"), std::domain_error);
  CHECK_THROWS_AS(component_density(poisson_kernel(), 0.0, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(component_density(poisson_kernel(), 0.0, -2.0), std::invalid_argument);
  CHECK_THROWS_AS(kernel_by_name("cauchy"), std::invalid_argument);
}

TEST_CASE("log factorial table") {
  CHECK(log_factorial(0) == 0.0);
  CHECK(log_factorial(1) == 0.0);
  CHECK(log_factorial(5) == doctest::Approx(std::log(120.0)).epsilon(1e-14));
  CHECK(log_factorial(60) == doctest::Approx(std::lgamma(61.0)).epsilon(1e-12));
}
