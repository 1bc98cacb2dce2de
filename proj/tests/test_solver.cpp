#include <doctest.h>

#include <cmath>

#include "npmix/solver.hpp"
#include "oracles.hpp"

using namespace npmix;

namespace {

Sample make_sample(std::initializer_list<double> values) {
  return Sample::from_values(Eigen::Map<const Eigen::VectorXd>(values.begin(), Eigen::Index(values.size())));
}

double integral_D_d_pi(const KernelFamily& kernel, const AtomicDistribution& pi, const Sample& sample) {
  double acc = 0.0;
  for (Index j = 0; j < pi.size(); ++j) {
    acc += pi.weights(j) * gradient_D(kernel, pi, sample, pi.atoms(j));
  }
  return acc;
}

}  // namespace

TEST_CASE("gradient function reference values") {
  const auto gaussian = gaussian_kernel();
  const auto pi = AtomicDistribution::point_mass(0.0);
  const Sample sample = make_sample({0.0});
  CHECK(gradient_D(gaussian, pi, sample, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(gradient_D(gaussian, pi, sample, 2.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  for (double theta : {-1.0, 0.5, 3.0}) {
    CHECK(gradient_D(gaussian, pi, sample, theta) ==
          doctest::Approx(std::exp(-0.5 * theta * theta)).epsilon(1e-12));
  }
}

TEST_CASE("integral of D against pi is one for arbitrary pi") {
  const auto gaussian = gaussian_kernel();
  AtomicDistribution pi;
  pi.atoms = Eigen::Vector3d(-2.0, 0.3, 1.7);
  pi.weights = Eigen::Vector3d(0.2, 0.45, 0.35);
  const Sample sample = sample_mixture(gaussian, GaussianMixing{0.0, 1.0}, 100, 17);
  CHECK(integral_D_d_pi(gaussian, pi, sample) == doctest::Approx(1.0).epsilon(1e-12));

  const Sample pois = sample_mixture(poisson_kernel(), PointMass{0.5}, 60, 3);
  AtomicDistribution pp;
  pp.atoms = Eigen::Vector2d(0.0, 1.0);
  pp.weights = Eigen::Vector2d(0.5, 0.5);
  CHECK(integral_D_d_pi(poisson_kernel(), pp, pois) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("em weight update fixed points and monotone direction") {
  const auto gaussian = gaussian_kernel();
  const Sample sym = make_sample({-1.5, -0.5, 0.5, 1.5});

  // Singleton simplex is a fixed point.
  Eigen::VectorXd one(1);
  one << 1.0;
  Eigen::VectorXd atoms1(1);
  atoms1 << 0.0;
  const Eigen::VectorXd updated1 = em_weight_update(gaussian, atoms1, one, sym);
  CHECK(updated1(0) == doctest::Approx(1.0).epsilon(1e-15));

  // Symmetric configuration is a fixed point.
  Eigen::VectorXd atoms2(2), half(2);
  atoms2 << -1.0, 1.0;
  half << 0.5, 0.5;
  const Eigen::VectorXd updated2 = em_weight_update(gaussian, atoms2, half, sym);
  CHECK(updated2(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(updated2(1) == doctest::Approx(0.5).epsilon(1e-12));

  // All observations at +1: weight on +1 strictly increases from (0.9, 0.1).
  const Sample plus = make_sample({1.0, 1.0, 1.0});
  Eigen::VectorXd skew(2);
  skew << 0.9, 0.1;
  const Eigen::VectorXd updated3 = em_weight_update(gaussian, atoms2, skew, plus);
  CHECK(updated3(1) > 0.1);
  CHECK(updated3.sum() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(em_weight_update(gaussian, atoms2, one, sym), std::invalid_argument);
}

TEST_CASE("one-observation solve is a point mass at the observation") {
  const auto sol = solve_npmle(gaussian_kernel(), make_sample({0.7}));
  REQUIRE(sol.pi_hat.size() == 1);
  CHECK(sol.pi_hat.atoms(0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(sol.converged);
  CHECK(sol.certificate.sup_D == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("repeated observations short-circuit to a point mass") {
  const auto sol = solve_npmle(gaussian_kernel(), make_sample({2.5, 2.5, 2.5}));
  REQUIRE(sol.pi_hat.size() == 1);
  CHECK(sol.pi_hat.atoms(0) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("close pair collapses to a single midpoint atom") {
  const auto sol = solve_npmle(gaussian_kernel(), make_sample({-0.5, 0.5}));
  REQUIRE(sol.pi_hat.size() == 1);
  CHECK(sol.pi_hat.atoms(0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(sol.converged);
}

TEST_CASE("well separated pair keeps two atoms near the observations") {
  const auto sol = solve_npmle(gaussian_kernel(), make_sample({-3.0, 3.0}));
  REQUIRE(sol.pi_hat.size() == 2);
  CHECK(sol.pi_hat.atoms(0) == doctest::Approx(-3.0).epsilon(1e-3));
  CHECK(sol.pi_hat.atoms(1) == doctest::Approx(3.0).epsilon(1e-3));
  CHECK(sol.pi_hat.weights(0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("certify a deliberately bad distribution") {
  const auto gaussian = gaussian_kernel();
  const Sample sample = make_sample({-3.0, 3.0});
  const auto pi = AtomicDistribution::point_mass(0.0);
  const auto cert = certify(gaussian, pi, sample, 4096);
  // sup D at theta ~ 3: (phi(0) + phi(6)) / (2 phi(3)) = e^{4.5}(1 + e^{-18})/2.
  const double expected = 0.5 * std::exp(4.5) * (1.0 + std::exp(-18.0));
  CHECK(cert.sup_D == doctest::Approx(expected).epsilon(1e-6));
  CHECK(std::abs(cert.argmax_theta) == doctest::Approx(3.0).epsilon(1e-3));
  // averaging identity holds even away from the optimum, so the single atom
  // itself has D = 1 and no support violation is flagged;
  CHECK(!cert.support_violation);

  // a second atom parked far from the data is flagged.
  AtomicDistribution bad;
  bad.atoms = Eigen::Vector2d(0.0, 10.0);
  bad.weights = Eigen::Vector2d(0.999, 0.001);
  const auto cert_bad = certify(gaussian, bad, sample, 4096);
  CHECK(cert_bad.support_violation);
}

TEST_CASE("certificate of a solver output is clean") {
  const Sample sample = sample_mixture(gaussian_kernel(), GaussianMixing{0.0, 1.0}, 150, 23);
  const auto sol = solve_npmle(gaussian_kernel(), sample);
  REQUIRE(sol.converged);
  const auto cert = certify(gaussian_kernel(), sol.pi_hat, sample, 4096);
  CHECK(cert.gap_bound <= 1e-6 + 1e-9);
  CHECK(cert.gap_bound >= -1e-9);
  CHECK(!cert.support_violation);
  CHECK(integral_D_d_pi(gaussian_kernel(), sol.pi_hat, sample) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("small instance oracle equivalence") {
  const auto gaussian = gaussian_kernel();
  int instance = 0;
  for (Index n : {1, 2, 3, 4}) {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      const Sample sample = sample_mixture(gaussian, GaussianMixing{0.0, 1.0}, n, seed);
      SolveConfig config;
      const auto sol = solve_npmle(gaussian, sample, config);
      CHECK(sol.converged);
      CHECK(sol.pi_hat.size() <= n);  // deterministic support bound
      const double pad = 1e-6;
      const auto window = default_theta_window(gaussian, sample);
      const auto oracle = npmix::testing::grid_npmle(gaussian, sample, window.first - pad,
                                                     window.second + pad, 2001);
      // Grid optimum <= oracle.ll + oracle.gap; the solver must reach it.
      CHECK(sol.log_likelihood + 1e-5 >= oracle.log_likelihood + oracle.gap);
      ++instance;
    }
  }
  CHECK(instance == 12);
}

TEST_CASE("translation equivariance of the gaussian solve") {
  const auto gaussian = gaussian_kernel();
  const Sample sample = sample_mixture(gaussian, GaussianMixing{0.0, 1.0}, 60, 31);
  const double shift = 1.75;
  Eigen::VectorXd shifted = sample.values.array() + shift;
  const Sample moved = Sample::from_values(shifted);
  const auto sol = solve_npmle(gaussian, sample);
  const auto sol_moved = solve_npmle(gaussian, moved);
  REQUIRE(sol.pi_hat.size() == sol_moved.pi_hat.size());
  for (Index j = 0; j < sol.pi_hat.size(); ++j) {
    CHECK(sol_moved.pi_hat.atoms(j) - sol.pi_hat.atoms(j) == doctest::Approx(shift).epsilon(1e-6));
  }
}

TEST_CASE("monotone likelihood and KKT sandwich on a batch") {
  const auto gaussian = gaussian_kernel();
  for (std::uint64_t seed : {101u, 102u, 103u, 104u, 105u}) {
    const Sample sample = sample_mixture(gaussian, UniformMixing{-2.0, 2.0}, 120, seed);
    const auto sol = solve_npmle(gaussian, sample);
    CHECK(sol.converged);
    CHECK(sol.min_ll_increment >= -1e-12);
    CHECK(sol.certificate.sup_D <= 1.0 + 1e-6 + 1e-12);
    CHECK(integral_D_d_pi(gaussian, sol.pi_hat, sample) == doctest::Approx(1.0).epsilon(1e-10));
    for (Index j = 0; j < sol.pi_hat.size(); ++j) {
      CHECK(gradient_D(gaussian, sol.pi_hat, sample, sol.pi_hat.atoms(j)) >= 1.0 - 1e-5);
    }
    CHECK(sol.pi_hat.size() <= sample.n());
  }
}

TEST_CASE("weight gradient matches finite differences on the simplex tangent") {
  const auto gaussian = gaussian_kernel();
  const Sample sample = sample_mixture(gaussian, GaussianMixing{0.0, 1.0}, 80, 41);
  const auto sol = solve_npmle(gaussian, sample);
  const auto& pi = sol.pi_hat;
  const Index k = pi.size();
  if (k < 2) return;

  auto loglik = [&](const Eigen::VectorXd& w) {
    AtomicDistribution cand;
    cand.atoms = pi.atoms;
    cand.weights = w;
    double acc = 0.0;
    for (Index i = 0; i < sample.n(); ++i) {
      acc += mixture_log_density(gaussian, cand, sample.values(i));
    }
    return acc / double(sample.n());
  };

  const double h = 1e-6;
  for (Index j = 0; j < k; ++j) {
    Eigen::VectorXd direction = Eigen::VectorXd::Constant(k, -1.0 / double(k));
    direction(j) += 1.0;  // e_j minus the simplex barycenter: tangent direction
    const double analytic_j = gradient_D(gaussian, pi, sample, pi.atoms(j));
    double analytic_mean = 0.0;
    for (Index l = 0; l < k; ++l) {
      analytic_mean += gradient_D(gaussian, pi, sample, pi.atoms(l)) / double(k);
    }
    const double analytic = analytic_j - analytic_mean;
    const double fd = (loglik(pi.weights + h * direction) - loglik(pi.weights - h * direction)) /
                      (2.0 * h);
    CHECK(fd == doctest::Approx(analytic).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("constrained window is honored") {
  const auto gaussian = gaussian_kernel();
  const Sample sample = sample_mixture(gaussian, GaussianMixing{0.0, 2.0}, 200, 57);
  SolveConfig config;
  config.theta_window = {-1.0, 1.0};
  const auto sol = solve_npmle(gaussian, sample, config);
  CHECK(sol.pi_hat.atoms.minCoeff() >= -1.0 - 1e-12);
  CHECK(sol.pi_hat.atoms.maxCoeff() <= 1.0 + 1e-12);
  CHECK(sol.converged);  // KKT restricted to the window
}

TEST_CASE("poisson all-zero sample clamps to the window edge and flags it") {
  const auto poisson = poisson_kernel();
  const Sample zeros = make_sample({0.0, 0.0, 0.0, 0.0});
  const auto sol = solve_npmle(poisson, zeros);
  REQUIRE(sol.pi_hat.size() == 1);
  CHECK(sol.window_clamped);
  CHECK(sol.pi_hat.atoms(0) == doctest::Approx(std::log(1e-6)).epsilon(1e-9));
}

TEST_CASE("solver config validation") {
  SolveConfig config;
  config.grid_size = 4;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = {};
  config.kkt_tol = 0.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = {};
  config.theta_window = {1.0, 1.0};
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}
