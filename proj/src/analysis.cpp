#include "npmix/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "npmix/quadrature.hpp"

namespace npmix {

namespace {

double tilt_exponent(const KernelFamily& kernel, double theta, double x) {
  return kernel.id == KernelId::Exponential ? -theta * x : theta * x;
}

/// Sign of F'(theta) for F(theta) = sum w_i (p_theta/p0)(x_i); common positive
/// factors are dropped and the tilt is max-shifted.
double fprime_sign(const KernelFamily& kernel, const Eigen::VectorXd& weights,
                   const Eigen::VectorXd& data, double theta) {
  double shift = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < data.size(); ++i) {
    shift = std::max(shift, tilt_exponent(kernel, theta, data(i)));
  }
  double acc = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    acc += weights(i) * std::exp(tilt_exponent(kernel, theta, data(i)) - shift) *
           kernel.score(theta, data(i));
  }
  return acc;
}

std::vector<double> critical_points_pass(const KernelFamily& kernel, const Eigen::VectorXd& weights,
                                         const Eigen::VectorXd& data, double lo, double hi,
                                         int grid_size) {
  Eigen::VectorXd sign_values(grid_size);
  const double step = (hi - lo) / (grid_size - 1);
  for (int g = 0; g < grid_size; ++g) {
    const double theta = (g + 1 == grid_size) ? hi : lo + g * step;
    sign_values(g) = fprime_sign(kernel, weights, data, theta);
  }
  std::vector<double> roots;
  for (int g = 0; g + 1 < grid_size; ++g) {
    double left = lo + g * step;
    double right = (g + 2 == grid_size) ? hi : lo + (g + 1) * step;
    double sl = sign_values(g), sr = sign_values(g + 1);
    if (sl == 0.0) continue;  // exact grid zero credited to the adjacent cell
    if (sl * sr > 0.0) continue;
    while (right - left > 1e-10) {
      const double mid = 0.5 * (left + right);
      const double sm = fprime_sign(kernel, weights, data, mid);
      if (sm == 0.0) {
        left = right = mid;
      } else if (sm * sl > 0.0) {
        left = mid;
      } else {
        right = mid;
      }
    }
    roots.push_back(0.5 * (left + right));
  }
  return roots;
}

std::vector<double> density_modes_pass(const std::function<double(double)>& density, double lo,
                                       double hi, int grid_size) {
  Eigen::VectorXd values(grid_size);
  const double step = (hi - lo) / (grid_size - 1);
  for (int g = 0; g < grid_size; ++g) {
    values(g) = density((g + 1 == grid_size) ? hi : lo + g * step);
  }
  // A mode is a maximal run of equal values with strictly smaller neighbors
  // on both sides (symmetric grids land peaks on equal-value pairs).
  std::vector<double> modes;
  int g = 1;
  while (g + 1 < grid_size) {
    if (!(values(g) > values(g - 1))) {
      ++g;
      continue;
    }
    int end = g;
    while (end + 1 < grid_size && values(end + 1) == values(g)) ++end;
    if (end + 1 < grid_size && values(end + 1) < values(g)) {
      double left = lo + (g - 1) * step;
      double right = (end + 2 >= grid_size) ? hi : lo + (end + 1) * step;
      while (right - left > 1e-10) {
        const double m1 = left + (right - left) / 3.0;
        const double m2 = right - (right - left) / 3.0;
        if (density(m1) < density(m2)) left = m1; else right = m2;
      }
      modes.push_back(0.5 * (left + right));
    }
    g = end + 1;
  }
  return modes;
}

}  // namespace

CriticalPointReport count_critical_points(const KernelFamily& kernel, const Eigen::VectorXd& weights,
                                          const Eigen::VectorXd& data, double lo, double hi,
                                          int grid_size) {
  if (weights.size() != data.size() || weights.size() == 0) {
    throw std::invalid_argument("count_critical_points: weight/data length mismatch");
  }
  if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("count_critical_points: weights must lie on the simplex");
  }
  if (!(lo < hi)) throw std::invalid_argument("count_critical_points: empty interval");
  kernel.require_in_domain(lo);
  kernel.require_in_domain(hi);
  grid_size = std::max(grid_size, 16);

  CriticalPointReport rep;
  rep.lo = lo;
  rep.hi = hi;
  auto coarse = critical_points_pass(kernel, weights, data, lo, hi, grid_size);
  auto fine = critical_points_pass(kernel, weights, data, lo, hi, 2 * grid_size);
  if (fine.size() != coarse.size()) {
    rep.refinement_warning = true;
    rep.locations = std::move(fine);
    rep.grid_size = 2 * grid_size;
  } else {
    rep.locations = std::move(coarse);
    rep.grid_size = grid_size;
  }
  rep.count = static_cast<int>(rep.locations.size());
  return rep;
}

CriticalPointReport count_density_modes(const std::function<double(double)>& density, double lo,
                                        double hi, int grid_size) {
  if (!(lo < hi)) throw std::invalid_argument("count_density_modes: empty interval");
  grid_size = std::max(grid_size, 16);
  CriticalPointReport rep;
  rep.lo = lo;
  rep.hi = hi;
  auto coarse = density_modes_pass(density, lo, hi, grid_size);
  auto fine = density_modes_pass(density, lo, hi, 2 * grid_size);
  if (fine.size() != coarse.size()) {
    rep.refinement_warning = true;
    rep.locations = std::move(fine);
    rep.grid_size = 2 * grid_size;
  } else {
    rep.locations = std::move(coarse);
    rep.grid_size = grid_size;
  }
  rep.count = static_cast<int>(rep.locations.size());
  return rep;
}

// ---- Gauss quadrature from moments ----

namespace {

/// Chebyshev recurrence (successive orthogonalization of the moment matrix):
/// moments -> Jacobi coefficients alpha, beta. Returns the usable order
/// (smaller than requested when the sequence is exactly low-rank).
int chebyshev_recurrence(const Eigen::VectorXd& m, int k, Eigen::VectorXd& alpha,
                         Eigen::VectorXd& beta, double pd_tol) {
  alpha.resize(k);
  beta.resize(k);
  alpha(0) = m(1) / m(0);
  beta(0) = m(0);
  if (k == 1) return 1;

  const int cols = 2 * k;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(k, cols);
  sigma.row(0) = m.head(cols).transpose();
  for (int j = 1; j < k; ++j) {
    for (int l = j; l <= 2 * k - j - 1; ++l) {
      double val = sigma(j - 1, l + 1) - alpha(j - 1) * sigma(j - 1, l);
      if (j >= 2) val -= beta(j - 1) * sigma(j - 2, l);
      sigma(j, l) = val;
    }
    const double prev = sigma(j - 1, j - 1);
    const double cur = sigma(j, j);
    if (cur <= pd_tol * std::abs(prev)) {
      if (cur < -pd_tol * std::abs(prev)) {
        throw MomentSequenceError(
            "gauss_quadrature_from_moments: Hankel leading minor " + std::to_string(j + 1) +
                " is negative; not a moment sequence",
            j + 1);
      }
      return j;  // exactly j-atomic input
    }
    beta(j) = cur / prev;
    alpha(j) = sigma(j, j + 1) / cur - sigma(j - 1, j) / prev;
  }
  return k;
}

/// A couple of Newton steps on the moment-matching equations to polish the
/// eigen-decomposition output (the moment map is ill-conditioned for large k).
void polish_quadrature(const Eigen::VectorXd& m, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  const int k = static_cast<int>(nodes.size());
  const int rows = 2 * k;
  for (int iter = 0; iter < 8; ++iter) {
    Eigen::VectorXd residual(rows);
    Eigen::MatrixXd jac(rows, 2 * k);
    for (int l = 0; l < rows; ++l) {
      double acc = 0.0;
      for (int j = 0; j < k; ++j) acc += weights(j) * std::pow(nodes(j), l);
      residual(l) = acc - m(l);
      for (int j = 0; j < k; ++j) {
        jac(l, j) = std::pow(nodes(j), l);  // d/dw_j
        jac(l, k + j) = l == 0 ? 0.0 : l * weights(j) * std::pow(nodes(j), l - 1);
      }
    }
    if (residual.cwiseAbs().maxCoeff() < 1e-15 * std::abs(m(0))) break;
    Eigen::VectorXd step = jac.colPivHouseholderQr().solve(residual);
    if (!step.allFinite()) break;
    Eigen::VectorXd new_w = weights - step.head(k);
    Eigen::VectorXd new_x = nodes - step.tail(k);
    if (new_w.minCoeff() <= 0.0) break;
    weights = new_w;
    nodes = new_x;
  }
}

}  // namespace

QuadratureResult gauss_quadrature_from_moments(const Eigen::VectorXd& moments, double support_lo,
                                               double support_hi) {
  const int len = static_cast<int>(moments.size());
  if (len < 2) throw std::invalid_argument("gauss_quadrature_from_moments: need at least m0, m1");
  const int k = len / 2;
  if (k > 20) throw std::invalid_argument("gauss_quadrature_from_moments: k is capped at 20");
  if (!(moments(0) > 0.0)) throw std::invalid_argument("gauss_quadrature_from_moments: m0 must be > 0");
  if (!(support_lo < support_hi)) {
    throw std::invalid_argument("gauss_quadrature_from_moments: bad support interval");
  }

  // Rescale the support to [-1, 1] for conditioning.
  const double mid = 0.5 * (support_lo + support_hi);
  const double half = 0.5 * (support_hi - support_lo);
  Eigen::VectorXd scaled = Eigen::VectorXd::Zero(2 * k);
  for (int l = 0; l < 2 * k; ++l) {
    double acc = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= l; ++j) {
      // C(l, j) * m_j * (-mid)^(l-j)
      acc += binom * moments(j) * std::pow(-mid, l - j);
      binom *= double(l - j) / double(j + 1);
    }
    scaled(l) = acc / std::pow(half, l);
  }

  Eigen::VectorXd alpha, beta;
  const int order = chebyshev_recurrence(scaled, k, alpha, beta, 1e-10);

  Eigen::VectorXd nodes(order), weights(order);
  if (order == 1) {
    nodes(0) = alpha(0);
    weights(0) = beta(0);
  } else {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
    for (int j = 0; j < order; ++j) {
      jacobi(j, j) = alpha(j);
      if (j + 1 < order) {
        const double off = std::sqrt(beta(j + 1));
        jacobi(j, j + 1) = off;
        jacobi(j + 1, j) = off;
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    nodes = es.eigenvalues();
    for (int j = 0; j < order; ++j) {
      const double v0 = es.eigenvectors()(0, j);
      weights(j) = scaled(0) * v0 * v0;
    }
    polish_quadrature(scaled, nodes, weights);
  }

  QuadratureResult result;
  result.distribution.atoms.resize(order);
  result.distribution.weights.resize(order);
  std::vector<int> perm(order);
  for (int j = 0; j < order; ++j) perm[j] = j;
  std::sort(perm.begin(), perm.end(), [&](int a, int b) { return nodes(a) < nodes(b); });
  for (int j = 0; j < order; ++j) {
    double atom = mid + half * nodes(perm[j]);
    atom = std::clamp(atom, support_lo, support_hi);
    result.distribution.atoms(j) = atom;
    result.distribution.weights(j) = weights(perm[j]) / scaled(0);
  }
  result.distribution.weights /= result.distribution.weights.sum();

  // Reproduction error measured on the [-1,1]-rescaled moments relative to
  // the total mass (every rescaled moment is bounded by m0, so odd moments
  // that vanish exactly do not blow the metric up).
  result.matched_moments = 2 * order - 1;
  double max_err = 0.0;
  for (int l = 0; l < 2 * k; ++l) {
    double acc = 0.0;
    for (int j = 0; j < order; ++j) {
      const double u = (result.distribution.atoms(j) - mid) / half;
      acc += result.distribution.weights(j) * std::pow(u, l) * moments(0);
    }
    max_err = std::max(max_err, std::abs(acc - scaled(l)) / std::abs(moments(0)));
  }
  result.max_moment_error = max_err;
  return result;
}

// ---- Divergences ----

DivergenceSet divergences(const std::function<double(double)>& p,
                          const std::function<double(double)>& q, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("divergences: empty interval");
  bool chi_infinite = false;

  const double bc = integrate([&](double x) {
    const double pv = std::max(p(x), 0.0);
    const double qv = std::max(q(x), 0.0);
    return std::sqrt(pv * qv);
  }, lo, hi, 1e-12);

  const double tv = integrate([&](double x) { return std::abs(p(x) - q(x)); }, lo, hi, 1e-12);

  const double chi = integrate([&](double x) {
    const double pv = std::max(p(x), 0.0);
    const double qv = q(x);
    if (qv <= 0.0) {
      if (pv > 0.0) chi_infinite = true;
      return 0.0;
    }
    const double d = pv - qv;
    return d * d / qv;
  }, lo, hi, 1e-12);

  DivergenceSet out;
  out.hellinger_sq = std::clamp(1.0 - bc, 0.0, 1.0);
  out.total_variation = std::clamp(0.5 * tv, 0.0, 1.0);
  out.chi_sq = chi_infinite ? std::numeric_limits<double>::infinity() : chi;
  out.chi_sq_finite = !chi_infinite;
  return out;
}

// ---- Conditioned moments and mixture densities ----

namespace {

struct Interval {
  double lo, hi;
};

Interval conditioned_support(const MixingSpec& spec, double a) {
  return std::visit(
      [&](const auto& s) -> Interval {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          return {s.theta, s.theta};
        } else if constexpr (std::is_same_v<T, FiniteAtomic>) {
          return {std::max(-a, s.dist.atoms.minCoeff()), std::min(a, s.dist.atoms.maxCoeff())};
        } else if constexpr (std::is_same_v<T, GaussianMixing>) {
          return {-a, a};
        } else if constexpr (std::is_same_v<T, UniformMixing>) {
          return {std::max(-a, s.lo), std::min(a, s.hi)};
        } else {
          return {std::max(-a, -s.a), std::min(a, s.a)};
        }
      },
      spec);
}

Eigen::VectorXd moments_by_quadrature(const std::function<double(double)>& density, double lo,
                                      double hi, int count) {
  // Normalize, then integrate each power against the conditioned density.
  const int panels = std::max(8, static_cast<int>(std::ceil(4.0 * (hi - lo))));
  const double mass = integrate_panels(density, lo, hi, panels, 1e-14);
  if (!(mass > 1e-300)) throw std::invalid_argument("conditioned_moments: window carries no mass");
  Eigen::VectorXd m(count);
  for (int l = 0; l < count; ++l) {
    m(l) = integrate_panels([&](double x) { return std::pow(x, l) * density(x); }, lo, hi, panels,
                            1e-14) /
           mass;
  }
  m(0) = 1.0;
  return m;
}

}  // namespace

Eigen::VectorXd conditioned_moments(const MixingSpec& spec, double a, int count) {
  if (!(a > 0.0) || count < 1) throw std::invalid_argument("conditioned_moments: bad arguments");
  return std::visit(
      [&](const auto& s) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          if (std::abs(s.theta) > a) {
            throw std::invalid_argument("conditioned_moments: point mass outside the window");
          }
          Eigen::VectorXd m(count);
          double acc = 1.0;
          for (int l = 0; l < count; ++l) {
            m(l) = acc;
            acc *= s.theta;
          }
          return m;
        } else if constexpr (std::is_same_v<T, FiniteAtomic>) {
          double mass = 0.0;
          for (Index j = 0; j < s.dist.size(); ++j) {
            if (std::abs(s.dist.atoms(j)) <= a) mass += s.dist.weights(j);
          }
          if (!(mass > 0.0)) {
            throw std::invalid_argument("conditioned_moments: no atoms inside the window");
          }
          Eigen::VectorXd m = Eigen::VectorXd::Zero(count);
          for (Index j = 0; j < s.dist.size(); ++j) {
            if (std::abs(s.dist.atoms(j)) > a) continue;
            double acc = s.dist.weights(j) / mass;
            for (int l = 0; l < count; ++l) {
              m(l) += acc;
              acc *= s.dist.atoms(j);
            }
          }
          return m;
        } else if constexpr (std::is_same_v<T, GaussianMixing>) {
          const double alpha = (-a - s.mean) / s.sd;
          const double beta = (a - s.mean) / s.sd;
          const double z = normal_cdf(beta) - normal_cdf(alpha);
          if (!(z > 1e-300)) {
            throw std::invalid_argument("conditioned_moments: window mass underflows");
          }
          // Truncated-normal raw-moment recurrence.
          const double boundary_lo = normal_pdf(alpha);
          const double boundary_hi = normal_pdf(beta);
          Eigen::VectorXd m(std::max(count, 2));
          m(0) = 1.0;
          m(1) = s.mean + s.sd * (boundary_lo - boundary_hi) / z;
          for (int l = 2; l < m.size(); ++l) {
            const double edge =
                (std::pow(a, l - 1) * boundary_hi - std::pow(-a, l - 1) * boundary_lo) / s.sd;
            m(l) = s.mean * m(l - 1) + s.sd * s.sd * (l - 1) * m(l - 2) -
                   s.sd * s.sd * edge / z;
          }
          return m.head(count);
        } else if constexpr (std::is_same_v<T, UniformMixing>) {
          const double lo = std::max(-a, s.lo);
          const double hi = std::min(a, s.hi);
          if (!(lo < hi)) {
            throw std::invalid_argument("conditioned_moments: window misses the uniform support");
          }
          Eigen::VectorXd m(count);
          for (int l = 0; l < count; ++l) {
            m(l) = (std::pow(hi, l + 1) - std::pow(lo, l + 1)) / ((l + 1) * (hi - lo));
          }
          return m;
        } else {
          const double lo = std::max(-a, -s.a);
          const double hi = std::min(a, s.a);
          if (!(lo < hi)) throw std::invalid_argument("conditioned_moments: empty window");
          const double omega = s.omega0;
          return moments_by_quadrature([&](double x) { return 1.0 + std::sin(omega * x); }, lo, hi,
                                       count);
        }
      },
      spec);
}

double sinusoid_normalizer(double a, double omega0) {
  const int panels = std::max(8, static_cast<int>(std::ceil(a * omega0)));
  const double mass =
      integrate_panels([&](double x) { return 1.0 + std::sin(omega0 * x); }, -a, a, panels, 1e-13);
  return 1.0 / mass;
}

double sinusoid_gaussian_tail_term(double a, double omega0, double y) {
  auto integrand = [&](double x) { return std::sin(omega0 * x) * normal_pdf(y - x); };
  double acc = 0.0;
  const double reach = 9.0;
  if (y + reach > a) {
    const double hi = std::max(a, y + reach);
    acc += integrate_panels(integrand, a, hi, std::max(4, int((hi - a) * (1.0 + omega0))), 1e-16);
  }
  if (y - reach < -a) {
    const double lo = std::min(-a, y - reach);
    acc += integrate_panels(integrand, lo, -a, std::max(4, int((-a - lo) * (1.0 + omega0))), 1e-16);
  }
  return acc;
}

double sinusoid_gaussian_convolution_raw(double a, double omega0, double y) {
  const double base = normal_cdf(y + a) - normal_cdf(y - a);
  const double oscillation = std::exp(-0.5 * omega0 * omega0) * std::sin(omega0 * y);
  return base + oscillation - sinusoid_gaussian_tail_term(a, omega0, y);
}

std::function<double(double)> mixture_density_fn(const MixingSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::function<double(double)> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          const double theta = s.theta;
          return [theta](double x) { return normal_pdf(x - theta); };
        } else if constexpr (std::is_same_v<T, FiniteAtomic>) {
          const AtomicDistribution dist = s.dist;
          return [dist](double x) {
            double acc = 0.0;
            for (Index j = 0; j < dist.size(); ++j) {
              acc += dist.weights(j) * normal_pdf(x - dist.atoms(j));
            }
            return acc;
          };
        } else if constexpr (std::is_same_v<T, GaussianMixing>) {
          const double mean = s.mean;
          const double sd = std::sqrt(1.0 + s.sd * s.sd);
          return [mean, sd](double x) { return normal_pdf((x - mean) / sd) / sd; };
        } else if constexpr (std::is_same_v<T, UniformMixing>) {
          const double lo = s.lo, hi = s.hi;
          return [lo, hi](double x) {
            return (normal_cdf(x - lo) - normal_cdf(x - hi)) / (hi - lo);
          };
        } else {
          const double a = s.a, omega0 = s.omega0;
          const double c = sinusoid_normalizer(a, omega0);
          return [a, omega0, c](double x) {
            return c * sinusoid_gaussian_convolution_raw(a, omega0, x);
          };
        }
      },
      spec);
}

double mixture_density_support_radius(const MixingSpec& spec) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          return std::abs(s.theta) + 10.0;
        } else if constexpr (std::is_same_v<T, FiniteAtomic>) {
          return s.dist.atoms.cwiseAbs().maxCoeff() + 10.0;
        } else if constexpr (std::is_same_v<T, GaussianMixing>) {
          return std::abs(s.mean) + 10.0 * std::sqrt(1.0 + s.sd * s.sd);
        } else if constexpr (std::is_same_v<T, UniformMixing>) {
          return std::max(std::abs(s.lo), std::abs(s.hi)) + 10.0;
        } else {
          return s.a + 10.0;
        }
      },
      spec);
}

KAtomicApprox k_atomic_approximation(const MixingSpec& spec, double a, int k) {
  if (!(a > 0.0) || k < 1) throw std::invalid_argument("k_atomic_approximation: bad arguments");
  const Eigen::VectorXd moments = conditioned_moments(spec, a, 2 * k);
  const Interval support = conditioned_support(spec, a);
  const double lo = support.lo == support.hi ? support.lo - 1e-9 : support.lo;
  const double hi = support.lo == support.hi ? support.hi + 1e-9 : support.hi;
  const QuadratureResult qr = gauss_quadrature_from_moments(moments, lo, hi);

  KAtomicApprox out;
  out.distribution = qr.distribution;
  out.tv_bound = 2.0 * std::exp(-0.5 * a * a) +
                 2.0 * std::exp(0.25 * a * a) * std::pow(M_E * a * a / (2.0 * k), k);

  const double radius = std::max(mixture_density_support_radius(spec), a + 10.0);
  const auto p = mixture_density_fn(spec);
  const auto q = mixture_density_fn(FiniteAtomic{out.distribution});
  out.tv_measured = divergences(p, q, -radius, radius).total_variation;
  return out;
}

int statistical_degree(const MixingSpec& spec, const KernelFamily& kernel, Index n, int k_max) {
  if (kernel.id != KernelId::Gaussian) {
    throw std::invalid_argument("statistical_degree: gaussian kernel only");
  }
  if (n < 1 || k_max < 1) throw std::invalid_argument("statistical_degree: bad arguments");
  const double budget = 1.0 / (3.0 * std::sqrt(double(n)));
  const double a = std::sqrt(2.0 * std::log(6.0 * std::sqrt(double(n))));
  const double radius = std::max(mixture_density_support_radius(spec), a + 10.0);
  const auto p = mixture_density_fn(spec);
  for (int k = 1; k <= k_max; ++k) {
    const KAtomicApprox approx = k_atomic_approximation(spec, a, k);
    const auto q = mixture_density_fn(FiniteAtomic{approx.distribution});
    const double h = std::sqrt(divergences(p, q, -radius, radius).hellinger_sq);
    if (h <= budget) return k;
  }
  return k_max + 1;
}

}  // namespace npmix
