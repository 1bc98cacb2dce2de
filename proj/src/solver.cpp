#include "npmix/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <vector>

#include "npmix/quadrature.hpp"

namespace npmix {

namespace {

constexpr double kMonotoneSlack = 1e-13;

Eigen::VectorXd log_density_column(const KernelFamily& kernel, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& lfact, double theta) {
  switch (kernel.id) {
    case KernelId::Gaussian:
      return (-0.5 * (x.array() - theta).square() - kLogSqrt2Pi).matrix();
    case KernelId::Poisson:
      return (theta * x.array() - std::exp(theta) - lfact.array()).matrix();
    case KernelId::Exponential:
      return (std::log(theta) - theta * x.array()).matrix();
  }
  return {};
}

/// Shifted linear-space view of the current mixture: S = exp(logP - shift) with
/// row shifts, v = S*w, so log p_pi(x_i) = shift_i + log v_i and EM sweeps are
/// two matrix-vector products.
struct MixtureState {
  const KernelFamily& kernel;
  const Eigen::VectorXd& x;
  Eigen::VectorXd lfact;  // Poisson log-factorial cache (empty otherwise)

  std::vector<double> atoms;
  Eigen::VectorXd w;
  Eigen::MatrixXd logP;  // n x k
  Eigen::VectorXd shift;
  Eigen::MatrixXd S;
  Eigen::VectorXd v;

  MixtureState(const KernelFamily& k, const Eigen::VectorXd& obs) : kernel(k), x(obs) {
    if (kernel.id == KernelId::Poisson) {
      lfact.resize(x.size());
      for (Index i = 0; i < x.size(); ++i) lfact(i) = log_factorial(static_cast<long>(x(i)));
    }
  }

  Index n() const { return x.size(); }
  Index k() const { return static_cast<Index>(atoms.size()); }

  void set_atoms(const std::vector<double>& locations, const Eigen::VectorXd& weights) {
    atoms = locations;
    w = weights;
    logP.resize(x.size(), k());
    for (Index j = 0; j < k(); ++j) logP.col(j) = log_density_column(kernel, x, lfact, atoms[j]);
    shift = logP.rowwise().maxCoeff();
    S = (logP.colwise() - shift).array().exp();
    refresh_v();
  }

  void refresh_v() {
    v.noalias() = S * w;
    log_mix_cache.resize(0);
  }

  double log_likelihood() const { return (v.array().log() + shift.array()).mean(); }

  /// One multiplicative fixed-point sweep; returns the post-sweep likelihood.
  double em_sweep() {
    refresh_v();
    Eigen::VectorXd inv_v = v.cwiseInverse();
    Eigen::VectorXd ratio = (S.transpose() * inv_v) / static_cast<double>(n());
    w = w.cwiseProduct(ratio);
    refresh_v();
    return log_likelihood();
  }

  /// log p_pi(x_i) cache for gradient evaluations; refreshed lazily after
  /// weight changes.
  mutable Eigen::ArrayXd log_mix_cache;
  mutable Eigen::ArrayXd scratch;

  void refresh_gradient_cache() const { log_mix_cache = shift.array() + v.array().log(); }

  double gradient_at(double theta) const {
    if (log_mix_cache.size() != n()) refresh_gradient_cache();
    scratch = log_density_column(kernel, x, lfact, theta).array() - log_mix_cache;
    const double m = scratch.maxCoeff();
    return std::exp(m + std::log((scratch - m).exp().sum()) - std::log(double(n())));
  }

  /// Sign of D'(theta) (positive scalar factors dropped).
  double gradient_slope_sign(double theta) const {
    if (log_mix_cache.size() != n()) refresh_gradient_cache();
    scratch = log_density_column(kernel, x, lfact, theta).array() - log_mix_cache;
    const double m = scratch.maxCoeff();
    scratch = (scratch - m).exp();
    switch (kernel.id) {
      case KernelId::Gaussian:
        return (scratch * (x.array() - theta)).sum();
      case KernelId::Poisson:
        return (scratch * (x.array() - std::exp(theta))).sum();
      case KernelId::Exponential:
        return (scratch * (1.0 / theta - x.array())).sum();
    }
    return 0.0;
  }

  /// Inserts new support points with the line-search-optimal mass along
  /// (1-alpha) pi + alpha rho, rho uniform over the new atoms. Returns the
  /// likelihood gain.
  double insert_atoms(const std::vector<double>& thetas) {
    if (thetas.empty()) return 0.0;
    const double ll0 = log_likelihood();
    const int m = static_cast<int>(thetas.size());

    Eigen::MatrixXd cols(n(), m);
    for (int j = 0; j < m; ++j) cols.col(j) = log_density_column(kernel, x, lfact, thetas[j]);
    Eigen::VectorXd new_shift = shift.cwiseMax(cols.rowwise().maxCoeff());
    Eigen::ArrayXd rescale = (shift - new_shift).array().exp();
    S = S.array().colwise() * rescale;
    v = v.array() * rescale;
    shift = new_shift;
    Eigen::MatrixXd q_cols = (cols.colwise() - shift).array().exp();
    Eigen::VectorXd q = q_cols.rowwise().mean();

    // Concave 1-D problem; bisect on the derivative.
    auto slope = [&](double alpha) {
      return ((q - v).array() / ((1.0 - alpha) * v + alpha * q).array()).mean();
    };
    double alpha = 0.0;
    if (slope(0.0) > 0.0) {
      double lo = 0.0, hi = 1.0 - 1e-12;
      if (slope(hi) >= 0.0) {
        alpha = hi;
      } else {
        for (int iter = 0; iter < 64; ++iter) {
          const double mid = 0.5 * (lo + hi);
          (slope(mid) > 0.0 ? lo : hi) = mid;
        }
        alpha = 0.5 * (lo + hi);
      }
    }
    if (alpha == 0.0) return 0.0;

    const Index old_k = k();
    for (double theta : thetas) atoms.push_back(theta);
    logP.conservativeResize(Eigen::NoChange, k());
    logP.rightCols(m) = cols;
    S.conservativeResize(Eigen::NoChange, k());
    S.rightCols(m) = q_cols;
    w *= (1.0 - alpha);
    w.conservativeResize(k());
    w.tail(m).setConstant(alpha / m);
    (void)old_k;
    refresh_v();
    return log_likelihood() - ll0;
  }

  /// Drops columns with weight below threshold (or, when min_gradient > 0,
  /// atoms whose D sits below it: removing a D < 1 atom can only raise the
  /// likelihood) when the likelihood survives within the monotonicity slack.
  /// Returns the likelihood change.
  double guarded_prune(double threshold, double min_gradient = 0.0) {
    std::vector<Index> keep;
    for (Index j = 0; j < k(); ++j) {
      if (w(j) < threshold) continue;
      if (min_gradient > 0.0 && k() > 1 &&
          gradient_at(atoms[static_cast<std::size_t>(j)]) < min_gradient) {
        continue;
      }
      keep.push_back(j);
    }
    if (keep.empty() || static_cast<Index>(keep.size()) == k()) return 0.0;
    const double ll0 = log_likelihood();

    std::vector<double> kept_atoms;
    Eigen::VectorXd kept_w(static_cast<Index>(keep.size()));
    Eigen::MatrixXd kept_logP(n(), static_cast<Index>(keep.size()));
    for (std::size_t jj = 0; jj < keep.size(); ++jj) {
      kept_atoms.push_back(atoms[static_cast<std::size_t>(keep[jj])]);
      kept_w(static_cast<Index>(jj)) = w(keep[jj]);
      kept_logP.col(static_cast<Index>(jj)) = logP.col(keep[jj]);
    }
    kept_w /= kept_w.sum();

    Eigen::VectorXd kept_shift = kept_logP.rowwise().maxCoeff();
    Eigen::MatrixXd kept_S = (kept_logP.colwise() - kept_shift).array().exp();
    Eigen::VectorXd kept_v = kept_S * kept_w;
    const double ll1 = (kept_v.array().log() + kept_shift.array()).mean();
    if (ll1 - ll0 < -kMonotoneSlack) return 0.0;
    atoms = std::move(kept_atoms);
    w = std::move(kept_w);
    logP = std::move(kept_logP);
    shift = std::move(kept_shift);
    S = std::move(kept_S);
    v = std::move(kept_v);
    log_mix_cache.resize(0);
    return ll1 - ll0;
  }

  AtomicDistribution distribution() const {
    AtomicDistribution d;
    d.atoms = Eigen::Map<const Eigen::VectorXd>(atoms.data(), k());
    d.weights = w;
    return canonicalize(d, 0.0, 0.0);  // sort only
  }

  /// One joint EM sweep on weights and locations: responsibilities, then the
  /// closed-form location M-step (clamped to the window; the per-atom M-step
  /// objective is concave, so clamping keeps the step monotone). Moving all
  /// atoms together is what resolves the coupled flat directions that
  /// one-atom-at-a-time insertion cannot traverse. Returns the new
  /// likelihood.
  double em_joint_sweep(double window_lo, double window_hi) {
    refresh_v();
    // R_ij = w_j S_ij / v_i; column sums and weighted data means.
    Eigen::VectorXd inv_v = v.cwiseInverse();
    Eigen::VectorXd col_mass(k()), col_mean(k());
    for (Index j = 0; j < k(); ++j) {
      const double mass = S.col(j).dot(inv_v) * w(j);
      const double mean_num = (S.col(j).array() * inv_v.array() * x.array()).sum() * w(j);
      col_mass(j) = mass;
      col_mean(j) = mean_num / std::max(mass, 1e-300);
    }
    const double n_d = double(n());
    std::vector<double> new_atoms(atoms);
    for (Index j = 0; j < k(); ++j) {
      double theta = atoms[static_cast<std::size_t>(j)];
      switch (kernel.id) {
        case KernelId::Gaussian:
          theta = col_mean(j);
          break;
        case KernelId::Poisson:
          theta = std::log(std::max(col_mean(j), 1e-12));
          break;
        case KernelId::Exponential:
          theta = 1.0 / std::max(col_mean(j), 1e-300);
          break;
      }
      new_atoms[static_cast<std::size_t>(j)] = std::clamp(theta, window_lo, window_hi);
    }
    Eigen::VectorXd new_w = col_mass / n_d;
    new_w = new_w.cwiseMax(0.0);
    const double total = new_w.sum();
    if (total > 0.0) new_w /= total;
    set_atoms(new_atoms, new_w);
    return log_likelihood();
  }

  /// Joint-EM phase with squared-extrapolation acceleration: two EM sweeps
  /// give a secant direction, the extrapolated point is stabilized by one
  /// more sweep, and the plain two-sweep state is kept whenever
  /// extrapolation does not help. EM alone crawls along the coupled
  /// position-weight flat directions of overlapping components; the
  /// extrapolation removes that crawl while staying first-order and
  /// monotone. Returns the final likelihood.
  double em_accelerated_phase(double window_lo, double window_hi, int budget) {
    double ll = log_likelihood();
    const int cycles = std::max(1, budget / 3);
    for (int cycle = 0; cycle < cycles; ++cycle) {
      const std::vector<double> atoms0 = atoms;
      const Eigen::VectorXd w0 = w;
      em_joint_sweep(window_lo, window_hi);
      const std::vector<double> atoms1 = atoms;
      const Eigen::VectorXd w1 = w;
      const double ll2 = em_joint_sweep(window_lo, window_hi);
      const std::vector<double> atoms2 = atoms;
      const Eigen::VectorXd w2 = w;

      double r_norm = 0.0, v_norm = 0.0;
      for (std::size_t j = 0; j < atoms0.size(); ++j) {
        const double r = atoms1[j] - atoms0[j];
        const double vv = atoms2[j] - 2.0 * atoms1[j] + atoms0[j];
        r_norm += r * r;
        v_norm += vv * vv;
      }
      r_norm += (w1 - w0).squaredNorm();
      v_norm += (w2 - 2.0 * w1 + w0).squaredNorm();

      double ll_next = ll2;
      if (v_norm > 1e-30) {
        const double alpha = -std::sqrt(r_norm / v_norm);
        std::vector<double> atoms_x(atoms0.size());
        for (std::size_t j = 0; j < atoms0.size(); ++j) {
          const double r = atoms1[j] - atoms0[j];
          const double vv = atoms2[j] - 2.0 * atoms1[j] + atoms0[j];
          atoms_x[j] = std::clamp(atoms0[j] - 2.0 * alpha * r + alpha * alpha * vv, window_lo,
                                  window_hi);
        }
        Eigen::VectorXd w_x =
            (w0 - 2.0 * alpha * (w1 - w0) + alpha * alpha * (w2 - 2.0 * w1 + w0)).cwiseMax(0.0);
        const double total = w_x.sum();
        if (total > 1e-12) {
          w_x /= total;
          set_atoms(atoms_x, w_x);
          const double ll_x = em_joint_sweep(window_lo, window_hi);  // stabilize
          if (ll_x >= ll2) {
            ll_next = ll_x;
          } else {
            set_atoms(atoms2, w2);  // revert to the plain EM state
            ll_next = ll2;
          }
        }
      }
      if (ll_next - ll < 1e-13) return ll_next;
      ll = ll_next;
    }
    return ll;
  }

  /// One cyclic pass of exact pairwise mass transfers between adjacent atoms
  /// (1-D concave line searches). Multiplicative sweeps move mass between
  /// overlapping atoms at rate 1 + gap per sweep; the exchange step does it
  /// in one shot, which is what makes the outer loop converge at tight
  /// tolerances. Returns the likelihood gain.
  double exchange_sweep() {
    if (k() < 2) return 0.0;
    const double ll0 = log_likelihood();
    std::vector<Index> order(static_cast<std::size_t>(k()));
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<Index>(j);
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return atoms[a] < atoms[b]; });

    Eigen::VectorXd direction(n());
    for (std::size_t j = 0; j + 1 < order.size(); ++j) {
      const Index a = order[j], b = order[j + 1];
      if (w(a) <= 0.0 && w(b) <= 0.0) continue;
      direction = S.col(b) - S.col(a);  // d ll / dt with w_a -= t, w_b += t
      auto slope = [&](double t) {
        return (direction.array() / (v + t * direction).array()).mean();
      };
      double lo = -w(b), hi = w(a);
      double t;
      if (slope(lo) <= 0.0) {
        t = lo;
      } else if (slope(hi) >= 0.0) {
        t = hi;
      } else {
        for (int iter = 0; iter < 60; ++iter) {
          const double mid = 0.5 * (lo + hi);
          (slope(mid) > 0.0 ? lo : hi) = mid;
        }
        t = 0.5 * (lo + hi);
      }
      if (t != 0.0) {
        w(a) -= t;
        w(b) += t;
        v += t * direction;
      }
    }
    refresh_v();
    return log_likelihood() - ll0;
  }

  void take_fields(MixtureState& other) {
    atoms = std::move(other.atoms);
    w = std::move(other.w);
    logP = std::move(other.logP);
    shift = std::move(other.shift);
    S = std::move(other.S);
    v = std::move(other.v);
    log_mix_cache.resize(0);
  }

  /// Collapses atom clusters tighter than `radius` to their weight-averaged
  /// locations, then lets joint EM re-center the merged atoms; adopted only
  /// when the likelihood survives within the monotonicity slack. A cluster
  /// straddling one true atom recovers fully once the merged atom moves, so
  /// the guard accepts exactly the merges that do not destroy real support
  /// splits.
  double guarded_cluster_merge(double radius, double prune_threshold, int em_sweeps,
                               double window_lo, double window_hi) {
    AtomicDistribution current = distribution();
    AtomicDistribution merged = canonicalize(current, radius, prune_threshold);
    if (merged.size() == current.size()) return 0.0;
    const double ll0 = log_likelihood();

    MixtureState trial(kernel, x);
    trial.lfact = lfact;
    trial.set_atoms(std::vector<double>(merged.atoms.data(), merged.atoms.data() + merged.size()),
                    merged.weights);
    double ll1 = trial.log_likelihood();
    for (int sweep = 0; sweep < em_sweeps; ++sweep) {
      const double next = trial.em_joint_sweep(window_lo, window_hi);
      if (next - ll1 < 1e-13) {
        ll1 = next;
        break;
      }
      ll1 = next;
    }
    if (ll1 - ll0 < -kMonotoneSlack) return 0.0;
    take_fields(trial);
    return ll1 - ll0;
  }
};

struct ScanResult {
  double sup_D = -std::numeric_limits<double>::infinity();
  double argmax_theta = 0.0;
  std::vector<std::pair<double, double>> local_maxima;  // (theta, D)
};

/// Maximizes D over an even grid: local maxima refined by bisection on the
/// derivative sign (ternary fallback when the bracket slopes disagree).
/// Local maximizer of D inside [lo, hi]: derivative bisection when the
/// bracket slopes disagree, ternary search otherwise.
double refine_local_max(const MixtureState& state, double lo, double hi, double refine_tol) {
  const double sl = state.gradient_slope_sign(lo);
  const double sr = state.gradient_slope_sign(hi);
  if (sl > 0.0 && sr < 0.0) {
    while (hi - lo > refine_tol) {
      const double mid = 0.5 * (lo + hi);
      (state.gradient_slope_sign(mid) > 0.0 ? lo : hi) = mid;
    }
  } else {
    while (hi - lo > refine_tol) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      if (state.gradient_at(m1) < state.gradient_at(m2)) lo = m1; else hi = m2;
    }
  }
  return 0.5 * (lo + hi);
}

ScanResult scan_gradient(const MixtureState& state, double lo, double hi, int grid_size,
                         double refine_tol) {
  ScanResult result;
  grid_size = std::max(grid_size, 16);
  Eigen::VectorXd thetas(grid_size), values(grid_size);
  const double step = (hi - lo) / (grid_size - 1);
  for (int g = 0; g < grid_size; ++g) {
    thetas(g) = (g + 1 == grid_size) ? hi : lo + g * step;
    values(g) = state.gradient_at(thetas(g));
  }

  auto consider = [&](double theta, double value) {
    result.local_maxima.emplace_back(theta, value);
    if (value > result.sup_D) {
      result.sup_D = value;
      result.argmax_theta = theta;
    }
  };

  auto refine = [&](int j) {
    const double theta = refine_local_max(state, thetas(std::max(j - 1, 0)),
                                          thetas(std::min(j + 1, grid_size - 1)), refine_tol);
    consider(theta, state.gradient_at(theta));
  };

  for (int j = 0; j < grid_size; ++j) {
    const bool up = (j == 0) || values(j) >= values(j - 1);
    const bool down = (j + 1 == grid_size) || values(j) > values(j + 1);
    if (!(up && down)) continue;
    if (j == 0 || j + 1 == grid_size) {
      consider(thetas(j), values(j));  // window-edge maximizer; no bracket
    } else {
      refine(j);
    }
  }
  if (result.local_maxima.empty()) {
    int j;
    result.sup_D = values.maxCoeff(&j);
    result.argmax_theta = thetas(j);
    result.local_maxima.emplace_back(result.argmax_theta, result.sup_D);
  }
  return result;
}

}  // namespace

void SolveConfig::validate() const {
  if (grid_size < 16) throw std::invalid_argument("SolveConfig: grid_size must be >= 16");
  if (!(refine_tol > 0.0) || !(kkt_tol > 0.0) || !(prune_threshold > 0.0)) {
    throw std::invalid_argument("SolveConfig: tolerances must be > 0");
  }
  if (max_outer_iters < 1 || em_inner_iters < 1) {
    throw std::invalid_argument("SolveConfig: iteration caps must be >= 1");
  }
  if (theta_window && !(theta_window->first < theta_window->second)) {
    throw std::invalid_argument("SolveConfig: theta_window is degenerate");
  }
  if (merge_radius && !(*merge_radius > 0.0)) {
    throw std::invalid_argument("SolveConfig: merge_radius must be > 0");
  }
}

std::pair<double, double> default_theta_window(const KernelFamily& kernel, const Sample& sample,
                                               bool* clamped) {
  if (clamped) *clamped = false;
  double lo_x = sample.x_min();
  double hi_x = sample.x_max();
  if (kernel.id == KernelId::Poisson) {
    // Zero counts push the mean map to -inf; floor the mean instead and flag.
    const double floor_mean = 1e-6;
    if (lo_x < floor_mean) {
      lo_x = floor_mean;
      if (clamped) *clamped = true;
    }
    if (hi_x < floor_mean) hi_x = floor_mean;
  }
  double a = kernel.mean_inverse(lo_x);
  double b = kernel.mean_inverse(hi_x);
  if (a > b) std::swap(a, b);
  return {a, b};
}

double gradient_D(const KernelFamily& kernel, const AtomicDistribution& pi, const Sample& sample,
                  double theta) {
  kernel.require_in_domain(theta);
  if (pi.size() == 0) throw std::invalid_argument("gradient_D: empty mixing distribution");
  const Index n = sample.n();
  Eigen::ArrayXd t(n);
  for (Index i = 0; i < n; ++i) {
    t(i) = kernel.log_component_density(theta, sample.values(i)) -
           mixture_log_density(kernel, pi, sample.values(i));
  }
  const double m = t.maxCoeff();
  return std::exp(m + std::log((t - m).exp().sum()) - std::log(double(n)));
}

Eigen::VectorXd em_weight_update(const KernelFamily& kernel, const Eigen::VectorXd& atoms,
                                 const Eigen::VectorXd& weights, const Sample& sample) {
  if (atoms.size() != weights.size() || atoms.size() == 0) {
    throw std::invalid_argument("em_weight_update: bad atom/weight vectors");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-9 || weights.minCoeff() < 0.0) {
    throw std::invalid_argument("em_weight_update: weights are not a simplex point");
  }
  MixtureState state(kernel, sample.values);
  state.set_atoms(std::vector<double>(atoms.data(), atoms.data() + atoms.size()), weights);
  state.em_sweep();
  return state.w;
}

NPMLESolution solve_npmle(const KernelFamily& kernel, const Sample& sample,
                          const SolveConfig& config) {
  config.validate();
  for (Index i = 0; i < sample.n(); ++i) kernel.require_observation(sample.values(i));

  NPMLESolution sol;
  bool clamped = false;
  std::pair<double, double> window =
      config.theta_window ? *config.theta_window : default_theta_window(kernel, sample, &clamped);
  sol.window_clamped = clamped;

  // Degenerate data: point mass at the (possibly clamped) mean-map preimage.
  if (sample.x_min() == sample.x_max() || window.second - window.first < 1e-14) {
    const double theta = std::clamp(0.5 * (window.first + window.second), window.first, window.second);
    sol.pi_hat = AtomicDistribution::point_mass(theta);
    MixtureState state(kernel, sample.values);
    state.set_atoms({theta}, Eigen::VectorXd::Constant(1, 1.0));
    sol.log_likelihood = state.log_likelihood();
    const double pad = std::max(1.0, 0.5 * std::abs(theta));
    double lo = theta - pad, hi = theta + pad;
    if (!(lo > kernel.theta_lo)) lo = kernel.theta_lo + 0.25 * (theta - kernel.theta_lo);
    const ScanResult scan = scan_gradient(state, lo, hi, config.grid_size, config.refine_tol);
    sol.certificate = {scan.sup_D, scan.sup_D - 1.0, scan.argmax_theta, config.grid_size, false};
    sol.window = {theta, theta};
    sol.converged = true;
    sol.outer_iters = 0;
    return sol;
  }

  sol.window = window;
  const double width = window.second - window.first;
  const double merge_radius = config.merge_radius ? *config.merge_radius : 1e-6 * width;

  // Initial support: sample quantiles through the mean-map inverse.
  const Index n = sample.n();
  const int init_count = static_cast<int>(std::min<Index>(32, n));
  std::vector<double> init_atoms;
  const double interior = 1e-9 * width;
  for (int q = 0; q < init_count; ++q) {
    const Index i = std::min<Index>(n - 1, static_cast<Index>((q + 0.5) * double(n) / init_count));
    double xq = sample.values(i);
    double theta;
    if (kernel.id == KernelId::Poisson && xq <= 0.0) {
      theta = window.first;
    } else {
      theta = kernel.mean_inverse(xq);
    }
    theta = std::clamp(theta, window.first + interior, window.second - interior);
    if (init_atoms.empty() || theta - init_atoms.back() >= merge_radius) init_atoms.push_back(theta);
  }

  MixtureState state(kernel, sample.values);
  state.set_atoms(init_atoms,
                  Eigen::VectorXd::Constant(static_cast<Index>(init_atoms.size()),
                                            1.0 / double(init_atoms.size())));

  double ll = state.log_likelihood();
  double min_increment = 0.0;
  auto track = [&](double delta) { min_increment = std::min(min_increment, delta); };

  const int coarse_grid = std::max(128, config.grid_size / 8);
  const double grid_spacing = width / (config.grid_size - 1);
  const double skip_radius = std::max(merge_radius, 0.1 * grid_spacing);
  const double cluster_radius = std::max(merge_radius, 0.5 * grid_spacing);
  bool converged = false;
  ScanResult last_full_scan;
  bool have_full_scan = false;
  int outer = 0;

  for (outer = 1; outer <= config.max_outer_iters; ++outer) {
    // Support step: maximize D, insert the argmax and any other violating
    // local maximizers (simultaneous seeding avoids the one-bump-at-a-time
    // crawl of the pure vertex-direction scheme).
    ScanResult scan =
        scan_gradient(state, window.first, window.second, coarse_grid, config.refine_tol);
    if (scan.sup_D <= 1.0 + config.kkt_tol) {
      scan = scan_gradient(state, window.first, window.second, config.grid_size, config.refine_tol);
      last_full_scan = scan;
      have_full_scan = true;
      if (scan.sup_D <= 1.0 + config.kkt_tol) {
        // Also require the support condition: at an EM fixed point every
        // active atom has D = 1, so a lagging atom just means the weight
        // polish has not finished.
        double min_atom_D = 2.0;
        for (double atom : state.atoms) min_atom_D = std::min(min_atom_D, state.gradient_at(atom));
        if (min_atom_D >= 1.0 - 8.0 * config.kkt_tol) {
          converged = true;
          break;
        }
      }
    }

    std::vector<std::pair<double, double>> candidates = scan.local_maxima;  // (theta, D)
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<double> loci;
    for (const auto& [theta, value] : candidates) {
      if (value <= 1.0 + config.kkt_tol && !loci.empty()) break;
      double nearest = std::numeric_limits<double>::infinity();
      for (double other : loci) nearest = std::min(nearest, std::abs(other - theta));
      if (nearest >= skip_radius) loci.push_back(theta);
      if (loci.size() >= 12) break;
    }

    std::vector<double> inserts;
    for (double locus : loci) {
      double nearest = std::numeric_limits<double>::infinity();
      for (double atom : state.atoms) nearest = std::min(nearest, std::abs(atom - locus));
      for (double other : inserts) nearest = std::min(nearest, std::abs(other - locus));
      if (nearest >= skip_radius) inserts.push_back(locus);
    }
    if (!inserts.empty()) {
      track(state.insert_atoms(inserts));
      ll = state.log_likelihood();
    }

    // Weight-and-location step: accelerated joint EM until stagnation.
    {
      const double next =
          state.em_accelerated_phase(window.first, window.second, config.em_inner_iters);
      track(next - ll);  // monotone by construction; tracked for the diagnostic
      ll = next;
    }
    for (int pass = 0; pass < 2; ++pass) {
      const double gain = state.exchange_sweep();
      track(gain);
      ll = state.log_likelihood();
      if (gain < 1e-13) break;
    }

    // Consolidation: coarse-to-fine merge ladder (merged atoms re-center
    // during the trial, so the guard only rejects genuine support splits),
    // then prune drained atoms and atoms whose D fell below the support
    // condition.
    for (double factor : {64.0, 16.0, 4.0, 1.0}) {
      const double radius = std::min(factor * cluster_radius, 0.125 * width);
      track(state.guarded_cluster_merge(radius, config.prune_threshold, config.em_inner_iters,
                                        window.first, window.second));
    }
    track(state.guarded_prune(config.prune_threshold, 1.0 - 5.0 * config.kkt_tol));
    ll = state.log_likelihood();

    if (!std::isfinite(ll)) {
      throw std::runtime_error("solve_npmle: likelihood became non-finite at outer iteration " +
                               std::to_string(outer) + " with " + std::to_string(state.k()) +
                               " atoms");
    }
    if (std::getenv("NPMIX_TRACE")) {
      std::fprintf(stderr, "outer=%d k=%d supD-1=%.3e ll=%.12f argmax=%.6f loci=%zu\n", outer,
                   int(state.k()), scan.sup_D - 1.0, ll, scan.argmax_theta, loci.size());
    }
  }

  if (!have_full_scan) {
    last_full_scan =
        scan_gradient(state, window.first, window.second, config.grid_size, config.refine_tol);
  }

  // Final canonicalization, guarded by the likelihood.
  AtomicDistribution result = state.distribution();
  AtomicDistribution merged = canonicalize(result, merge_radius, config.prune_threshold);
  if (merged.size() != result.size()) {
    MixtureState trial(kernel, sample.values);
    trial.set_atoms(std::vector<double>(merged.atoms.data(), merged.atoms.data() + merged.size()),
                    merged.weights);
    const double ll_merged = trial.log_likelihood();
    if (ll_merged - ll >= -kMonotoneSlack) {
      result = merged;
      track(ll_merged - ll);
      ll = ll_merged;
    }
  }

  sol.pi_hat = result;
  sol.log_likelihood = ll;
  sol.outer_iters = outer;
  sol.converged = converged;
  sol.min_ll_increment = min_increment;
  sol.certificate = {last_full_scan.sup_D, last_full_scan.sup_D - 1.0, last_full_scan.argmax_theta,
                     config.grid_size, false};
  return sol;
}

OptimalityCertificate certify(const KernelFamily& kernel, const AtomicDistribution& pi,
                              const Sample& sample, int grid_size, double kkt_tol) {
  pi.validate();
  MixtureState state(kernel, sample.values);
  state.set_atoms(std::vector<double>(pi.atoms.data(), pi.atoms.data() + pi.size()), pi.weights);

  bool clamped = false;
  auto window = default_theta_window(kernel, sample, &clamped);
  double lo = std::min(window.first, pi.atoms.minCoeff());
  double hi = std::max(window.second, pi.atoms.maxCoeff());
  if (hi - lo < 1e-12) {
    const double pad = std::max(1.0, 0.5 * std::abs(lo));
    hi += pad;
    lo = kernel.id == KernelId::Exponential ? std::max(lo * 0.25, lo - pad) : lo - pad;
  }
  const ScanResult scan = scan_gradient(state, lo, hi, grid_size, 1e-9);

  OptimalityCertificate cert{scan.sup_D, scan.sup_D - 1.0, scan.argmax_theta, grid_size, false};
  for (Index j = 0; j < pi.size(); ++j) {
    if (state.gradient_at(pi.atoms(j)) < 1.0 - 10.0 * kkt_tol) cert.support_violation = true;
  }
  return cert;
}

}  // namespace npmix
