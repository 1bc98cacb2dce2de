#pragma once

#include <optional>
#include <utility>

#include "npmix/measures.hpp"

namespace npmix {

struct SolveConfig {
  /// Candidate-atom interval. Defaults to [mu^-1(x_min), mu^-1(x_max)]
  /// (endpoints sorted; Poisson means are floored at 1e-6 when the sample
  /// contains zeros). Shrinking it yields the support-constrained NPMLE.
  std::optional<std::pair<double, double>> theta_window;
  int grid_size = 4096;
  double refine_tol = 1e-9;
  double kkt_tol = 1e-6;
  int max_outer_iters = 500;
  int em_inner_iters = 100;
  /// Defaults to 1e-6 * window width.
  std::optional<double> merge_radius;
  double prune_threshold = 1e-10;

  void validate() const;
};

struct OptimalityCertificate {
  double sup_D = 0.0;
  double gap_bound = 0.0;  // sup_D - 1, per-observation log-likelihood slack
  double argmax_theta = 0.0;
  int grid_size_used = 0;
  bool support_violation = false;  // some atom has D(atom) < 1 - 10*kkt_tol
};

struct NPMLESolution {
  AtomicDistribution pi_hat;
  double log_likelihood = 0.0;  // per-observation, nats
  OptimalityCertificate certificate;
  int outer_iters = 0;
  bool converged = false;
  std::pair<double, double> window{0.0, 0.0};
  bool window_clamped = false;  // window edge substituted for an unbounded mean map
  /// Most negative per-observation log-likelihood step seen across all outer
  /// and inner iterations (monotonicity diagnostic; >= -1e-12 expected).
  double min_ll_increment = 0.0;
};

/// Gradient function D_pi(theta) = (1/n) sum_i p_theta(x_i) / p_pi(x_i).
double gradient_D(const KernelFamily& kernel, const AtomicDistribution& pi, const Sample& sample,
                  double theta);

/// One multiplicative fixed-point sweep for the convex weight subproblem:
/// w_j <- w_j * (1/n) sum_i p_{theta_j}(x_i) / p_pi(x_i).
Eigen::VectorXd em_weight_update(const KernelFamily& kernel, const Eigen::VectorXd& atoms,
                                 const Eigen::VectorXd& weights, const Sample& sample);

std::pair<double, double> default_theta_window(const KernelFamily& kernel, const Sample& sample,
                                               bool* clamped = nullptr);

NPMLESolution solve_npmle(const KernelFamily& kernel, const Sample& sample,
                          const SolveConfig& config = {});

/// Certificate over a freshly refined grid. Also checks the support condition
/// D(atom) >= 1 - 10*kkt_tol for every atom of pi.
OptimalityCertificate certify(const KernelFamily& kernel, const AtomicDistribution& pi,
                              const Sample& sample, int grid_size, double kkt_tol = 1e-6);

}  // namespace npmix
