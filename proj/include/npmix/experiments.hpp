#pragma once

#include <string>
#include <vector>

#include "npmix/solver.hpp"

#include <json.hpp>

namespace npmix {

struct ExperimentConfig {
  std::string name = "scaling";  // scaling | risk | exponential_probe
  std::string kernel = "gaussian";
  MixingSpec mixing = GaussianMixing{0.0, 1.0};
  std::vector<Index> n_list;
  int replicates = 1;
  std::uint64_t base_seed = 1;
  SolveConfig solver;
  /// For exponential_probe: upper edge of the constrained window.
  double constrained_theta_hi = 4.0;
  std::string output_prefix;  // empty = no files written
  bool plot = false;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ExperimentRecord {
  Index n = 0;
  int replicate = 0;
  int atom_count = 0;
  double log_likelihood = 0.0;
  double gap_bound = 0.0;
  double x_range = 0.0;
  double bound_value = 0.0;   // deterministic atom-count bound for the row
  double h2_to_truth = -1.0;  // -1 when no truth density is available
  bool converged = false;
  int constrained_atom_count = -1;  // exponential probe only
  double wall_time = 0.0;           // seconds; excluded from CSV output
};

struct ExperimentTable {
  ExperimentConfig config;
  std::vector<ExperimentRecord> rows;  // ordered by (n, replicate)
  nlohmann::json summary;

  /// Deterministic CSV (wall_time excluded so reruns are byte-identical).
  std::string to_csv() const;
};

/// Atom counts and bounds across n (scaling of the estimator's support size).
ExperimentTable run_scaling(const ExperimentConfig& config);

/// Squared Hellinger distance between the fitted and true mixture densities.
ExperimentTable run_risk(const ExperimentConfig& config);

/// Exponential-kernel probe: unconstrained vs window-constrained fits.
ExperimentTable run_exponential_probe(const ExperimentConfig& config);

/// Dispatch on config.name; writes <prefix>.csv / <prefix>_summary.json
/// (and SVG plots with plot=true) when output_prefix is set.
ExperimentTable run_experiment(const ExperimentConfig& config);

/// Minimal SVG line chart; series are (x, y) pairs with a label each.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                           bool log_x = false, bool log_y = false);

}  // namespace npmix
