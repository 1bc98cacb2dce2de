#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <variant>

#include "npmix/kernels.hpp"
#include "npmix/rng.hpp"

#include <json.hpp>

namespace npmix {

using Eigen::Index;

/// Finitely supported mixing distribution: strictly increasing atoms with
/// positive weights summing to one.
struct AtomicDistribution {
  Eigen::VectorXd atoms;
  Eigen::VectorXd weights;

  Index size() const { return atoms.size(); }

  static AtomicDistribution point_mass(double theta);

  /// Throws std::invalid_argument if the invariants fail (tolerance 1e-12 on
  /// the weight sum).
  void validate() const;
};

/// Sorts atoms, merges clusters closer than merge_radius at their
/// weight-averaged location, drops weights below prune_threshold and
/// renormalizes. Returns the input bitwise-unchanged when nothing merges or
/// prunes, so the map is idempotent.
AtomicDistribution canonicalize(const AtomicDistribution& dist, double merge_radius,
                                double prune_threshold = 1e-12);

/// Sorted observation vector with cached extremes.
struct Sample {
  Eigen::VectorXd values;  // ascending

  static Sample from_values(Eigen::VectorXd values);

  Index n() const { return values.size(); }
  double x_min() const { return values(0); }
  double x_max() const { return values(values.size() - 1); }
};

// ---- True mixing distributions used for data generation ----

struct PointMass {
  double theta = 0.0;
};
struct FiniteAtomic {
  AtomicDistribution dist;
};
struct GaussianMixing {
  double mean = 0.0;
  double sd = 1.0;
};
struct UniformMixing {
  double lo = 0.0;
  double hi = 1.0;
};
/// Density c*(1 + sin(omega0*x)) on [-a, a].
struct SinusoidMixing {
  double a = 1.0;
  double omega0 = 1.0;
};

using MixingSpec = std::variant<PointMass, FiniteAtomic, GaussianMixing, UniformMixing, SinusoidMixing>;

/// Parses "point:theta=0", "atomic:atoms=1|2,weights=0.5|0.5",
/// "gaussian:mean=0,sd=1", "uniform:lo=-1,hi=1", "sinusoid:a=20,omega=5".
MixingSpec mixing_spec_from_string(const std::string& text);
std::string mixing_spec_to_string(const MixingSpec& spec);

/// log p_pi(x) = log sum_j w_j p_{theta_j}(x), max-shifted.
double mixture_log_density(const KernelFamily& kernel, const AtomicDistribution& pi, double x);

/// One draw of theta from the spec.
double sample_theta(const MixingSpec& spec, CounterRng& rng);

/// n iid draws: theta_i from the spec, then x_i from p_{theta_i}. Deterministic
/// given (seed); returned sorted.
Sample sample_mixture(const KernelFamily& kernel, const MixingSpec& spec, Index n, std::uint64_t seed);

// ---- Serialization ----

void write_sample_text(const Sample& sample, std::ostream& os);
void write_sample_csv(const Sample& sample, std::ostream& os);
/// Accepts both the bare-text and the "x"-headed CSV forms.
Sample read_sample(std::istream& is);

void write_atoms_csv(const AtomicDistribution& dist, std::ostream& os);
AtomicDistribution read_atoms_csv(std::istream& is);
nlohmann::json atoms_to_json(const AtomicDistribution& dist);
AtomicDistribution atoms_from_json(const nlohmann::json& j);

/// 17-significant-digit decimal form; round-trips doubles exactly.
std::string format_double(double value);

}  // namespace npmix
