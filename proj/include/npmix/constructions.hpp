#pragma once

#include <stdexcept>
#include <vector>

#include "npmix/analysis.hpp"

#include <json.hpp>

namespace npmix {

class ConstructionRejected : public std::runtime_error {
public:
  ConstructionRejected(const std::string& what, double lhs, double rhs)
      : std::runtime_error(what), condition_lhs(lhs), condition_rhs(rhs) {}
  double condition_lhs, condition_rhs;
};

/// The sinusoid-modulated mixing density c*(1 + sin(omega0 x)) on [-a, a],
/// together with the acceptance condition |h_hat(omega0)| > 2(H(-a/2) + 1 - H(a/2))
/// for the Gaussian smoothing kernel h = phi.
struct SinusoidConstruction {
  double a = 0.0;
  double omega0 = 0.0;
  double c = 0.0;               // normalizer, computed by quadrature
  double condition_lhs = 0.0;   // e^{-omega0^2/2}
  double condition_rhs = 0.0;   // 4 Phi(-a/2)
  int guaranteed_modes = 0;     // floor(omega0 * a / (2 pi))
  bool accepted = false;

  nlohmann::json to_json() const;
};

/// Evaluates the condition without throwing.
SinusoidConstruction try_build_sinusoid(double a, double omega0);

/// Throws ConstructionRejected (reporting both sides) when the condition fails.
SinusoidConstruction build_sinusoid(double a, double omega0);

/// (pi * phi)(y) for the construction's density, evaluated through the exact
/// split  c*[Phi(y+a) - Phi(y-a)] + c*[e^{-omega0^2/2} sin(omega0 y) - E(y)]
/// where E is the tail correction; the oscillatory amplitude enters exactly
/// once, keeping the wiggles noise-free even at amplitudes near 1e-13.
double sinusoid_convolution_density(const SinusoidConstruction& cons, double y);

/// Truncation gap Delta(y) = (pi0*phi - pi1*phi)(y) on the unnormalized scale,
/// where pi0 = 1 + sin(omega0 x) untruncated and pi1 its restriction to [-a,a].
double sinusoid_truncation_gap(const SinusoidConstruction& cons, double y);

struct ModeVerification {
  int counted = 0;
  bool satisfied = false;  // counted >= guaranteed_modes
  CriticalPointReport report;
};

/// Counts modes of pi*phi on [-a/2, a/2].
ModeVerification verify_sinusoid_modes(const SinusoidConstruction& cons, int grid_size);

struct LogConcavePiece {
  double weight = 0.0;      // alpha_i = pi(I_i)
  double lo = 0.0, hi = 0.0;
  /// min over the verification grid of -(ln f_i)''.
  double min_strong_concavity = 0.0;
};

struct LogConcaveDecomposition {
  SinusoidConstruction base;     // omega0 = a/4 sinusoid construction
  std::vector<LogConcavePiece> pieces;
  int piece_count = 0;           // k = 4a
  double min_margin = 0.0;       // min over pieces of min_strong_concavity
  double max_recombine_error = 0.0;
  double max_normalization_error = 0.0;
  int modes_counted = 0;
  int dropped_pieces = 0;
  bool verified = false;

  nlohmann::json to_json() const;
};

/// Splits [-a, a] into k = 4a intervals, forms f_i = (conditional pi on I_i) * phi,
/// and verifies strong log-concavity of every piece, pointwise recombination
/// to pi*phi, and the mode count of the sum. 4a must be a positive integer.
LogConcaveDecomposition logconcave_decomposition(double a, int mode_grid_size = 16384);

/// f_i evaluation for one piece (normalized conditional density convolved
/// with phi).
double logconcave_piece_density(const SinusoidConstruction& cons, const LogConcavePiece& piece,
                                double y);

}  // namespace npmix
