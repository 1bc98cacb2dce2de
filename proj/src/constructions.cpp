#include "npmix/constructions.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "npmix/quadrature.hpp"

namespace npmix {

nlohmann::json SinusoidConstruction::to_json() const {
  return nlohmann::json{{"a", a},
                        {"omega0", omega0},
                        {"normalizer", c},
                        {"condition_lhs", condition_lhs},
                        {"condition_rhs", condition_rhs},
                        {"guaranteed_modes", guaranteed_modes},
                        {"accepted", accepted}};
}

SinusoidConstruction try_build_sinusoid(double a, double omega0) {
  if (!(a > 0.0) || !(omega0 > 0.0)) {
    throw std::invalid_argument("build_sinusoid: a and omega0 must be > 0");
  }
  SinusoidConstruction cons;
  cons.a = a;
  cons.omega0 = omega0;
  cons.c = sinusoid_normalizer(a, omega0);
  cons.condition_lhs = std::exp(-0.5 * omega0 * omega0);  // |phi_hat(omega0)|
  cons.condition_rhs = 2.0 * (normal_cdf(-0.5 * a) + 1.0 - normal_cdf(0.5 * a));
  cons.guaranteed_modes = static_cast<int>(std::floor(omega0 * a / (2.0 * M_PI)));
  cons.accepted = cons.condition_lhs > cons.condition_rhs;
  return cons;
}

SinusoidConstruction build_sinusoid(double a, double omega0) {
  SinusoidConstruction cons = try_build_sinusoid(a, omega0);
  if (!cons.accepted) {
    throw ConstructionRejected(
        "sinusoid construction rejected: |h_hat(omega0)| = " + format_double(cons.condition_lhs) +
            " does not exceed the tail term " + format_double(cons.condition_rhs),
        cons.condition_lhs, cons.condition_rhs);
  }
  return cons;
}

double sinusoid_convolution_density(const SinusoidConstruction& cons, double y) {
  return cons.c * sinusoid_gaussian_convolution_raw(cons.a, cons.omega0, y);
}

double sinusoid_truncation_gap(const SinusoidConstruction& cons, double y) {
  // pi0*phi = 1 + h_hat * sin; the truncated version subtracts the base
  // tails and adds back the tail oscillation term.
  const double base = normal_cdf(y + cons.a) - normal_cdf(y - cons.a);
  return (1.0 - base) + sinusoid_gaussian_tail_term(cons.a, cons.omega0, y);
}

ModeVerification verify_sinusoid_modes(const SinusoidConstruction& cons, int grid_size) {
  if (!cons.accepted) throw std::invalid_argument("verify_sinusoid_modes: construction was rejected");
  ModeVerification out;
  out.report = count_density_modes([&](double y) { return sinusoid_convolution_density(cons, y); },
                                   -0.5 * cons.a, 0.5 * cons.a, grid_size);
  out.counted = out.report.count;
  out.satisfied = out.counted >= cons.guaranteed_modes;
  return out;
}

nlohmann::json LogConcaveDecomposition::to_json() const {
  nlohmann::json pieces_json = nlohmann::json::array();
  for (const auto& piece : pieces) {
    pieces_json.push_back(nlohmann::json{{"weight", piece.weight},
                                         {"lo", piece.lo},
                                         {"hi", piece.hi},
                                         {"min_strong_concavity", piece.min_strong_concavity}});
  }
  return nlohmann::json{{"base", base.to_json()},
                        {"piece_count", piece_count},
                        {"pieces", pieces_json},
                        {"min_margin", min_margin},
                        {"max_recombine_error", max_recombine_error},
                        {"max_normalization_error", max_normalization_error},
                        {"modes_counted", modes_counted},
                        {"verified", verified}};
}

double logconcave_piece_density(const SinusoidConstruction& cons, const LogConcavePiece& piece,
                                double y) {
  const double omega0 = cons.omega0;
  const int panels = std::max(4, static_cast<int>(std::ceil((piece.hi - piece.lo) * (2.0 + omega0))));
  const double raw = integrate_panels(
      [&](double x) { return (1.0 + std::sin(omega0 * x)) * normal_pdf(y - x); }, piece.lo,
      piece.hi, panels, 1e-18);
  return cons.c * raw / piece.weight;
}

LogConcaveDecomposition logconcave_decomposition(double a, int mode_grid_size) {
  const double k_real = 4.0 * a;
  const int k = static_cast<int>(std::lround(k_real));
  if (k < 1 || std::abs(k_real - k) > 1e-9) {
    throw std::invalid_argument("logconcave_decomposition: 4a must be a positive integer");
  }

  LogConcaveDecomposition dec;
  dec.base = build_sinusoid(a, 0.25 * a);
  dec.piece_count = k;
  const double omega0 = dec.base.omega0;
  const double width = 2.0 * a / k;  // 1/2

  double weight_sum = 0.0;
  for (int i = 0; i < k; ++i) {
    LogConcavePiece piece;
    piece.lo = -a + i * width;
    piece.hi = (i + 1 == k) ? a : -a + (i + 1) * width;
    const int panels = std::max(4, static_cast<int>(std::ceil(width * (2.0 + omega0))));
    piece.weight = dec.base.c *
                   integrate_panels([&](double x) { return 1.0 + std::sin(omega0 * x); }, piece.lo,
                                    piece.hi, panels, 1e-16);
    if (!(piece.weight > 0.0)) {
      ++dec.dropped_pieces;
      continue;
    }
    weight_sum += piece.weight;
    dec.pieces.push_back(piece);
  }
  (void)weight_sum;

  // Strong log-concavity of each piece by central differences on ln f_i.
  const double h = 1e-4;
  dec.min_margin = std::numeric_limits<double>::infinity();
  double max_norm_err = 0.0;
  for (auto& piece : dec.pieces) {
    const double mid = 0.5 * (piece.lo + piece.hi);
    double min_conc = std::numeric_limits<double>::infinity();
    for (int g = 0; g <= 60; ++g) {
      const double y = mid - 6.0 + 12.0 * g / 60.0;
      const double f0 = logconcave_piece_density(dec.base, piece, y);
      const double fp = logconcave_piece_density(dec.base, piece, y + h);
      const double fm = logconcave_piece_density(dec.base, piece, y - h);
      const double second = (std::log(fp) - 2.0 * std::log(f0) + std::log(fm)) / (h * h);
      min_conc = std::min(min_conc, -second);
    }
    piece.min_strong_concavity = min_conc;
    dec.min_margin = std::min(dec.min_margin, min_conc);

    const double mass = integrate(
        [&](double y) { return logconcave_piece_density(dec.base, piece, y); }, piece.lo - 10.0,
        piece.hi + 10.0, 1e-11);
    max_norm_err = std::max(max_norm_err, std::abs(mass - 1.0));
  }
  dec.max_normalization_error = max_norm_err;

  // Pointwise recombination against the direct convolution.
  double max_err = 0.0;
  for (int g = 0; g <= 200; ++g) {
    const double y = -a - 2.0 + (2.0 * a + 4.0) * g / 200.0;
    double sum = 0.0;
    for (const auto& piece : dec.pieces) {
      sum += piece.weight * logconcave_piece_density(dec.base, piece, y);
    }
    max_err = std::max(max_err, std::abs(sum - sinusoid_convolution_density(dec.base, y)));
  }
  dec.max_recombine_error = max_err;

  dec.modes_counted =
      verify_sinusoid_modes(dec.base, mode_grid_size).counted;

  dec.verified = dec.min_margin >= 0.7 && dec.max_recombine_error <= 1e-10 &&
                 dec.modes_counted >= dec.base.guaranteed_modes && dec.dropped_pieces == 0;
  return dec;
}

}  // namespace npmix
