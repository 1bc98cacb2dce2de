#include "npmix/quadrature.hpp"

#include <map>
#include <mutex>

namespace npmix {

namespace {

void legendre_nodes_impl(int order, Eigen::VectorXd& x, Eigen::VectorXd& w) {
  x.resize(order);
  w.resize(order);
  const int half = (order + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev initial guess, then Newton on P_order.
    double z = std::cos(M_PI * (i + 0.75) / (order + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < order; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = order * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x(i) = -z;
    x(order - 1 - i) = z;
    w(i) = 2.0 / ((1.0 - z * z) * pp * pp);
    w(order - 1 - i) = w(i);
  }
}

struct GlRule {
  Eigen::VectorXd x, w;
};

const GlRule& gl_rule(int order) {
  static std::mutex mutex;
  static std::map<int, GlRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) {
    GlRule rule;
    legendre_nodes_impl(order, rule.x, rule.w);
    it = cache.emplace(order, std::move(rule)).first;
  }
  return it->second;
}

double gl_panel(const std::function<double(double)>& f, double lo, double hi, const GlRule& rule) {
  const double mid = 0.5 * (lo + hi);
  const double halfwidth = 0.5 * (hi - lo);
  double acc = 0.0;
  for (int i = 0; i < rule.x.size(); ++i) {
    acc += rule.w(i) * f(mid + halfwidth * rule.x(i));
  }
  return acc * halfwidth;
}

double adapt(const std::function<double(double)>& f, double lo, double hi, double whole,
             double tol, int depth, const GlRule& rule) {
  const double mid = 0.5 * (lo + hi);
  const double left = gl_panel(f, lo, mid, rule);
  const double right = gl_panel(f, mid, hi, rule);
  const double refined = left + right;
  if (depth <= 0 || std::abs(refined - whole) <= tol) return refined;
  return adapt(f, lo, mid, left, 0.5 * tol, depth - 1, rule) +
         adapt(f, mid, hi, right, 0.5 * tol, depth - 1, rule);
}

}  // namespace

void gauss_legendre(int order, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  const GlRule& rule = gl_rule(order);
  nodes = rule.x;
  weights = rule.w;
}

double integrate(const std::function<double(double)>& f, double lo, double hi, double abs_tol,
                 int max_depth) {
  if (!(hi > lo)) return 0.0;
  const GlRule& rule = gl_rule(15);
  const double whole = gl_panel(f, lo, hi, rule);
  return adapt(f, lo, hi, whole, abs_tol, max_depth, rule);
}

double integrate_panels(const std::function<double(double)>& f, double lo, double hi,
                        int initial_panels, double abs_tol, int max_depth) {
  if (!(hi > lo)) return 0.0;
  if (initial_panels < 1) initial_panels = 1;
  const double width = (hi - lo) / initial_panels;
  double acc = 0.0;
  for (int i = 0; i < initial_panels; ++i) {
    const double a = lo + i * width;
    const double b = (i + 1 == initial_panels) ? hi : lo + (i + 1) * width;
    acc += integrate(f, a, b, abs_tol / initial_panels, max_depth);
  }
  return acc;
}

}  // namespace npmix
