#include "npmix/measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace npmix {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

AtomicDistribution AtomicDistribution::point_mass(double theta) {
  AtomicDistribution d;
  d.atoms = Eigen::VectorXd::Constant(1, theta);
  d.weights = Eigen::VectorXd::Constant(1, 1.0);
  return d;
}

void AtomicDistribution::validate() const {
  if (atoms.size() == 0) throw std::invalid_argument("AtomicDistribution: no atoms");
  if (atoms.size() != weights.size()) {
    throw std::invalid_argument("AtomicDistribution: atoms/weights length mismatch");
  }
  for (Index j = 0; j < atoms.size(); ++j) {
    if (!(weights(j) > 0.0)) throw std::invalid_argument("AtomicDistribution: nonpositive weight");
    if (j > 0 && !(atoms(j) > atoms(j - 1))) {
      throw std::invalid_argument("AtomicDistribution: atoms not strictly increasing");
    }
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("AtomicDistribution: weights sum to " + format_double(weights.sum()));
  }
}

AtomicDistribution canonicalize(const AtomicDistribution& dist, double merge_radius,
                                double prune_threshold) {
  if (dist.atoms.size() == 0) throw std::invalid_argument("canonicalize: empty distribution");

  std::vector<Index> order(static_cast<std::size_t>(dist.atoms.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Index>(i);
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return dist.atoms(a) < dist.atoms(b); });
  const bool already_sorted = std::is_sorted(order.begin(), order.end());

  std::vector<double> atoms, weights;
  atoms.reserve(order.size());
  weights.reserve(order.size());
  for (Index idx : order) {
    atoms.push_back(dist.atoms(idx));
    weights.push_back(dist.weights(idx));
  }

  // Merge passes until stable, so a second canonicalize is a no-op.
  bool merged_any = false;
  bool merged = true;
  while (merged) {
    merged = false;
    std::vector<double> na, nw;
    na.push_back(atoms[0]);
    nw.push_back(weights[0]);
    for (std::size_t j = 1; j < atoms.size(); ++j) {
      if (atoms[j] - na.back() < merge_radius) {
        const double w = nw.back() + weights[j];
        na.back() = (na.back() * nw.back() + atoms[j] * weights[j]) / w;
        nw.back() = w;
        merged = true;
        merged_any = true;
      } else {
        na.push_back(atoms[j]);
        nw.push_back(weights[j]);
      }
    }
    atoms.swap(na);
    weights.swap(nw);
  }

  std::vector<double> fa, fw;
  for (std::size_t j = 0; j < atoms.size(); ++j) {
    if (weights[j] >= prune_threshold) {
      fa.push_back(atoms[j]);
      fw.push_back(weights[j]);
    }
  }
  if (fa.empty()) {
    // Keep the heaviest atom rather than returning an empty measure.
    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(weights.begin(), weights.end()) - weights.begin());
    fa.push_back(atoms[arg]);
    fw.push_back(weights[arg]);
  }
  const bool pruned_any = fa.size() != atoms.size();

  if (!merged_any && !pruned_any && already_sorted) return dist;

  AtomicDistribution out;
  out.atoms = Eigen::Map<Eigen::VectorXd>(fa.data(), static_cast<Index>(fa.size()));
  out.weights = Eigen::Map<Eigen::VectorXd>(fw.data(), static_cast<Index>(fw.size()));
  out.weights /= out.weights.sum();
  return out;
}

Sample Sample::from_values(Eigen::VectorXd values) {
  if (values.size() == 0) throw std::invalid_argument("Sample: empty");
  std::sort(values.data(), values.data() + values.size());
  Sample s;
  s.values = std::move(values);
  return s;
}

double mixture_log_density(const KernelFamily& kernel, const AtomicDistribution& pi, double x) {
  if (pi.atoms.size() == 0) throw std::invalid_argument("mixture_log_density: empty mixing distribution");
  double best = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd terms(pi.atoms.size());
  for (Index j = 0; j < pi.atoms.size(); ++j) {
    terms(j) = std::log(pi.weights(j)) + kernel.log_component_density(pi.atoms(j), x);
    best = std::max(best, terms(j));
  }
  if (!std::isfinite(best)) return best;
  double acc = 0.0;
  for (Index j = 0; j < terms.size(); ++j) acc += std::exp(terms(j) - best);
  return best + std::log(acc);
}

double sample_theta(const MixingSpec& spec, CounterRng& rng) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          return s.theta;
        } else if constexpr (std::is_same_v<T, FiniteAtomic>) {
          const double u = rng.next_double();
          double acc = 0.0;
          for (Index j = 0; j < s.dist.size(); ++j) {
            acc += s.dist.weights(j);
            if (u < acc) return s.dist.atoms(j);
          }
          return s.dist.atoms(s.dist.size() - 1);
        } else if constexpr (std::is_same_v<T, GaussianMixing>) {
          return s.mean + s.sd * rng.next_gaussian();
        } else if constexpr (std::is_same_v<T, UniformMixing>) {
          return s.lo + (s.hi - s.lo) * rng.next_double();
        } else {
          // Rejection against the uniform envelope; acceptance (1+sin)/2 <= 1.
          for (;;) {
            const double x = -s.a + 2.0 * s.a * rng.next_double();
            if (rng.next_double() < 0.5 * (1.0 + std::sin(s.omega0 * x))) return x;
          }
        }
      },
      spec);
}

namespace {

void validate_spec(const MixingSpec& spec) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, FiniteAtomic>) {
          s.dist.validate();
        } else if constexpr (std::is_same_v<T, GaussianMixing>) {
          if (!(s.sd > 0.0)) throw std::invalid_argument("gaussian mixing: sd must be > 0");
        } else if constexpr (std::is_same_v<T, UniformMixing>) {
          if (!(s.lo < s.hi)) throw std::invalid_argument("uniform mixing: lo must be < hi");
        } else if constexpr (std::is_same_v<T, SinusoidMixing>) {
          if (!(s.a > 0.0) || !(s.omega0 > 0.0)) {
            throw std::invalid_argument("sinusoid mixing: a and omega0 must be > 0");
          }
        }
      },
      spec);
}

}  // namespace

Sample sample_mixture(const KernelFamily& kernel, const MixingSpec& spec, Index n,
                      std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_mixture: n must be >= 1");
  validate_spec(spec);
  if (std::holds_alternative<SinusoidMixing>(spec) && kernel.id != KernelId::Gaussian) {
    throw std::invalid_argument("sinusoid mixing spec is only supported with the gaussian kernel");
  }
  CounterRng rng(seed);
  Eigen::VectorXd values(n);
  for (Index i = 0; i < n; ++i) {
    const double theta = sample_theta(spec, rng);
    switch (kernel.id) {
      case KernelId::Gaussian:
        values(i) = theta + rng.next_gaussian();
        break;
      case KernelId::Poisson:
        values(i) = static_cast<double>(rng.next_poisson(std::exp(theta)));
        break;
      case KernelId::Exponential:
        if (!(theta > 0.0)) {
          throw std::invalid_argument("exponential kernel: mixing spec produced rate <= 0");
        }
        values(i) = rng.next_exponential(theta);
        break;
    }
  }
  return Sample::from_values(std::move(values));
}

// ---- Spec parsing ----

namespace {

std::map<std::string, std::string> parse_kv(const std::string& body) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("mixing spec: expected key=value in '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

double kv_num(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::invalid_argument("mixing spec: missing key '" + key + "'");
  return std::stod(it->second);
}

Eigen::VectorXd kv_vec(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw std::invalid_argument("mixing spec: missing key '" + key + "'");
  std::vector<double> vals;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, '|')) vals.push_back(std::stod(item));
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Index>(vals.size()));
}

}  // namespace

MixingSpec mixing_spec_from_string(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string body = colon == std::string::npos ? "" : text.substr(colon + 1);
  const auto kv = parse_kv(body);
  std::optional<MixingSpec> spec;
  if (head == "point") {
    spec = PointMass{kv_num(kv, "theta")};
  } else if (head == "atomic") {
    FiniteAtomic f;
    f.dist.atoms = kv_vec(kv, "atoms");
    f.dist.weights = kv_vec(kv, "weights");
    spec = f;
  } else if (head == "gaussian") {
    spec = GaussianMixing{kv_num(kv, "mean"), kv_num(kv, "sd")};
  } else if (head == "uniform") {
    spec = UniformMixing{kv_num(kv, "lo"), kv_num(kv, "hi")};
  } else if (head == "sinusoid") {
    spec = SinusoidMixing{kv_num(kv, "a"), kv_num(kv, "omega")};
  } else {
    throw std::invalid_argument("unknown mixing spec '" + head + "'");
  }
  validate_spec(*spec);
  return *spec;
}

std::string mixing_spec_to_string(const MixingSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PointMass>) {
          return "point:theta=" + format_double(s.theta);
        } else if constexpr (std::is_same_v<T, FiniteAtomic>) {
          std::string atoms, weights;
          for (Index j = 0; j < s.dist.size(); ++j) {
            if (j) {
              atoms += '|';
              weights += '|';
            }
            atoms += format_double(s.dist.atoms(j));
            weights += format_double(s.dist.weights(j));
          }
          return "atomic:atoms=" + atoms + ",weights=" + weights;
        } else if constexpr (std::is_same_v<T, GaussianMixing>) {
          return "gaussian:mean=" + format_double(s.mean) + ",sd=" + format_double(s.sd);
        } else if constexpr (std::is_same_v<T, UniformMixing>) {
          return "uniform:lo=" + format_double(s.lo) + ",hi=" + format_double(s.hi);
        } else {
          return "sinusoid:a=" + format_double(s.a) + ",omega=" + format_double(s.omega0);
        }
      },
      spec);
}

// ---- Serialization ----

void write_sample_text(const Sample& sample, std::ostream& os) {
  for (Index i = 0; i < sample.n(); ++i) os << format_double(sample.values(i)) << '\n';
}

void write_sample_csv(const Sample& sample, std::ostream& os) {
  os << "x\n";
  write_sample_text(sample, os);
}

Sample read_sample(std::istream& is) {
  std::vector<double> values;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "x" || line == "x\r") continue;
    values.push_back(std::stod(line));
  }
  if (values.empty()) throw std::invalid_argument("read_sample: no observations");
  return Sample::from_values(Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Index>(values.size())));
}

void write_atoms_csv(const AtomicDistribution& dist, std::ostream& os) {
  os << "atom,weight\n";
  for (Index j = 0; j < dist.size(); ++j) {
    os << format_double(dist.atoms(j)) << ',' << format_double(dist.weights(j)) << '\n';
  }
}

AtomicDistribution read_atoms_csv(std::istream& is) {
  std::vector<double> atoms, weights;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line.rfind("atom", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("read_atoms_csv: malformed row");
    atoms.push_back(std::stod(line.substr(0, comma)));
    weights.push_back(std::stod(line.substr(comma + 1)));
  }
  AtomicDistribution d;
  d.atoms = Eigen::Map<Eigen::VectorXd>(atoms.data(), static_cast<Index>(atoms.size()));
  d.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Index>(weights.size()));
  d.validate();
  return d;
}

nlohmann::json atoms_to_json(const AtomicDistribution& dist) {
  nlohmann::json j;
  j["atoms"] = std::vector<double>(dist.atoms.data(), dist.atoms.data() + dist.atoms.size());
  j["weights"] = std::vector<double>(dist.weights.data(), dist.weights.data() + dist.weights.size());
  return j;
}

AtomicDistribution atoms_from_json(const nlohmann::json& j) {
  const auto atoms = j.at("atoms").get<std::vector<double>>();
  const auto weights = j.at("weights").get<std::vector<double>>();
  AtomicDistribution d;
  d.atoms = Eigen::Map<const Eigen::VectorXd>(atoms.data(), static_cast<Index>(atoms.size()));
  d.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Index>(weights.size()));
  d.validate();
  return d;
}

}  // namespace npmix
