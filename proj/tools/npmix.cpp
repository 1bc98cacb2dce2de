#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "npmix/analysis.hpp"
#include "npmix/bounds.hpp"
#include "npmix/constructions.hpp"
#include "npmix/experiments.hpp"
#include "npmix/solver.hpp"

using namespace npmix;

namespace {

Sample load_sample(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sample file: " + path);
  return read_sample(in);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << text;
}

nlohmann::json certificate_json(const OptimalityCertificate& cert) {
  return nlohmann::json{{"sup_D", cert.sup_D},
                        {"gap_bound", cert.gap_bound},
                        {"argmax_theta", cert.argmax_theta},
                        {"grid_size_used", cert.grid_size_used},
                        {"support_violation", cert.support_violation}};
}

std::pair<double, double> parse_interval(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::runtime_error("interval must be lo:hi");
  return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NPMLE toolkit for one-dimensional exponential-family mixtures"};
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "compute the NPMLE and its optimality certificate");
  std::string fit_kernel = "gaussian", fit_input, fit_out;
  double fit_theta_lo = 0.0, fit_theta_hi = 0.0, fit_kkt_tol = 1e-6;
  int fit_grid = 4096;
  std::uint64_t fit_seed = 0;
  bool fit_have_lo = false, fit_have_hi = false;
  fit->add_option("--kernel", fit_kernel, "gaussian | poisson | exponential");
  fit->add_option("--input", fit_input, "sample file (one observation per line, or CSV with header x)")
      ->required();
  fit->add_option("--theta-lo", fit_theta_lo)->each([&](const std::string&) { fit_have_lo = true; });
  fit->add_option("--theta-hi", fit_theta_hi)->each([&](const std::string&) { fit_have_hi = true; });
  fit->add_option("--kkt-tol", fit_kkt_tol);
  fit->add_option("--grid", fit_grid);
  fit->add_option("--seed", fit_seed, "recorded in the output for provenance");
  fit->add_option("--out", fit_out, "output JSON path (stdout when omitted)");

  // ---- bound ----
  auto* bound = app.add_subcommand("bound", "deterministic atom-count bound report");
  std::string bound_kernel = "gaussian", bound_input;
  std::optional<double> bound_delta;
  bool bound_optimize = false;
  bound->add_option("--kernel", bound_kernel);
  bound->add_option("--input", bound_input)->required();
  bound->add_option("--delta", bound_delta, "free parameter (default: delta = r)");
  bound->add_flag("--optimize-delta", bound_optimize, "minimize over a 64-point log grid of delta");

  // ---- modes ----
  auto* modes = app.add_subcommand("modes", "mode count of a mixture density");
  std::string modes_spec = "sinusoid:a=20,omega=5", modes_interval = "-10:10";
  int modes_grid = 65536;
  modes->add_option("--spec", modes_spec, "mixing spec, e.g. sinusoid:a=20,omega=5");
  modes->add_option("--interval", modes_interval, "lo:hi");
  modes->add_option("--grid", modes_grid);

  // ---- quadrature ----
  auto* quad = app.add_subcommand("quadrature", "k-atomic moment-matching approximation");
  std::string quad_spec = "gaussian:mean=0,sd=1", quad_out;
  int quad_k = 5;
  double quad_a = 4.0;
  quad->add_option("--spec", quad_spec);
  quad->add_option("--k", quad_k)->required();
  quad->add_option("--a", quad_a)->required();
  quad->add_option("--out", quad_out, "CSV path (stdout when omitted); summary JSON goes to stderr");

  // ---- construct ----
  auto* construct = app.add_subcommand("construct", "adversarial mode constructions");
  std::string cons_type = "sinusoid", cons_csv;
  double cons_a = 20.0, cons_omega0 = 5.0;
  int cons_grid = 16384;
  construct->add_option("--type", cons_type, "sinusoid | logconcave");
  construct->add_option("--a", cons_a);
  construct->add_option("--omega0", cons_omega0);
  construct->add_option("--grid", cons_grid);
  construct->add_option("--csv", cons_csv, "also write the convolved density on a grid");

  // ---- experiment ----
  auto* experiment = app.add_subcommand("experiment", "reproducible experiment harness");
  std::string exp_config;
  bool exp_plot = false;
  experiment->add_option("--config", exp_config, "JSON config file")->required();
  experiment->add_flag("--plot", exp_plot, "also emit SVG charts");

  // ---- sample ----
  auto* sample_cmd = app.add_subcommand("sample", "draw a reproducible synthetic sample");
  std::string sample_kernel = "gaussian", sample_spec = "gaussian:mean=0,sd=1", sample_out;
  Index sample_n = 100;
  std::uint64_t sample_seed = 1;
  sample_cmd->add_option("--kernel", sample_kernel);
  sample_cmd->add_option("--spec", sample_spec);
  sample_cmd->add_option("--n", sample_n)->required();
  sample_cmd->add_option("--seed", sample_seed);
  sample_cmd->add_option("--out", sample_out, "output path (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) {
      const KernelFamily kernel = kernel_by_name(fit_kernel);
      const Sample sample = load_sample(fit_input);
      SolveConfig config;
      config.kkt_tol = fit_kkt_tol;
      config.grid_size = fit_grid;
      if (fit_have_lo != fit_have_hi) throw std::runtime_error("give both --theta-lo and --theta-hi");
      if (fit_have_lo) config.theta_window = {fit_theta_lo, fit_theta_hi};
      const NPMLESolution sol = solve_npmle(kernel, sample, config);
      nlohmann::json j{{"kernel", kernel.name()},
                       {"n", sample.n()},
                       {"seed", fit_seed},
                       {"pi_hat", atoms_to_json(sol.pi_hat)},
                       {"log_likelihood", sol.log_likelihood},
                       {"certificate", certificate_json(sol.certificate)},
                       {"outer_iters", sol.outer_iters},
                       {"converged", sol.converged},
                       {"window", {sol.window.first, sol.window.second}},
                       {"window_clamped", sol.window_clamped}};
      if (fit_out.empty()) std::cout << j.dump(2) << '\n';
      else write_text(fit_out, j.dump(2) + "\n");
    } else if (*bound) {
      const KernelFamily kernel = kernel_by_name(bound_kernel);
      const Sample sample = load_sample(bound_input);
      nlohmann::json j;
      if (kernel.id == KernelId::Exponential) {
        j = {{"kernel", kernel.name()}, {"bound", exponential_atom_bound(sample)}};
      } else if (bound_delta) {
        j = crit_bound(kernel, sample.x_min(), sample.x_max(), *bound_delta).to_json();
      } else if (bound_optimize) {
        const double r = 0.5 * (kernel.mean_inverse(sample.x_max()) - kernel.mean_inverse(sample.x_min()));
        j = crit_bound_min_delta(kernel, sample.x_min(), sample.x_max(), 1e-3 * r, 100.0 * r).to_json();
      } else if (kernel.id == KernelId::Gaussian) {
        const double a = 0.5 * (sample.x_max() - sample.x_min());
        if (a == 0.0) {
          j = {{"kernel", kernel.name()}, {"bound", 1.0}, {"bound_floored", 1.0}};
        } else {
          j = crit_bound(kernel, -a, a, a).to_json();
          j["recentered"] = true;
        }
        j["poisson_degree_bound"] = nullptr;
      } else {
        j = {{"kernel", kernel.name()}, {"bound", poisson_atom_bound(sample)}};
      }
      std::cout << j.dump(2) << '\n';
    } else if (*modes) {
      const MixingSpec spec = mixing_spec_from_string(modes_spec);
      const auto [lo, hi] = parse_interval(modes_interval);
      const auto density = mixture_density_fn(spec);
      const CriticalPointReport rep = count_density_modes(density, lo, hi, modes_grid);
      nlohmann::json j{{"spec", mixing_spec_to_string(spec)},
                       {"interval", {lo, hi}},
                       {"grid_size", rep.grid_size},
                       {"count", rep.count},
                       {"locations", rep.locations},
                       {"refinement_warning", rep.refinement_warning}};
      std::cout << j.dump(2) << '\n';
    } else if (*quad) {
      const MixingSpec spec = mixing_spec_from_string(quad_spec);
      const KAtomicApprox approx = k_atomic_approximation(spec, quad_a, quad_k);
      std::ostringstream csv;
      write_atoms_csv(approx.distribution, csv);
      if (quad_out.empty()) std::cout << csv.str();
      else write_text(quad_out, csv.str());
      nlohmann::json j{{"tv_bound", approx.tv_bound},
                       {"tv_measured", approx.tv_measured},
                       {"k", approx.distribution.size()}};
      std::cerr << j.dump() << '\n';
    } else if (*construct) {
      if (cons_type == "sinusoid") {
        const SinusoidConstruction cons = try_build_sinusoid(cons_a, cons_omega0);
        nlohmann::json j = cons.to_json();
        if (cons.accepted) {
          const ModeVerification ver = verify_sinusoid_modes(cons, cons_grid);
          j["counted_modes"] = ver.counted;
          j["satisfied"] = ver.satisfied;
          if (!cons_csv.empty()) {
            std::ostringstream os;
            os << "y,density\n";
            for (int g = 0; g <= 2000; ++g) {
              const double y = -cons.a + 2.0 * cons.a * g / 2000.0;
              os << format_double(y) << ',' << format_double(sinusoid_convolution_density(cons, y))
                 << '\n';
            }
            write_text(cons_csv, os.str());
          }
        }
        std::cout << j.dump(2) << '\n';
      } else if (cons_type == "logconcave") {
        const LogConcaveDecomposition dec = logconcave_decomposition(cons_a, cons_grid);
        std::cout << dec.to_json().dump(2) << '\n';
      } else {
        throw std::runtime_error("unknown construction type: " + cons_type);
      }
    } else if (*experiment) {
      std::ifstream in(exp_config);
      if (!in) throw std::runtime_error("cannot open config: " + exp_config);
      nlohmann::json j;
      in >> j;
      ExperimentConfig config = ExperimentConfig::from_json(j);
      if (exp_plot) config.plot = true;
      const ExperimentTable table = run_experiment(config);
      std::cout << table.summary.dump(2) << '\n';
    } else if (*sample_cmd) {
      const KernelFamily kernel = kernel_by_name(sample_kernel);
      const MixingSpec spec = mixing_spec_from_string(sample_spec);
      const Sample s = sample_mixture(kernel, spec, sample_n, sample_seed);
      std::ostringstream os;
      write_sample_text(s, os);
      if (sample_out.empty()) std::cout << os.str();
      else write_text(sample_out, os.str());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
