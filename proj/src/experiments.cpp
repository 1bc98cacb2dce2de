#include "npmix/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "npmix/analysis.hpp"
#include "npmix/bounds.hpp"

namespace npmix {

namespace {

std::uint64_t task_seed(std::uint64_t base, std::size_t n_index, int replicate) {
  // Stable (seed, n, replicate) keying, independent of scheduling.
  return base ^ (0x9E3779B97F4A7C15ull * (n_index + 1)) ^ (0xC2B2AE3D27D4EB4Full * std::uint64_t(replicate + 1));
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / double(v.size());
}

void run_parallel(int threads, int task_count, const std::function<void(int)>& task) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, task_count));
  if (threads == 1) {
    for (int t = 0; t < task_count; ++t) task(t);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int t = next.fetch_add(1);
        if (t >= task_count) return;
        try {
          task(t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct TaskKey {
  std::size_t n_index;
  int replicate;
};

std::vector<TaskKey> make_tasks(const ExperimentConfig& config) {
  std::vector<TaskKey> tasks;
  for (std::size_t ni = 0; ni < config.n_list.size(); ++ni) {
    for (int r = 0; r < config.replicates; ++r) tasks.push_back({ni, r});
  }
  return tasks;
}

nlohmann::json per_n_summaries(const ExperimentConfig& config,
                               const std::vector<ExperimentRecord>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t ni = 0; ni < config.n_list.size(); ++ni) {
    const Index n = config.n_list[ni];
    std::vector<double> counts, constrained, gaps, h2s;
    int unconverged = 0;
    for (const auto& row : rows) {
      if (row.n != n) continue;
      counts.push_back(double(row.atom_count));
      if (row.constrained_atom_count >= 0) constrained.push_back(double(row.constrained_atom_count));
      gaps.push_back(row.gap_bound);
      if (row.h2_to_truth >= 0.0) h2s.push_back(row.h2_to_truth);
      if (!row.converged) ++unconverged;
    }
    nlohmann::json entry{{"n", n},
                         {"median_atom_count", median(counts)},
                         {"median_count_over_log_n", median(counts) / std::log(double(n))},
                         {"median_count_over_sqrt_n", median(counts) / std::sqrt(double(n))},
                         {"max_gap_bound", gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end())},
                         {"unconverged", unconverged}};
    if (!constrained.empty()) entry["median_constrained_atom_count"] = median(constrained);
    if (!h2s.empty()) {
      entry["mean_h2"] = mean(h2s);
      entry["median_h2"] = median(h2s);
      entry["mean_h2_times_n_over_log2n"] =
          mean(h2s) * double(n) / (std::log(double(n)) * std::log(double(n)));
    }
    out.push_back(entry);
  }
  return out;
}

double regression_slope_vs_logn(const nlohmann::json& per_n, const std::string& field) {
  // Least-squares slope of field against ln n.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& entry : per_n) {
    if (!entry.contains(field)) continue;
    const double x = std::log(double(entry.at("n").get<Index>()));
    const double y = entry.at(field).get<double>();
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  if (m < 2) return 0.0;
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

void write_outputs(const ExperimentTable& table) {
  const auto& config = table.config;
  if (config.output_prefix.empty()) return;
  const std::filesystem::path prefix(config.output_prefix);
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());

  std::ofstream csv(config.output_prefix + ".csv", std::ios::binary);
  csv << table.to_csv();
  csv.close();

  std::ofstream summary(config.output_prefix + "_summary.json", std::ios::binary);
  summary << table.summary.dump(2) << '\n';
  summary.close();

  if (!config.plot) return;
  {
    std::vector<std::pair<double, double>> points;
    for (const auto& entry : table.summary.at("per_n")) {
      points.emplace_back(std::log(double(entry.at("n").get<Index>())),
                          entry.at("median_atom_count").get<double>());
    }
    const std::string svg = svg_line_chart("median atom count vs ln n", "ln n", "median atoms",
                                           {{"median", points}});
    std::ofstream out(config.output_prefix + "_count_vs_logn.svg", std::ios::binary);
    out << svg;
  }
  if (config.name == "risk") {
    std::vector<std::pair<double, double>> points;
    for (const auto& entry : table.summary.at("per_n")) {
      if (!entry.contains("mean_h2")) continue;
      points.emplace_back(double(entry.at("n").get<Index>()), entry.at("mean_h2").get<double>());
    }
    const std::string svg =
        svg_line_chart("mean squared Hellinger vs n", "n", "H^2", {{"mean", points}}, true, true);
    std::ofstream out(config.output_prefix + "_h2_vs_n.svg", std::ios::binary);
    out << svg;
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (name != "scaling" && name != "risk" && name != "exponential_probe") {
    throw std::invalid_argument("ExperimentConfig: unknown experiment '" + name + "'");
  }
  if (replicates < 1) throw std::invalid_argument("ExperimentConfig: replicates must be >= 1");
  if (n_list.empty()) throw std::invalid_argument("ExperimentConfig: n_list is empty");
  for (std::size_t i = 0; i + 1 < n_list.size(); ++i) {
    if (!(n_list[i] < n_list[i + 1])) {
      throw std::invalid_argument("ExperimentConfig: n_list must be strictly increasing");
    }
  }
  solver.validate();
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig config;
  config.name = j.value("experiment", std::string("scaling"));
  config.kernel = j.value("kernel", std::string("gaussian"));
  if (j.contains("mixing")) config.mixing = mixing_spec_from_string(j.at("mixing").get<std::string>());
  config.n_list = j.at("n_list").get<std::vector<Index>>();
  config.replicates = j.value("replicates", 1);
  config.base_seed = j.value("seed", std::uint64_t{1});
  config.constrained_theta_hi = j.value("constrained_theta_hi", 4.0);
  config.output_prefix = j.value("output", std::string());
  config.plot = j.value("plot", false);
  config.threads = j.value("threads", 0);
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    config.solver.grid_size = s.value("grid", config.solver.grid_size);
    config.solver.kkt_tol = s.value("kkt_tol", config.solver.kkt_tol);
    config.solver.max_outer_iters = s.value("max_outer_iters", config.solver.max_outer_iters);
    config.solver.em_inner_iters = s.value("em_inner_iters", config.solver.em_inner_iters);
    if (s.contains("theta_lo") && s.contains("theta_hi")) {
      config.solver.theta_window = {s.at("theta_lo").get<double>(), s.at("theta_hi").get<double>()};
    }
  }
  config.validate();
  return config;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j{{"experiment", name},
                   {"kernel", kernel},
                   {"mixing", mixing_spec_to_string(mixing)},
                   {"n_list", n_list},
                   {"replicates", replicates},
                   {"seed", base_seed},
                   {"threads", threads}};
  j["solver"] = {{"grid", solver.grid_size},
                 {"kkt_tol", solver.kkt_tol},
                 {"max_outer_iters", solver.max_outer_iters},
                 {"em_inner_iters", solver.em_inner_iters}};
  if (name == "exponential_probe") j["constrained_theta_hi"] = constrained_theta_hi;
  return j;
}

std::string ExperimentTable::to_csv() const {
  std::ostringstream os;
  os << "n,replicate,atom_count,constrained_atom_count,log_likelihood,gap_bound,x_range,"
        "bound_value,h2_to_truth,converged\n";
  for (const auto& row : rows) {
    os << row.n << ',' << row.replicate << ',' << row.atom_count << ','
       << row.constrained_atom_count << ',' << format_double(row.log_likelihood) << ','
       << format_double(row.gap_bound) << ',' << format_double(row.x_range) << ','
       << format_double(row.bound_value) << ',' << format_double(row.h2_to_truth) << ','
       << (row.converged ? 1 : 0) << '\n';
  }
  return os.str();
}

ExperimentTable run_scaling(const ExperimentConfig& config) {
  config.validate();
  const KernelFamily kernel = kernel_by_name(config.kernel);
  const auto tasks = make_tasks(config);
  ExperimentTable table;
  table.config = config;
  table.rows.resize(tasks.size());

  const auto t0 = std::chrono::steady_clock::now();
  run_parallel(config.threads, static_cast<int>(tasks.size()), [&](int t) {
    const TaskKey key = tasks[static_cast<std::size_t>(t)];
    const Index n = config.n_list[key.n_index];
    const Sample sample =
        sample_mixture(kernel, config.mixing, n, task_seed(config.base_seed, key.n_index, key.replicate));
    const auto tick = std::chrono::steady_clock::now();
    const NPMLESolution sol = solve_npmle(kernel, sample, config.solver);
    const auto tock = std::chrono::steady_clock::now();

    ExperimentRecord row;
    row.n = n;
    row.replicate = key.replicate;
    row.atom_count = static_cast<int>(sol.pi_hat.size());
    row.log_likelihood = sol.log_likelihood;
    row.gap_bound = sol.certificate.gap_bound;
    row.x_range = sample.x_max() - sample.x_min();
    row.bound_value = kernel.id == KernelId::Poisson
                          ? double(poisson_atom_bound(sample))
                          : (kernel.id == KernelId::Gaussian ? gaussian_atom_bound(sample)
                                                             : exponential_atom_bound(sample));
    row.converged = sol.converged;
    row.wall_time = std::chrono::duration<double>(tock - tick).count();
    table.rows[static_cast<std::size_t>(t)] = row;
  });
  const auto t1 = std::chrono::steady_clock::now();

  nlohmann::json per_n = per_n_summaries(config, table.rows);
  table.summary = {{"config", config.to_json()},
                   {"per_n", per_n},
                   {"median_count_slope_vs_logn", regression_slope_vs_logn(per_n, "median_atom_count")},
                   {"total_wall_time", std::chrono::duration<double>(t1 - t0).count()}};
  write_outputs(table);
  return table;
}

ExperimentTable run_risk(const ExperimentConfig& config) {
  config.validate();
  const KernelFamily kernel = kernel_by_name(config.kernel);
  if (kernel.id != KernelId::Gaussian) {
    throw std::invalid_argument("run_risk: gaussian kernel only (true density required)");
  }
  const auto truth = mixture_density_fn(config.mixing);
  const double truth_radius = mixture_density_support_radius(config.mixing);

  const auto tasks = make_tasks(config);
  ExperimentTable table;
  table.config = config;
  table.rows.resize(tasks.size());

  const auto t0 = std::chrono::steady_clock::now();
  run_parallel(config.threads, static_cast<int>(tasks.size()), [&](int t) {
    const TaskKey key = tasks[static_cast<std::size_t>(t)];
    const Index n = config.n_list[key.n_index];
    const Sample sample =
        sample_mixture(kernel, config.mixing, n, task_seed(config.base_seed, key.n_index, key.replicate));
    const auto tick = std::chrono::steady_clock::now();
    const NPMLESolution sol = solve_npmle(kernel, sample, config.solver);

    const AtomicDistribution pi_hat = sol.pi_hat;
    const auto fitted = mixture_density_fn(FiniteAtomic{pi_hat});
    const double radius =
        std::max({truth_radius, std::abs(pi_hat.atoms.minCoeff()) + 10.0,
                  std::abs(pi_hat.atoms.maxCoeff()) + 10.0});
    const double h2 = divergences(fitted, truth, -radius, radius).hellinger_sq;
    const auto tock = std::chrono::steady_clock::now();

    ExperimentRecord row;
    row.n = n;
    row.replicate = key.replicate;
    row.atom_count = static_cast<int>(sol.pi_hat.size());
    row.log_likelihood = sol.log_likelihood;
    row.gap_bound = sol.certificate.gap_bound;
    row.x_range = sample.x_max() - sample.x_min();
    row.bound_value = gaussian_atom_bound(sample);
    row.h2_to_truth = h2;
    row.converged = sol.converged;
    row.wall_time = std::chrono::duration<double>(tock - tick).count();
    table.rows[static_cast<std::size_t>(t)] = row;
  });
  const auto t1 = std::chrono::steady_clock::now();

  nlohmann::json per_n = per_n_summaries(config, table.rows);
  table.summary = {{"config", config.to_json()},
                   {"per_n", per_n},
                   {"total_wall_time", std::chrono::duration<double>(t1 - t0).count()}};
  write_outputs(table);
  return table;
}

ExperimentTable run_exponential_probe(const ExperimentConfig& config) {
  config.validate();
  const KernelFamily kernel = kernel_by_name(config.kernel);
  if (kernel.id != KernelId::Exponential) {
    throw std::invalid_argument("run_exponential_probe: exponential kernel only");
  }

  const auto tasks = make_tasks(config);
  ExperimentTable table;
  table.config = config;
  table.rows.resize(tasks.size());

  const auto t0 = std::chrono::steady_clock::now();
  run_parallel(config.threads, static_cast<int>(tasks.size()), [&](int t) {
    const TaskKey key = tasks[static_cast<std::size_t>(t)];
    const Index n = config.n_list[key.n_index];
    const Sample sample =
        sample_mixture(kernel, config.mixing, n, task_seed(config.base_seed, key.n_index, key.replicate));
    const auto tick = std::chrono::steady_clock::now();

    const NPMLESolution unconstrained = solve_npmle(kernel, sample, config.solver);

    SolveConfig constrained_config = config.solver;
    const auto window = default_theta_window(kernel, sample);
    constrained_config.theta_window = {window.first,
                                       std::min(config.constrained_theta_hi, window.second)};
    if (!(constrained_config.theta_window->first < constrained_config.theta_window->second)) {
      constrained_config.theta_window = {0.5 * config.constrained_theta_hi,
                                         config.constrained_theta_hi};
    }
    const NPMLESolution constrained = solve_npmle(kernel, sample, constrained_config);
    const auto tock = std::chrono::steady_clock::now();

    ExperimentRecord row;
    row.n = n;
    row.replicate = key.replicate;
    row.atom_count = static_cast<int>(unconstrained.pi_hat.size());
    row.constrained_atom_count = static_cast<int>(constrained.pi_hat.size());
    row.log_likelihood = unconstrained.log_likelihood;
    row.gap_bound = unconstrained.certificate.gap_bound;
    row.x_range = sample.x_max() - sample.x_min();
    row.bound_value = exponential_atom_bound(sample);
    row.converged = unconstrained.converged && constrained.converged;
    row.wall_time = std::chrono::duration<double>(tock - tick).count();
    table.rows[static_cast<std::size_t>(t)] = row;
  });
  const auto t1 = std::chrono::steady_clock::now();

  nlohmann::json per_n = per_n_summaries(config, table.rows);
  table.summary = {{"config", config.to_json()},
                   {"per_n", per_n},
                   {"note", "conjecture probe: evidence only, no verdict"},
                   {"total_wall_time", std::chrono::duration<double>(t1 - t0).count()}};
  write_outputs(table);
  return table;
}

ExperimentTable run_experiment(const ExperimentConfig& config) {
  if (config.name == "scaling") return run_scaling(config);
  if (config.name == "risk") return run_risk(config);
  return run_exponential_probe(config);
}

std::string svg_line_chart(
    const std::string& title, const std::string& x_label, const std::string& y_label,
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
    bool log_x, bool log_y) {
  const int width = 640, height = 480, margin = 60;
  auto tx = [&](double v) { return log_x ? std::log10(std::max(v, 1e-300)) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(std::max(v, 1e-300)) : v; };

  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& [label, points] : series) {
    for (const auto& [x, y] : points) {
      x_lo = std::min(x_lo, tx(x));
      x_hi = std::max(x_hi, tx(x));
      y_lo = std::min(y_lo, ty(y));
      y_hi = std::max(y_hi, ty(y));
    }
  }
  if (!(x_hi > x_lo)) x_hi = x_lo + 1.0;
  if (!(y_hi > y_lo)) y_hi = y_lo + 1.0;

  auto px = [&](double x) { return margin + (tx(x) - x_lo) / (x_hi - x_lo) * (width - 2 * margin); };
  auto py = [&](double y) { return height - margin - (ty(y) - y_lo) / (y_hi - y_lo) * (height - 2 * margin); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title << "</text>\n";
  os << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin << "' y2='"
     << height - margin << "' stroke='black'/>\n";
  os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
     << height - margin << "' stroke='black'/>\n";
  os << "<text x='" << width / 2 << "' y='" << height - 16 << "' text-anchor='middle' font-size='12'>"
     << x_label << (log_x ? " (log)" : "") << "</text>\n";
  os << "<text x='16' y='" << height / 2 << "' font-size='12' transform='rotate(-90 16 " << height / 2
     << ")' text-anchor='middle'>" << y_label << (log_y ? " (log)" : "") << "</text>\n";

  int color = 0;
  int legend_y = margin;
  for (const auto& [label, points] : series) {
    os << "<polyline fill='none' stroke='" << palette[color % 4] << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : points) os << px(x) << ',' << py(y) << ' ';
    os << "'/>\n";
    for (const auto& [x, y] : points) {
      os << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='3' fill='" << palette[color % 4]
         << "'/>\n";
    }
    os << "<text x='" << width - margin - 100 << "' y='" << legend_y << "' font-size='12' fill='"
       << palette[color % 4] << "'>" << label << "</text>\n";
    legend_y += 16;
    ++color;
  }
  os << "<text x='" << margin << "' y='" << height - margin + 14 << "' font-size='10'>"
     << x_lo << "</text>\n";
  os << "<text x='" << width - margin << "' y='" << height - margin + 14
     << "' text-anchor='end' font-size='10'>" << x_hi << "</text>\n";
  os << "<text x='" << margin - 4 << "' y='" << height - margin << "' text-anchor='end' font-size='10'>"
     << y_lo << "</text>\n";
  os << "<text x='" << margin - 4 << "' y='" << margin << "' text-anchor='end' font-size='10'>"
     << y_hi << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace npmix
