#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmpc/periodic_lq.hpp"
#include "mmpc/scenario.hpp"
#include "mmpc/sim.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 1, kInfeasible = 2 };

std::string num(double v, int digits = 10) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

int thread_budget() {
  if (const char* env = std::getenv("MMPC_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

mmpc::ScenarioOverrides overrides(const std::optional<unsigned>& seed, std::optional<int> horizon = {}) {
  mmpc::ScenarioOverrides o;
  o.seed = seed;
  o.control_horizon = horizon;
  return o;
}

// Runs `body`, mapping the library's exceptions onto the exit-code contract.
template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const mmpc::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const mmpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const mmpc::DesignError& e) {
    std::cerr << "design error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
}

std::ostream& target(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw mmpc::ConfigError("cannot write " + path);
  return file;
}

int cmd_run(const std::string& path, const std::string& out_dir, const std::optional<unsigned>& seed) {
  const auto cfg = mmpc::load_scenario(path, overrides(seed));
  const auto result = mmpc::run_closed_loop(cfg.sim);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  std::ofstream trace(dir / "trace.csv");
  mmpc::write_trace_csv(trace, result);
  std::ofstream timing(dir / "timing.csv");
  mmpc::write_timing_csv(timing, result);
  std::ofstream metrics(dir / "metrics.json");
  metrics << mmpc::metrics_json(result);
  if (!trace || !timing || !metrics) throw mmpc::ConfigError("cannot write to " + out_dir);
  std::cout << mmpc::metrics_json(result);
  return kOk;
}

int cmd_analyze(const std::string& path, const std::vector<int>& nu, const std::vector<int>& phases,
                const std::string& out) {
  auto cfg = mmpc::load_scenario(path);
  auto& a = cfg.analysis;
  if (!nu.empty()) a.control_horizons = nu;
  if (!phases.empty()) {
    if (phases.size() != 2) throw mmpc::ConfigError("--phases expects two values");
    a.phase_a = phases[0];
    a.phase_b = phases[1];
  }
  const auto& d = cfg.sim.design;
  if (cfg.scheme != mmpc::Scheme::kMultiplexed)
    throw mmpc::ConfigError("analyze-cost needs a multiplexed (mmpc) scenario");
  const mmpc::Schedule schedule{d.plant.channels(), d.pattern.offset()};
  const mmpc::Vector x0 = a.step.size() > 0 ? mmpc::step_disturbance_state(d.plant, a.step)
                                            : mmpc::Vector::Zero(d.plant.states());
  const auto rows = mmpc::compare_phases(d.plant, schedule, d.q, d.r, a.control_horizons, a.phase_a,
                                         a.phase_b, x0);
  std::ofstream file;
  std::ostream& os = target(out, file);
  os << "N_u";
  if (!rows.empty())
    for (Eigen::Index i = 0; i < rows.front().eigenvalues.size(); ++i) os << ",eig" << i + 1;
  if (a.step.size() > 0) os << ",cost_difference";
  os << "\n";
  for (const auto& row : rows) {
    os << row.control_horizon;
    for (Eigen::Index i = 0; i < row.eigenvalues.size(); ++i) os << ',' << num(row.eigenvalues(i));
    if (a.step.size() > 0) os << ',' << num(row.cost_difference);
    os << "\n";
  }
  return kOk;
}

void metrics_table(std::ostream& os, const std::vector<mmpc::SimResult>& results) {
  auto line = [&](const char* label, auto get) {
    os << label;
    for (const auto& r : results) os << ',' << get(r);
    os << "\n";
  };
  os << "metric";
  for (const auto& r : results) os << ',' << r.name;
  os << "\n";
  line("control_energy_x1000", [](const mmpc::SimResult& r) { return num(1000.0 * r.metrics.control_energy); });
  line("peak_state", [](const mmpc::SimResult& r) { return num(r.metrics.peak_state); });
  line("peak_output", [](const mmpc::SimResult& r) { return num(r.metrics.peak_output); });
  line("qp_count", [](const mmpc::SimResult& r) { return std::to_string(r.metrics.qp_count); });
  line("decision_variables", [](const mmpc::SimResult& r) { return std::to_string(r.metrics.decision_variables); });
  line("solver_seconds", [](const mmpc::SimResult& r) { return num(r.metrics.solver_seconds, 4); });
  line("accumulated_cost", [](const mmpc::SimResult& r) { return num(r.metrics.accumulated_cost); });
}

int cmd_compare(const std::string& a, const std::string& b, const std::vector<int>& sweep,
                const std::string& out, const std::optional<unsigned>& seed) {
  std::ofstream file;
  if (sweep.empty()) {
    const std::vector<mmpc::SimScenario> batch{mmpc::load_scenario(a, overrides(seed)).sim,
                                               mmpc::load_scenario(b, overrides(seed)).sim};
    const auto results = mmpc::run_batch(batch, thread_budget());
    metrics_table(target(out, file), results);
    return kOk;
  }
  // Horizon sweep: the same horizon value is applied to both scenarios.
  std::vector<mmpc::SimScenario> batch;
  for (int h : sweep) {
    batch.push_back(mmpc::load_scenario(a, overrides(seed, h)).sim);
    batch.push_back(mmpc::load_scenario(b, overrides(seed, h)).sim);
  }
  const auto results = mmpc::run_batch(batch, thread_budget());
  std::ostream& os = target(out, file);
  os << "horizon,a_variables,a_mean_qp_seconds,b_variables,b_mean_qp_seconds\n";
  for (size_t i = 0; i < sweep.size(); ++i) {
    const auto& ra = results[2 * i].metrics;
    const auto& rb = results[2 * i + 1].metrics;
    os << sweep[i] << ',' << ra.decision_variables << ','
       << num(ra.qp_count ? ra.solver_seconds / ra.qp_count : 0.0, 6) << ',' << rb.decision_variables
       << ',' << num(rb.qp_count ? rb.solver_seconds / rb.qp_count : 0.0, 6) << "\n";
  }
  return kOk;
}

int cmd_check(const std::string& path) {
  const auto cfg = mmpc::load_scenario(path);
  bool ok = true;
  for (const auto& item : mmpc::check_design(cfg.sim.design)) {
    std::cout << (item.passed ? "PASS " : "FAIL ") << item.name;
    if (!item.detail.empty()) std::cout << ": " << item.detail;
    std::cout << "\n";
    ok = ok && item.passed;
  }
  return ok ? kOk : kConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiplexed and synchronized MPC: simulation and analysis"};
  app.require_subcommand(1);
  std::optional<unsigned> seed;
  app.add_option("--seed", seed, "Override the scenario's random seed");

  std::string file, file_b, out_dir = "out", out;
  std::vector<int> nu, phases, sweep;

  auto* run = app.add_subcommand("run", "Simulate a scenario; writes trace.csv, timing.csv, metrics.json");
  run->add_option("file", file, "Scenario JSON")->required();
  run->add_option("--out", out_dir, "Output directory");

  auto* analyze = app.add_subcommand("analyze-cost", "Eigenvalues of the phase cost difference per N_u");
  analyze->add_option("file", file, "Scenario JSON")->required();
  analyze->add_option("--nu", nu, "Control horizons")->delimiter(',');
  analyze->add_option("--phases", phases, "Two phases to compare")->delimiter(',');
  analyze->add_option("--out", out, "CSV output (default stdout)");

  auto* compare = app.add_subcommand("compare", "Side-by-side metrics of two scenarios");
  compare->add_option("a", file, "First scenario")->required();
  compare->add_option("b", file_b, "Second scenario")->required();
  compare->add_option("--sweep", sweep, "Horizon sweep values (N_u or moves)")->delimiter(',');
  compare->add_option("--out", out, "CSV output (default stdout)");

  auto* check = app.add_subcommand("check", "Design checks for a scenario");
  check->add_option("file", file, "Scenario JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*run) return guarded([&] { return cmd_run(file, out_dir, seed); });
  if (*analyze) return guarded([&] { return cmd_analyze(file, nu, phases, out); });
  if (*compare) return guarded([&] { return cmd_compare(file, file_b, sweep, out, seed); });
  return guarded([&] { return cmd_check(file); });
}
