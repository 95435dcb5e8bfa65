#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmpc/controller.hpp"
#include "mmpc/sim.hpp"

namespace mmpc {

/// Malformed or inconsistent scenario file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme { kMultiplexed, kSynchronized };

/// Settings for the phase cost comparison (analyze-cost).
struct CostAnalysisConfig {
  std::vector<int> control_horizons{1, 2, 3, 4, 5};
  int phase_a = 0;
  int phase_b = 1;
  Vector step;  // x0 = B step; empty means no cost difference column
};

struct ScenarioConfig {
  SimScenario sim;
  Scheme scheme = Scheme::kMultiplexed;
  int control_horizon = 0;  // Nu (multiplexed) or moves per channel (synchronized)
  unsigned seed = 0;
  CostAnalysisConfig analysis;
};

struct ScenarioOverrides {
  std::optional<unsigned> seed;
  std::optional<int> control_horizon;
};

/// Parses and validates a scenario document.  Unknown keys, wrong types and
/// inconsistent dimensions raise ConfigError before anything is computed.
ScenarioConfig parse_scenario(const std::string& json_text, const ScenarioOverrides& overrides = {});
ScenarioConfig load_scenario(const std::string& path, const ScenarioOverrides& overrides = {});

struct CheckItem {
  std::string name;
  bool passed = true;
  std::string detail;
};

/// Stabilizability, Riccati convergence, tightened-set emptiness and terminal
/// invariance for a design.  Never throws on a failed check.
std::vector<CheckItem> check_design(const ControllerDesign& design);

}  // namespace mmpc
