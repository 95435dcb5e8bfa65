#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mmpc/controller.hpp"
#include "mmpc/lti_model.hpp"
#include "mmpc/polytope.hpp"

namespace mmpc {

/// Disturbance sequence w_k, one value per fast step.
class Disturbance {
 public:
  static Disturbance none(int dim);
  /// magnitude while start_s <= k dt < end_s, zero elsewhere.
  static Disturbance pulse(double start_s, double end_s, const Vector& magnitude, double dt);
  /// Each sample is a vertex of W with probability 1/2, otherwise uniform in W.
  static Disturbance bounded_random(const HPolytope& w, unsigned seed, long steps);

  Vector at(long k) const;
  int dim() const { return dim_; }

 private:
  enum class Kind { kNone, kPulse, kSequence };
  Kind kind_ = Kind::kNone;
  int dim_ = 0;
  long first_ = 0;
  long last_ = 0;  // exclusive
  Vector magnitude_;
  std::vector<Vector> samples_;
};

/// Four (by default) equal masses in a line joined by equal springs, free at
/// both ends.  State [positions; velocities], one force input per mass,
/// disturbance force on the last mass, output the position of mass 1.
ContinuousPlant spring_mass_plant(int masses = 4, double mass = 5.0, double stiffness = 1.0,
                                  bool anchored = false);

/// Two-input two-output plant with entries 1/(7s+1), 1/(3s+1), 2/(8s+1),
/// 1/(4s+1), one first-order state per entry.  Disturbances enter at the
/// inputs.
ContinuousPlant tito_plant();

/// Stand-in longitudinal aircraft model, state [u, w, q, theta], inputs
/// [elevator, thrust], disturbances at the inputs.  Open-loop stable.
ContinuousPlant surrogate_aircraft_plant();

struct SimScenario {
  std::string name;
  ControllerDesign design;
  Disturbance disturbance = Disturbance::none(0);
  Vector x0;
  long steps = 0;
  int peak_state = -1;  // state whose peak |x| is reported (-1: none)
};

struct Metrics {
  double control_energy = 0.0;  // sum u'u dt over the run
  double peak_state = 0.0;
  double peak_output = 0.0;
  int qp_count = 0;
  int decision_variables = 0;
  double solver_seconds = 0.0;
  double accumulated_cost = 0.0;
  double max_state_violation = 0.0;
  double max_input_violation = 0.0;
};

struct SimResult {
  std::string name;
  double dt = 1.0;
  Matrix x;   // (steps + 1) x n
  Matrix u;   // steps x m, held levels during each step
  Matrix du;  // steps x m
  Matrix w;   // steps x n_w
  Matrix y;   // (steps + 1) x p
  std::vector<int> qp_iterations;  // 0 when no QP was solved at that step
  std::vector<int> qp_variables;
  std::vector<double> qp_seconds;
  std::vector<double> objective;  // J*_k, NaN when not solved
  Metrics metrics;

  long steps() const { return static_cast<long>(u.rows()); }
};

/// Steps the plant x+ = A x + B du + E w under the scenario's controller.
/// Propagates InfeasibleError.
SimResult run_closed_loop(const SimScenario& scn);

/// Runs independent scenarios on up to `threads` workers; results come back
/// in input order.  The first failure (in input order) is rethrown.
std::vector<SimResult> run_batch(const std::vector<SimScenario>& scenarios, int threads = 1);

Metrics compute_metrics(const SimResult& result, const ControllerDesign& design, int peak_state);

/// One row per fast step with t, x, u, du, w, y, QP iterations and variables,
/// all reals at 17 significant digits.  Wall times are left to
/// write_timing_csv so the trace is reproducible byte for byte.
void write_trace_csv(std::ostream& os, const SimResult& result);
void write_timing_csv(std::ostream& os, const SimResult& result);
std::string metrics_json(const SimResult& result);

}  // namespace mmpc
