#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmpc/condense.hpp"
#include "mmpc/lti_model.hpp"
#include "mmpc/periodic_lq.hpp"
#include "mmpc/polytope.hpp"
#include "mmpc/qp.hpp"
#include "mmpc/tightening.hpp"

namespace mmpc {

enum class ControllerMode { kNominal, kRobust };

enum class TerminalSetKind { kOrigin, kNone, kPolytope };

struct ControllerDesign {
  DiscretePlant plant;
  MovePattern pattern = MovePattern::multiplexed(Schedule{1, 0});
  int steps = 1;
  Matrix q;
  double r = 1.0;
  std::optional<HPolytope> state_set;
  std::vector<std::optional<HPolytope>> input_sets;  // per phase; empty means none
  TerminalSetKind terminal = TerminalSetKind::kOrigin;
  std::optional<HPolytope> terminal_set;  // for kPolytope
  bool riccati_terminal_weight = true;
  ControllerMode mode = ControllerMode::kNominal;
  std::optional<HPolytope> disturbance_set;  // W, required for robust mode
  /// Penalty on constrained-output excursions while the recovery policy
  /// undoes a disturbance.  Unset: the smallest of 0, 1e-4, 1e-3, ... 10
  /// for which every tightened set is nonempty.
  std::optional<double> policy_constraint_weight;
};

/// Multiplexed design: one channel per fast step, N = (Nu - 1) m + 1.
ControllerDesign mmpc_design(const DiscretePlant& plant, const Schedule& schedule,
                             int control_horizon, const Matrix& q, double r);

/// Synchronized design: all channels move together every `period` steps,
/// `moves` moves per channel, N = moves * period.
ControllerDesign smpc_design(const DiscretePlant& plant, int period, int moves, const Matrix& q,
                             double r);

/// A stored plan: all move slots from `start` and the predicted states.
struct Plan {
  long start = 0;
  int phase = 0;
  int steps = 0;
  int state_dim = 0;
  std::vector<MoveSlot> slots;
  Vector moves;
  Vector states;  // x_{start+1} .. x_{start+N}, stacked
  double objective = 0.0;

  /// Predicted x_{start+i}, i in [1, N].
  Vector state(int i) const { return states.segment((i - 1) * state_dim, state_dim); }
  /// Planned moves at relative step i, one entry per plant channel.
  Vector moves_at(int i, int channels) const;
};

struct StepOutcome {
  Vector du;  // one entry per plant channel
  bool solved = false;
  int variables = 0;
  int iterations = 0;
  double solve_seconds = 0.0;
  double objective = 0.0;
};

/// Raised when a step's QP has no solution.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(long step, const std::string& detail);
  long step() const { return step_; }

 private:
  long step_;
};

class Controller {
 public:
  explicit Controller(ControllerDesign design);

  const ControllerDesign& design() const { return design_; }
  long time() const { return k_; }
  void reset(long k0 = 0);

  /// Computes the moves for the current step from state x and advances time.
  StepOutcome step(const Vector& x);

  /// x - x_{k|plan}: the accumulated disturbance effect since the last solve.
  Vector infer_disturbance(const Vector& x) const;

  /// The shifted and corrected previous plan for the current (solve) step,
  /// before any optimization.
  Plan candidate(const Vector& x) const;

  const std::optional<Plan>& plan() const { return plan_; }
  const RecoveryPolicy& policy() const { return policy_; }
  const TightenedSets& sets() const { return sets_; }
  const std::optional<PeriodicRiccati>& riccati() const { return riccati_; }
  /// Output-excursion weight actually used by the recovery policy.
  double policy_constraint_weight() const { return policy_weight_; }
  int steady_variables() const;
  /// Horizon data for a solve phase (first solve uses every slot).
  const CondensedHorizon& horizon(int phase, bool all_free) const;

 private:
  Vector frozen_values(const CondensedHorizon& ch, const Vector& x, bool corrected) const;
  Vector shifted_moves(int phase, const Vector& delta, bool corrected) const;

  ControllerDesign design_;
  RecoveryPolicy policy_;
  TightenedSets sets_;
  std::optional<PeriodicRiccati> riccati_;
  double policy_weight_ = 0.0;
  long k_ = 0;
  std::optional<Plan> plan_;
  mutable std::map<std::pair<int, bool>, std::unique_ptr<CondensedHorizon>> cache_;
};

}  // namespace mmpc
