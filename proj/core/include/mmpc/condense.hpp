#pragma once

#include <optional>
#include <vector>

#include "mmpc/lti_model.hpp"
#include "mmpc/polytope.hpp"
#include "mmpc/qp.hpp"
#include "mmpc/tightening.hpp"

namespace mmpc {

/// J = x0'q x0 + sum_{i=1}^{N-1} x_i'q x_i + x_N'F x_N + r sum (moves)^2.
struct HorizonCost {
  Matrix q;
  double r = 1.0;
  Matrix terminal_weight;  // empty means zero
};

/// Dense finite-horizon problem for one solve phase with a fixed split of
/// move slots into decision variables and frozen (already planned) values.
/// Everything that does not depend on the current state and frozen values
/// is computed once here.
class CondensedHorizon {
 public:
  CondensedHorizon(const DiscretePlant& plant, const MovePattern& pattern, int phase, int steps,
                   std::vector<char> free_mask, const HorizonCost& cost,
                   const TightenedSets& sets);

  /// QP in the free moves for state x and the frozen values (in slot
  /// order of frozen_slots()).
  QpInstance instance(const Vector& x, const Vector& frozen) const;

  /// Full slot vector from decision and frozen values.
  Vector merge(const Vector& z, const Vector& frozen) const;
  /// Stacked states x_1 .. x_N.
  Vector predict(const Vector& x, const Vector& moves) const;
  /// J by forward evaluation.
  double cost(const Vector& x, const Vector& moves) const;
  /// Largest violation of the constraints of this horizon by a full plan.
  double violation(const Vector& x, const Vector& moves) const;

  const PredictionMatrices& prediction() const { return pred_; }
  const HessianFactor& factor() const { return factor_; }
  const std::vector<int>& free_slots() const { return free_; }
  const std::vector<int>& frozen_slots() const { return frozen_; }
  int phase() const { return phase_; }
  int variables() const { return static_cast<int>(free_.size()); }

 private:
  struct Rows {
    Matrix a_free;    // rows x v
    Matrix a_frozen;  // rows x frozen
    Matrix a_state;   // rows x n, coefficient of the initial state
    Vector b;
    std::vector<RowTag> tags;
  };

  void add_rows(Rows& rows, const Matrix& h, const Vector& offsets, RowKind kind, int step,
                const Matrix& g_block, const Matrix& phi_block);

  DiscretePlant plant_;
  int phase_;
  int steps_;
  HorizonCost cost_;
  PredictionMatrices pred_;
  std::vector<int> free_;
  std::vector<int> frozen_;
  Matrix g_free_;
  Matrix g_frozen_;
  Matrix hessian_;
  Matrix grad_map_;  // gradient = grad_map_ * c, c = Phi x + G_frozen f
  HessianFactor factor_;
  Rows in_;
  Rows eq_;
  std::vector<Matrix> input_rows_;  // per step, H_U of that step (may have 0 rows)
  std::vector<Vector> input_offsets_;
};

/// Nominal multiplexed problem at time k: decision variables are the Nu
/// moves of channel sigma(k); the buffer supplies the other channels'
/// planned moves (group order g_2 .. g_m).
QpInstance condense_nominal(const DiscretePlant& plant, const Schedule& schedule, long k,
                            int control_horizon, const Matrix& q, double r,
                            const Matrix& terminal_weight, const HPolytope& x_set,
                            const std::vector<std::optional<HPolytope>>& u_per_phase,
                            const std::optional<HPolytope>& terminal, const Vector& x,
                            const Vector& plan_buffer);

/// As condense_nominal, with constraint rows taken from tightened sets and
/// the already corrected buffer.
QpInstance condense_robust(const DiscretePlant& plant, const Schedule& schedule, long k,
                           int control_horizon, const Matrix& q, double r,
                           const Matrix& terminal_weight, const TightenedSets& sets,
                           const Vector& x, const Vector& corrected_buffer);

/// All slots of the horizon are decision variables.
QpInstance condense_all_channels(const DiscretePlant& plant, const MovePattern& pattern,
                                 int phase, int steps, const Matrix& q, double r,
                                 const Matrix& terminal_weight, const TightenedSets& sets,
                                 const Vector& x);

}  // namespace mmpc
