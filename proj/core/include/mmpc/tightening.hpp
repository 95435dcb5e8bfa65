#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmpc/lti_model.hpp"
#include "mmpc/polytope.hpp"
#include "mmpc/qp.hpp"

namespace mmpc {

/// Weights used to pick the recovery moves M among all that return the
/// perturbed prediction to the nominal one within the horizon.
struct PolicyWeights {
  Matrix q;                 // state weight along the recovery
  double r = 1.0;           // weight on the recovery moves
  Matrix constraint_rows;   // rows whose excursion is penalized (may be empty)
  double constraint_weight = 1.0;
};

/// Disturbance-feedback policy per solve phase p.  A state perturbation d
/// at a solve instant (lying in the span of the disturbance responses over
/// one solve interval) is undone by adding m[p][i] d to the move(s) planned
/// at relative step i, after which the prediction differs by l[p][i] d.
struct RecoveryPolicy {
  int steps = 0;
  int period = 1;
  int solve_interval = 1;
  int zero_from = 0;       // l[p][i] = 0 and m[p][i] = 0 for i >= zero_from
  Matrix basis;            // orthonormal basis of the perturbation span
  std::vector<std::vector<Matrix>> l;  // [p][i], i = 0 .. N,     n x n
  std::vector<std::vector<Matrix>> m;  // [p][i], i = 0 .. N-1,   width(p+i) x n
  std::vector<Matrix> k;               // terminal gains per phase (zero)
  double residual = 0.0;               // largest |L_{zero_from}| before zeroing
};

/// Builds the recovery policy that drives L to zero within the horizon.
/// Throws DesignError when the perturbation cannot be cancelled in time.
RecoveryPolicy deadbeat_policy(const DiscretePlant& plant, const MovePattern& pattern, int steps,
                               const PolicyWeights& weights);

struct EmptySetReport {
  RowKind kind = RowKind::kState;
  int step = 0;
  int phase = 0;
};

/// Families of tightened sets for each solve phase p:
///   x_sets[p][i], i = 0 .. N       (state at relative step i)
///   u_sets[p][i], i = 0 .. N+s-1   (moves at relative step i, over the
///                                   channels moved at phase p+i)
///   t_sets[p]                      (terminal set, not tightened)
/// Phases that never solve keep empty lists.
struct TightenedSets {
  int steps = 0;
  int period = 1;
  int solve_interval = 1;
  std::vector<std::vector<HPolytope>> x_sets;
  std::vector<std::vector<std::optional<HPolytope>>> u_sets;
  std::vector<std::optional<HPolytope>> t_sets;
  std::vector<EmptySetReport> empty;

  bool feasible() const { return empty.empty(); }
};

/// Tightening by the policy for disturbances E w, w in W.  With W = {0} the
/// sets equal the originals.  u_per_phase entries may be absent.
TightenedSets build_tightened_sets(const RecoveryPolicy& policy, const DiscretePlant& plant,
                                   const MovePattern& pattern, const HPolytope& x_set,
                                   const std::vector<std::optional<HPolytope>>& u_per_phase,
                                   const std::optional<HPolytope>& terminal,
                                   const HPolytope& w_set);

/// Untightened families (nominal design).
TightenedSets nominal_sets(const DiscretePlant& plant, const MovePattern& pattern, int steps,
                           const HPolytope& x_set,
                           const std::vector<std::optional<HPolytope>>& u_per_phase,
                           const std::optional<HPolytope>& terminal);

struct InvarianceReport {
  bool passed = true;
  std::string message;
  Vector witness;
  int phase = -1;
};

/// Checks the terminal ingredients: every sampled x in T_p, pushed one solve
/// interval ahead under the terminal gain with any vertex disturbance, lands
/// in T_{p+s}; the terminal moves are admissible; T_p lies inside X_N.
InvarianceReport verify_terminal_invariance(const TightenedSets& sets, const RecoveryPolicy& policy,
                                            const DiscretePlant& plant, const MovePattern& pattern,
                                            const HPolytope& w_set, int samples = 64,
                                            unsigned seed = 1);

/// Checks that X_I is periodically invariant under u = -K_p x with the
/// input and state constraints satisfied.
InvarianceReport verify_periodic_invariance(const std::vector<HPolytope>& x_invariant,
                                            const std::vector<Matrix>& gains,
                                            const DiscretePlant& plant, const Schedule& schedule,
                                            const HPolytope& x_set,
                                            const std::vector<std::optional<HPolytope>>& u_per_phase,
                                            int samples = 64, unsigned seed = 1);

/// Points of P used as samples: box corners when P is a box, otherwise LP
/// maximizers along random directions (plus the origin when inside).
std::vector<Vector> sample_extreme_points(const HPolytope& p, int samples, unsigned seed);

}  // namespace mmpc
