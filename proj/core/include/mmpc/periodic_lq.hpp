#pragma once

#include <vector>

#include "mmpc/lti_model.hpp"

namespace mmpc {

/// One phase of a periodic LQ problem  x+ = A x + B u,  stage cost x'Qx + u'Ru.
/// B may have zero columns (a phase in which nothing moves).
struct PeriodicStage {
  Matrix a;
  Matrix b;
  Matrix q;
  Matrix r;
};

/// Periodic Riccati solution; p_bar[p] is the cost-to-go at phase p.
struct PeriodicRiccati {
  std::vector<Matrix> p_bar;
  int sweeps = 0;

  int period() const { return static_cast<int>(p_bar.size()); }
  const Matrix& at(int phase) const;
};

/// Per-phase feedback u = -K[p] x, one row per channel moved at phase p.
struct PeriodicGains {
  std::vector<Matrix> k;
};

PeriodicRiccati solve_periodic_riccati(const std::vector<PeriodicStage>& stages,
                                       double tol = 1e-11, int max_sweeps = 10000);

PeriodicRiccati solve_dpre(const DiscretePlant& plant, const MovePattern& pattern,
                           const Matrix& q, double r, double tol = 1e-11,
                           int max_sweeps = 10000);

PeriodicRiccati solve_dpre(const DiscretePlant& plant, const Schedule& schedule,
                           const Matrix& q, double r, double tol = 1e-11,
                           int max_sweeps = 10000);

PeriodicGains periodic_gains(const std::vector<PeriodicStage>& stages,
                             const PeriodicRiccati& ric);

PeriodicGains periodic_gains(const DiscretePlant& plant, const Schedule& schedule,
                             const PeriodicRiccati& ric, double r);

/// Largest absolute residual of the Riccati recursion over all phases.
double riccati_residual(const std::vector<PeriodicStage>& stages,
                        const PeriodicRiccati& ric);

/// Product of one period of closed-loop maps, starting at `phase`.
Matrix monodromy(const std::vector<Matrix>& closed_loop, int phase = 0);

std::vector<Matrix> closed_loop_maps(const std::vector<PeriodicStage>& stages,
                                     const PeriodicGains& gains);

/// x' P_phase x.
double terminal_cost(const PeriodicRiccati& ric, int phase, const Vector& x);

/// Solves P = Psi' P Psi + S by doubling.  Requires spectral radius < 1.
Matrix solve_stein(const Matrix& psi, const Matrix& s, double tol = 1e-12);

/// Per-phase cost-to-go of  xi+ = Phi_p xi  with cost charged as
/// u_p' R_p u_p + xi_next' Q xi_next  where u_p = K_p xi (current state is
/// not charged).  Returns P_p for each phase.
std::vector<Matrix> periodic_lyapunov(const std::vector<Matrix>& phi,
                                      const std::vector<Matrix>& input_weight,
                                      const std::vector<Matrix>& state_weight);

/// Closed loop of a multiplexed controller with the plan buffer in the state:
/// xi = [x; buffered moves of channels sigma(k+1) ... sigma(k+m-1)].
struct AugmentedSystem {
  int states = 0;           // plant states n
  int buffer = 0;           // (m - 1)(Nu - 1)
  int control_horizon = 1;  // Nu
  int period = 1;           // m
  Matrix a_tilde;
  std::vector<Matrix> b_tilde;  // per phase, (n + buffer) x Nu
  std::vector<Matrix> k_tilde;  // per phase, Nu x (n + buffer); may be empty
  Matrix q_tilde;
  Matrix r_tilde;

  int dim() const { return states + buffer; }
};

AugmentedSystem build_augmented(const DiscretePlant& plant, const Schedule& schedule,
                                int control_horizon, const Matrix& q, double r,
                                std::vector<Matrix> feedback = {});

/// Gains of the unconstrained multiplexed controller obtained by condensing
/// its finite-horizon problem: own moves = -K_p xi.
std::vector<Matrix> mmpc_law_gains(const DiscretePlant& plant, const Schedule& schedule,
                                   int control_horizon, const Matrix& q, double r,
                                   const PeriodicRiccati& terminal);

struct CostMatrices {
  std::vector<Matrix> p_xi;
  std::vector<Matrix> p_u;
  std::vector<Matrix> p_total;
  std::vector<Matrix> hat_p_xi;
  std::vector<Matrix> hat_p_u;
  std::vector<Matrix> hat_p;
};

CostMatrices mmpc_cost_matrices(const AugmentedSystem& aug);

/// Periodic LQ gains on the augmented system (buffer entries free, but
/// uncharged unless the weights say otherwise).
std::vector<Matrix> unconstrained_mmpc_gains(const AugmentedSystem& aug, double tol = 1e-11);

/// Sorted eigenvalues of the symmetric difference a - b.
Vector compare_designs(const Matrix& hat_p_a, const Matrix& hat_p_b);

/// x0 = B d.
Vector step_disturbance_state(const DiscretePlant& plant, const Vector& d);

/// One row of the phase-comparison analysis.
struct CostComparisonRow {
  int control_horizon = 1;
  Vector eigenvalues;
  double cost_difference = 0.0;
};

/// Designs the multiplexed controller for each Nu and compares the plant
/// blocks of its cost matrices between two phases.
std::vector<CostComparisonRow> compare_phases(const DiscretePlant& plant,
                                              const Schedule& schedule,
                                              const Matrix& q, double r,
                                              const std::vector<int>& nu_list,
                                              int phase_a, int phase_b,
                                              const Vector& x0);

}  // namespace mmpc
