#include "mmpc/periodic_lq.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace mmpc {
namespace {

int wrap(int phase, int period) {
  int p = phase % period;
  return p < 0 ? p + period : p;
}

// (B'PB + R)^{-1} B'PA, regularized only when the bracket is numerically singular.
Matrix riccati_gain(const PeriodicStage& st, const Matrix& p_next) {
  const Matrix bp = st.b.transpose() * p_next;
  Matrix s = bp * st.b + st.r;
  s = 0.5 * (s + s.transpose());
  Eigen::LDLT<Matrix> ldlt(s);
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  const Vector d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-14 * scale) {
    s += 1e-12 * scale * Matrix::Identity(s.rows(), s.cols());
    ldlt.compute(s);
  }
  return ldlt.solve(bp * st.a);
}

Matrix riccati_map(const PeriodicStage& st, const Matrix& p_next) {
  Matrix p = st.a.transpose() * p_next * st.a + st.q;
  if (st.b.cols() > 0) p -= st.a.transpose() * p_next * st.b * riccati_gain(st, p_next);
  return p;
}

std::vector<PeriodicStage> plant_stages(const DiscretePlant& plant, const MovePattern& pattern,
                                        const Matrix& q, double r) {
  plant.validate();
  if (q.rows() != plant.states() || q.cols() != plant.states())
    throw DesignError("solve_dpre: q must be n x n");
  if (!(r > 0.0)) throw DesignError("solve_dpre: r must be positive");
  std::vector<PeriodicStage> stages(pattern.period());
  for (int p = 0; p < pattern.period(); ++p) {
    const auto& ch = pattern.channels(p);
    Matrix b(plant.states(), static_cast<Eigen::Index>(ch.size()));
    for (size_t j = 0; j < ch.size(); ++j) b.col(static_cast<Eigen::Index>(j)) = plant.b.col(ch[j]);
    stages[p] = {plant.a, b, q, r * Matrix::Identity(b.cols(), b.cols())};
  }
  return stages;
}

}  // namespace

const Matrix& PeriodicRiccati::at(int phase) const { return p_bar[wrap(phase, period())]; }

PeriodicRiccati solve_periodic_riccati(const std::vector<PeriodicStage>& stages, double tol,
                                       int max_sweeps) {
  if (stages.empty()) throw DesignError("solve_periodic_riccati: no stages");
  const int period = static_cast<int>(stages.size());
  const auto n = stages[0].a.rows();
  for (const auto& st : stages) {
    if (st.a.rows() != n || st.a.cols() != n || st.q.rows() != n || st.b.rows() != n ||
        st.r.rows() != st.b.cols())
      throw DesignError("solve_periodic_riccati: inconsistent stage dimensions");
  }

  PeriodicRiccati ric;
  ric.p_bar.assign(period, Matrix());
  for (int p = 0; p < period; ++p) ric.p_bar[p] = 0.5 * (stages[p].q + stages[p].q.transpose());

  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double change = 0.0;
    double size = 1.0;
    for (int p = period - 1; p >= 0; --p) {
      Matrix next = riccati_map(stages[p], ric.p_bar[wrap(p + 1, period)]);
      const double norm = std::max(1.0, next.cwiseAbs().maxCoeff());
      if ((next - next.transpose()).cwiseAbs().maxCoeff() > 1e-8 * norm)
        throw DesignError("solve_dpre: Riccati iterate lost symmetry");
      next = 0.5 * (next + next.transpose());
      change = std::max(change, (next - ric.p_bar[p]).cwiseAbs().maxCoeff());
      size = std::max(size, norm);
      ric.p_bar[p] = std::move(next);
    }
    if (!std::isfinite(change)) throw DesignError("solve_dpre: iteration diverged");
    if (change <= tol * size) {
      ric.sweeps = sweep;
      return ric;
    }
  }
  throw DesignError("solve_dpre: no convergence within the sweep limit");
}

PeriodicRiccati solve_dpre(const DiscretePlant& plant, const MovePattern& pattern,
                           const Matrix& q, double r, double tol, int max_sweeps) {
  if (!is_stabilizable(plant.a, plant.b)) throw DesignError("solve_dpre: plant is not stabilizable");
  return solve_periodic_riccati(plant_stages(plant, pattern, q, r), tol, max_sweeps);
}

PeriodicRiccati solve_dpre(const DiscretePlant& plant, const Schedule& schedule, const Matrix& q,
                           double r, double tol, int max_sweeps) {
  return solve_dpre(plant, MovePattern::multiplexed(Schedule{schedule.m, 0}), q, r, tol,
                    max_sweeps);
}

PeriodicGains periodic_gains(const std::vector<PeriodicStage>& stages,
                             const PeriodicRiccati& ric) {
  const int period = static_cast<int>(stages.size());
  if (ric.period() != period) throw DesignError("periodic_gains: period mismatch");
  PeriodicGains gains;
  gains.k.resize(period);
  for (int p = 0; p < period; ++p) {
    const auto& st = stages[p];
    if (st.b.cols() == 0) {
      gains.k[p] = Matrix::Zero(0, st.a.cols());
    } else {
      gains.k[p] = riccati_gain(st, ric.at(p + 1));
    }
  }
  return gains;
}

PeriodicGains periodic_gains(const DiscretePlant& plant, const Schedule& schedule,
                             const PeriodicRiccati& ric, double r) {
  const auto pattern = MovePattern::multiplexed(Schedule{schedule.m, 0});
  return periodic_gains(plant_stages(plant, pattern, Matrix::Zero(plant.states(), plant.states()), r),
                        ric);
}

double riccati_residual(const std::vector<PeriodicStage>& stages, const PeriodicRiccati& ric) {
  double worst = 0.0;
  for (int p = 0; p < static_cast<int>(stages.size()); ++p) {
    const Matrix lhs = riccati_map(stages[p], ric.at(p + 1));
    worst = std::max(worst, (lhs - ric.at(p)).cwiseAbs().maxCoeff());
  }
  return worst;
}

std::vector<Matrix> closed_loop_maps(const std::vector<PeriodicStage>& stages,
                                     const PeriodicGains& gains) {
  std::vector<Matrix> out;
  for (size_t p = 0; p < stages.size(); ++p) {
    out.push_back(stages[p].b.cols() == 0 ? stages[p].a
                                          : Matrix(stages[p].a - stages[p].b * gains.k[p]));
  }
  return out;
}

Matrix monodromy(const std::vector<Matrix>& closed_loop, int phase) {
  if (closed_loop.empty()) throw DesignError("monodromy: empty period");
  const int period = static_cast<int>(closed_loop.size());
  Matrix t = Matrix::Identity(closed_loop[0].rows(), closed_loop[0].cols());
  for (int j = 0; j < period; ++j) t = closed_loop[wrap(phase + j, period)] * t;
  return t;
}

double terminal_cost(const PeriodicRiccati& ric, int phase, const Vector& x) {
  return x.dot(ric.at(phase) * x);
}

Matrix solve_stein(const Matrix& psi, const Matrix& s, double tol) {
  if (spectral_radius(psi) >= 1.0) throw DesignError("solve_stein: closed loop is not stable");
  Matrix p = s;
  Matrix a = psi;
  Matrix q = s;
  for (int iter = 0; iter < 200; ++iter) {
    // After iteration j, p sums the first 2^(j+1) terms of the series.
    const Matrix update = a.transpose() * p * a;
    p += update;
    p = 0.5 * (p + p.transpose());
    a = a * a;
    if (update.cwiseAbs().maxCoeff() <= tol * std::max(1.0, p.cwiseAbs().maxCoeff())) return p;
  }
  throw DesignError("solve_stein: doubling did not converge");
}

std::vector<Matrix> periodic_lyapunov(const std::vector<Matrix>& phi,
                                      const std::vector<Matrix>& input_weight,
                                      const std::vector<Matrix>& state_weight) {
  const int period = static_cast<int>(phi.size());
  if (period == 0 || static_cast<int>(input_weight.size()) != period ||
      static_cast<int>(state_weight.size()) != period)
    throw DesignError("periodic_lyapunov: per-phase lists must have equal, nonzero length");
  const auto d = phi[0].rows();
  std::vector<Matrix> out(period);
  for (int p = 0; p < period; ++p) {
    Matrix t = Matrix::Identity(d, d);
    Matrix s = Matrix::Zero(d, d);
    for (int j = 0; j < period; ++j) {
      const int ph = wrap(p + j, period);
      s += t.transpose() * input_weight[ph] * t;
      t = phi[ph] * t;
      s += t.transpose() * state_weight[ph] * t;
    }
    out[p] = solve_stein(t, 0.5 * (s + s.transpose()));
  }
  return out;
}

AugmentedSystem build_augmented(const DiscretePlant& plant, const Schedule& schedule,
                                int control_horizon, const Matrix& q, double r,
                                std::vector<Matrix> feedback) {
  plant.validate();
  if (control_horizon < 1) throw DesignError("build_augmented: Nu must be at least 1");
  if (schedule.m > plant.channels()) throw DesignError("build_augmented: too many channels");
  AugmentedSystem aug;
  aug.states = plant.states();
  aug.period = schedule.m;
  aug.control_horizon = control_horizon;
  const int n = aug.states;
  const int g = control_horizon - 1;
  aug.buffer = (schedule.m - 1) * g;
  const int d = aug.dim();

  // Group j (j = 1 .. m-1) holds the moves planned at relative steps j + i m.
  // One step later group j+1 becomes group j; the newest own-channel plan
  // becomes the last group.
  aug.a_tilde = Matrix::Zero(d, d);
  aug.a_tilde.topLeftCorner(n, n) = plant.a;
  for (int j = 0; j + 1 < schedule.m - 1; ++j)
    aug.a_tilde.block(n + j * g, n + (j + 1) * g, g, g).setIdentity();

  aug.b_tilde.resize(schedule.m);
  for (int p = 0; p < schedule.m; ++p) {
    Matrix b = Matrix::Zero(d, control_horizon);
    b.block(0, 0, n, 1) = plant.b.col(p);
    if (g > 0 && schedule.m > 1) b.block(n + (schedule.m - 2) * g, 1, g, g).setIdentity();
    aug.b_tilde[p] = b;
  }

  aug.q_tilde = Matrix::Zero(d, d);
  if (q.size() > 0) aug.q_tilde.topLeftCorner(n, n) = q;
  aug.r_tilde = Matrix::Zero(control_horizon, control_horizon);
  aug.r_tilde(0, 0) = r;

  if (!feedback.empty()) {
    if (static_cast<int>(feedback.size()) != schedule.m)
      throw DesignError("build_augmented: one feedback gain per phase required");
    for (const auto& k : feedback)
      if (k.rows() != control_horizon || k.cols() != d)
        throw DesignError("build_augmented: feedback gain has the wrong shape");
  }
  aug.k_tilde = std::move(feedback);
  return aug;
}

std::vector<Matrix> mmpc_law_gains(const DiscretePlant& plant, const Schedule& schedule,
                                   int control_horizon, const Matrix& q, double r,
                                   const PeriodicRiccati& terminal) {
  const int m = schedule.m;
  const int n = plant.states();
  const int steps = horizon_steps(control_horizon, m);
  if (terminal.period() != m) throw DesignError("mmpc_law_gains: terminal cost period mismatch");
  const auto pattern = MovePattern::multiplexed(Schedule{m, 0});
  std::vector<Matrix> gains(m);
  for (int p = 0; p < m; ++p) {
    const auto pm = build_prediction(plant, pattern, p, steps);
    // Stage weights on x_1 .. x_{N-1}, terminal weight on x_N.
    Matrix qbar = Matrix::Zero(steps * n, steps * n);
    for (int i = 0; i + 1 < steps; ++i) qbar.block(i * n, i * n, n, n) = q;
    qbar.bottomRightCorner(n, n) = terminal.at(p + steps);

    std::vector<int> own = pm.groups[0];
    std::vector<int> buf;
    for (int j = 1; j < m; ++j) buf.insert(buf.end(), pm.groups[j].begin(), pm.groups[j].end());
    Matrix g_own(pm.g.rows(), own.size());
    for (size_t c = 0; c < own.size(); ++c) g_own.col(c) = pm.g.col(own[c]);
    Matrix g_buf(pm.g.rows(), buf.size());
    for (size_t c = 0; c < buf.size(); ++c) g_buf.col(c) = pm.g.col(buf[c]);

    const Matrix h = g_own.transpose() * qbar * g_own +
                     r * Matrix::Identity(own.size(), own.size());
    Matrix rhs(own.size(), n + buf.size());
    rhs << g_own.transpose() * qbar * pm.phi, g_own.transpose() * qbar * g_buf;
    gains[p] = h.ldlt().solve(rhs);
  }
  return gains;
}

CostMatrices mmpc_cost_matrices(const AugmentedSystem& aug) {
  if (static_cast<int>(aug.k_tilde.size()) != aug.period)
    throw DesignError("mmpc_cost_matrices: augmented system has no feedback attached");
  std::vector<Matrix> phi(aug.period), wu(aug.period), wx(aug.period, aug.q_tilde);
  for (int p = 0; p < aug.period; ++p) {
    phi[p] = aug.a_tilde - aug.b_tilde[p] * aug.k_tilde[p];
    wu[p] = aug.k_tilde[p].transpose() * aug.r_tilde * aug.k_tilde[p];
  }
  if (spectral_radius(monodromy(phi)) >= 1.0)
    throw DesignError("mmpc_cost_matrices: closed loop is not stable");
  const std::vector<Matrix> zero(aug.period, Matrix::Zero(aug.dim(), aug.dim()));

  CostMatrices out;
  out.p_xi = periodic_lyapunov(phi, zero, wx);
  out.p_u = periodic_lyapunov(phi, wu, zero);
  out.p_total = periodic_lyapunov(phi, wu, wx);
  for (int p = 0; p < aug.period; ++p) {
    out.hat_p_xi.push_back(out.p_xi[p].topLeftCorner(aug.states, aug.states));
    out.hat_p_u.push_back(out.p_u[p].topLeftCorner(aug.states, aug.states));
    out.hat_p.push_back(out.p_total[p].topLeftCorner(aug.states, aug.states));
  }
  return out;
}

std::vector<Matrix> unconstrained_mmpc_gains(const AugmentedSystem& aug, double tol) {
  std::vector<PeriodicStage> stages(aug.period);
  for (int p = 0; p < aug.period; ++p)
    stages[p] = {aug.a_tilde, aug.b_tilde[p], aug.q_tilde, aug.r_tilde};
  const auto ric = solve_periodic_riccati(stages, tol, 10000);
  return periodic_gains(stages, ric).k;
}

Vector compare_designs(const Matrix& hat_p_a, const Matrix& hat_p_b) {
  if (hat_p_a.rows() != hat_p_b.rows() || hat_p_a.cols() != hat_p_b.cols())
    throw DesignError("compare_designs: dimension mismatch");
  const Matrix diff = hat_p_a - hat_p_b;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (diff + diff.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

Vector step_disturbance_state(const DiscretePlant& plant, const Vector& d) {
  if (d.size() != plant.channels()) throw DesignError("step_disturbance_state: d must have m entries");
  return plant.b * d;
}

std::vector<CostComparisonRow> compare_phases(const DiscretePlant& plant, const Schedule& schedule,
                                              const Matrix& q, double r,
                                              const std::vector<int>& nu_list, int phase_a,
                                              int phase_b, const Vector& x0) {
  const auto ric = solve_dpre(plant, schedule, q, r);
  std::vector<CostComparisonRow> rows;
  for (int nu : nu_list) {
    auto gains = mmpc_law_gains(plant, schedule, nu, q, r, ric);
    const auto aug = build_augmented(plant, schedule, nu, q, r, std::move(gains));
    const auto cm = mmpc_cost_matrices(aug);
    const Matrix& a = cm.hat_p[wrap(phase_a, schedule.m)];
    const Matrix& b = cm.hat_p[wrap(phase_b, schedule.m)];
    CostComparisonRow row;
    row.control_horizon = nu;
    row.eigenvalues = compare_designs(a, b);
    if (x0.size() == plant.states()) row.cost_difference = x0.dot((a - b) * x0);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mmpc
