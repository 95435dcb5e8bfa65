#include "mmpc/tightening.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/SVD>

namespace mmpc {
namespace {

int wrap(int phase, int period) {
  int p = phase % period;
  return p < 0 ? p + period : p;
}

Matrix phase_inputs(const DiscretePlant& plant, const MovePattern& pattern, int phase) {
  const auto& ch = pattern.channels(phase);
  Matrix b(plant.states(), static_cast<Eigen::Index>(ch.size()));
  for (size_t j = 0; j < ch.size(); ++j) b.col(static_cast<Eigen::Index>(j)) = plant.b.col(ch[j]);
  return b;
}

// Orthonormal basis of span{A^j E : j < s}.
Matrix perturbation_basis(const DiscretePlant& plant, int s) {
  const int n = plant.states();
  const auto nw = plant.e.cols();
  if (nw == 0) return Matrix::Zero(n, 0);
  Matrix span(n, nw * s);
  Matrix aj = Matrix::Identity(n, n);
  for (int j = 0; j < s; ++j) {
    span.middleCols(j * nw, nw) = aj * plant.e;
    aj = plant.a * aj;
  }
  Eigen::JacobiSVD<Matrix> svd(span, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return Matrix::Zero(n, 0);
  int rank = 0;
  while (rank < sv.size() && sv(rank) > 1e-12 * sv(0)) ++rank;
  return svd.matrixU().leftCols(rank);
}

std::vector<Matrix> disturbance_powers(const DiscretePlant& plant, int s) {
  std::vector<Matrix> out;
  Matrix aj_e = plant.e;
  for (int j = 0; j < s; ++j) {
    out.push_back(aj_e);
    aj_e = plant.a * aj_e;
  }
  return out;
}

}  // namespace

RecoveryPolicy deadbeat_policy(const DiscretePlant& plant, const MovePattern& pattern, int steps,
                               const PolicyWeights& weights) {
  plant.validate();
  const int n = plant.states();
  const int s = pattern.solve_interval();
  const int period = pattern.period();
  if (steps < s) throw DesignError("deadbeat_policy: horizon shorter than the solve interval");

  RecoveryPolicy pol;
  pol.steps = steps;
  pol.period = period;
  pol.solve_interval = s;
  pol.zero_from = steps - s + 1;
  pol.basis = perturbation_basis(plant, s);
  pol.l.assign(period, {});
  pol.m.assign(period, {});
  pol.k.assign(period, Matrix());
  const int nb = static_cast<int>(pol.basis.cols());
  const int nd = pol.zero_from;

  Matrix wq = Matrix::Zero(n, n);
  if (weights.q.size() > 0) wq = weights.q;
  wq += 1e-6 * Matrix::Identity(n, n);
  if (weights.constraint_rows.size() > 0)
    wq += weights.constraint_weight * weights.constraint_rows.transpose() * weights.constraint_rows;

  for (int p = 0; p < period; ++p) {
    if (!pattern.is_solve_phase(p)) continue;
    pol.k[p] = Matrix::Zero(pattern.width(p + steps), n);
    // Slots that may carry corrections: steps 0 .. nd-1.
    std::vector<MoveSlot> slots;
    for (int i = 0; i < nd; ++i)
      for (int c : pattern.channels(p + i)) slots.push_back({i, c});
    const int nv = static_cast<int>(slots.size());

    // L_i V = A^i V + G_i Mhat with G_{i+1} = A G_i + [B columns of step i].
    Matrix g = Matrix::Zero(n, nv);
    Matrix aiv = pol.basis;
    Matrix hess = weights.r * Matrix::Identity(nv, nv);
    Matrix lin = Matrix::Zero(nv, nb);
    std::vector<Matrix> g_hist{g};
    std::vector<Matrix> a_hist{aiv};
    int slot = 0;
    for (int i = 0; i < nd; ++i) {
      g = plant.a * g;
      while (slot < nv && slots[slot].step == i) {
        g.col(slot) = plant.b.col(slots[slot].channel);
        ++slot;
      }
      aiv = plant.a * aiv;
      g_hist.push_back(g);
      a_hist.push_back(aiv);
      if (i + 1 < nd) {
        hess += g.transpose() * wq * g;
        lin += g.transpose() * wq * aiv;
      }
    }
    // Minimize the weighted recovery cost subject to L_nd V = 0 by
    // parametrizing the feasible set as Mp + Z y.
    const Matrix& geq = g_hist[nd];
    const Matrix beq = -a_hist[nd];
    Matrix mhat = Matrix::Zero(nv, nb);
    if (nb > 0) {
      Eigen::JacobiSVD<Matrix> svd(geq, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      int rank = 0;
      while (rank < sv.size() && sv(rank) > 1e-10 * std::max(1.0, sv(0))) ++rank;
      const Matrix u1 = svd.matrixU().leftCols(rank);
      const Matrix v1 = svd.matrixV().leftCols(rank);
      const Matrix mp = v1 * sv.head(rank).cwiseInverse().asDiagonal() * u1.transpose() * beq;
      const Matrix z = svd.matrixV().rightCols(nv - rank);
      mhat = mp;
      if (z.cols() > 0) {
        const Matrix reduced = z.transpose() * hess * z;
        const Matrix y = reduced.ldlt().solve(-z.transpose() * (hess * mp + lin));
        mhat += z * y;
      }
      const double scale = std::max(1.0, beq.cwiseAbs().maxCoeff());
      pol.residual = std::max(pol.residual, (geq * mhat - beq).cwiseAbs().maxCoeff() / scale);
    }
    if (pol.residual > 1e-8) {
      std::ostringstream msg;
      msg << "deadbeat_policy: perturbation cannot be cancelled within " << steps
          << " steps at phase " << p << " (residual " << pol.residual
          << "); use a longer horizon or supply a policy";
      throw DesignError(msg.str());
    }

    const Matrix vt = pol.basis.transpose();
    pol.l[p].assign(steps + 1, Matrix::Zero(n, n));
    for (int i = 0; i < nd; ++i) pol.l[p][i] = (a_hist[i] + g_hist[i] * mhat) * vt;
    pol.m[p].resize(steps);
    for (int i = 0; i < steps; ++i) pol.m[p][i] = Matrix::Zero(pattern.width(p + i), n);
    for (int k = 0; k < nv; ++k) {
      const auto& sl = slots[k];
      const auto& ch = pattern.channels(p + sl.step);
      const auto pos = std::find(ch.begin(), ch.end(), sl.channel) - ch.begin();
      pol.m[p][sl.step].row(pos) = mhat.row(k) * vt;
    }
  }
  return pol;
}

TightenedSets build_tightened_sets(const RecoveryPolicy& policy, const DiscretePlant& plant,
                                   const MovePattern& pattern, const HPolytope& x_set,
                                   const std::vector<std::optional<HPolytope>>& u_per_phase,
                                   const std::optional<HPolytope>& terminal,
                                   const HPolytope& w_set) {
  const int period = pattern.period();
  const int s = pattern.solve_interval();
  const int steps = policy.steps;
  if (policy.period != period || policy.solve_interval != s)
    throw DesignError("build_tightened_sets: policy does not match the move pattern");
  if (x_set.dim() != plant.states()) throw DesignError("build_tightened_sets: X has the wrong dimension");
  if (w_set.dim() != plant.disturbances())
    throw DesignError("build_tightened_sets: W dimension must equal the number of disturbance inputs");
  if (static_cast<int>(u_per_phase.size()) != period)
    throw DesignError("build_tightened_sets: one (possibly absent) input set per phase required");
  for (int p = 0; p < period; ++p)
    if (u_per_phase[p] && u_per_phase[p]->dim() != pattern.width(p))
      throw DesignError("build_tightened_sets: input set dimension must equal the moves of its phase");

  const auto ajes = disturbance_powers(plant, s);
  const Matrix& hx = x_set.H();

  TightenedSets out;
  out.steps = steps;
  out.period = period;
  out.solve_interval = s;
  out.x_sets.assign(period, {});
  out.u_sets.assign(period, {});
  out.t_sets.assign(period, std::nullopt);

  std::vector<std::vector<Vector>> xm(period), um(period);
  for (int i = 0; i <= steps + s - 1; ++i) {
    for (int p = 0; p < period; ++p) {
      if (!pattern.is_solve_phase(p)) continue;
      const int pn = wrap(p + s, period);
      if (i <= steps) {
        Vector margin;
        if (i < s) {
          margin = i == 0 ? Vector(Vector::Zero(hx.rows()))
                          : Vector(xm[p][i - 1] + row_supports(hx * ajes[i - 1], w_set));
        } else {
          margin = xm[pn][i - s];
          const Matrix& l = policy.l[pn][i - s];
          for (const auto& aje : ajes) margin += row_supports(hx * l * aje, w_set);
        }
        xm[p].push_back(margin);
      }
      const auto& uset = u_per_phase[wrap(p + i, period)];
      Vector umargin;
      if (uset) {
        if (i < s) {
          umargin = Vector::Zero(uset->rows());
        } else {
          umargin = um[pn][i - s];
          const Matrix& m = policy.m[pn][i - s];
          for (const auto& aje : ajes) umargin += row_supports(uset->H() * m * aje, w_set);
        }
      }
      um[p].push_back(umargin);
    }
  }

  for (int p = 0; p < period; ++p) {
    if (!pattern.is_solve_phase(p)) continue;
    for (int i = 0; i <= steps; ++i) {
      HPolytope xs = x_set.with_offsets(x_set.h() - xm[p][i]);
      if ((xm[p][i].array() > 0.0).any() && xs.is_empty())
        out.empty.push_back({RowKind::kState, i, p});
      out.x_sets[p].push_back(std::move(xs));
    }
    for (int i = 0; i <= steps + s - 1; ++i) {
      const auto& uset = u_per_phase[wrap(p + i, period)];
      if (!uset) {
        out.u_sets[p].push_back(std::nullopt);
        continue;
      }
      HPolytope us = uset->with_offsets(uset->h() - um[p][i]);
      if ((um[p][i].array() > 0.0).any() && us.is_empty())
        out.empty.push_back({RowKind::kInput, i, p});
      out.u_sets[p].push_back(std::move(us));
    }
    out.t_sets[p] = terminal;
    if (terminal && terminal->is_empty()) out.empty.push_back({RowKind::kTerminal, steps, p});
  }
  return out;
}

TightenedSets nominal_sets(const DiscretePlant& plant, const MovePattern& pattern, int steps,
                           const HPolytope& x_set,
                           const std::vector<std::optional<HPolytope>>& u_per_phase,
                           const std::optional<HPolytope>& terminal) {
  const int period = pattern.period();
  const int s = pattern.solve_interval();
  if (x_set.dim() != plant.states()) throw DesignError("nominal_sets: X has the wrong dimension");
  if (static_cast<int>(u_per_phase.size()) != period)
    throw DesignError("nominal_sets: one (possibly absent) input set per phase required");
  TightenedSets out;
  out.steps = steps;
  out.period = period;
  out.solve_interval = s;
  out.x_sets.assign(period, {});
  out.u_sets.assign(period, {});
  out.t_sets.assign(period, std::nullopt);
  for (int p = 0; p < period; ++p) {
    if (!pattern.is_solve_phase(p)) continue;
    out.x_sets[p].assign(steps + 1, x_set);
    for (int i = 0; i <= steps + s - 1; ++i) out.u_sets[p].push_back(u_per_phase[wrap(p + i, period)]);
    out.t_sets[p] = terminal;
  }
  if (x_set.is_empty()) out.empty.push_back({RowKind::kState, 0, 0});
  return out;
}

std::vector<Vector> sample_extreme_points(const HPolytope& p, int samples, unsigned seed) {
  std::vector<Vector> out;
  if (p.is_box() && p.dim() <= 12) {
    out = box_vertices(p);
    out.push_back(0.5 * (p.h().head(p.dim()) - p.h().tail(p.dim())));
    return out;
  }
  if (p.contains(Vector::Zero(p.dim()))) out.push_back(Vector::Zero(p.dim()));
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < samples; ++k) {
    Vector c(p.dim());
    for (int i = 0; i < p.dim(); ++i) c(i) = normal(rng);
    const LpResult lp = maximize_lp(c, p.H(), p.h());
    if (lp.status == LpStatus::kOptimal) out.push_back(lp.x);
  }
  return out;
}

InvarianceReport verify_terminal_invariance(const TightenedSets& sets, const RecoveryPolicy& policy,
                                            const DiscretePlant& plant, const MovePattern& pattern,
                                            const HPolytope& w_set, int samples, unsigned seed) {
  InvarianceReport rep;
  const int s = sets.solve_interval;
  const int steps = sets.steps;
  const auto ajes = disturbance_powers(plant, s);
  const auto w_points = sample_extreme_points(w_set, samples, seed + 7);
  const double tol = 1e-9;
  auto fail = [&rep](int phase, const std::string& msg, const Vector& witness) {
    rep.passed = false;
    rep.phase = phase;
    rep.message = msg;
    rep.witness = witness;
  };

  for (int p = 0; p < sets.period; ++p) {
    if (!pattern.is_solve_phase(p)) continue;
    const int pn = wrap(p + s, sets.period);
    const auto& t = sets.t_sets[p];
    if (!t) {
      fail(p, "no terminal set", Vector());
      return rep;
    }
    // T_p inside X_N.
    const HPolytope& xn = sets.x_sets[p][steps];
    for (int row = 0; row < xn.rows(); ++row) {
      const double sup = t->support(xn.H().row(row).transpose());
      if (sup > xn.h()(row) + tol) {
        fail(p, "terminal set not contained in the tightened state set at step N",
             xn.H().row(row).transpose());
        return rep;
      }
    }
    // Terminal moves (-K x with K = 0) admissible.
    for (int i = steps; i <= steps + s - 1; ++i) {
      const auto& u = sets.u_sets[p][i];
      if (u && !u->contains(Vector::Zero(u->dim()), tol)) {
        fail(p, "zero terminal move violates the tightened input set", Vector::Zero(u->dim()));
        return rep;
      }
    }
    // Robust invariance under the terminal map.
    Matrix acl = Matrix::Identity(plant.states(), plant.states());
    for (int j = 0; j < s; ++j) {
      const Matrix b = phase_inputs(plant, pattern, p + steps + j);
      Matrix k = Matrix::Zero(b.cols(), plant.states());
      if (j == 0 && policy.k[p].rows() == b.cols()) k = policy.k[p];
      acl = (plant.a - b * k) * acl;
    }
    const Matrix& l_end = policy.l[pn][steps];
    for (const auto& x : sample_extreme_points(*t, samples, seed)) {
      for (const auto& w : w_points) {
        Vector d = Vector::Zero(plant.states());
        for (int j = 0; j < s; ++j) d = plant.a * d + ajes[0] * w;
        const Vector next = acl * x + l_end * d;
        const auto& tn = sets.t_sets[pn];
        if (!tn || !tn->contains(next, tol)) {
          fail(p, "terminal set is not robustly invariant", x);
          return rep;
        }
      }
    }
  }
  rep.message = "terminal ingredients verified";
  return rep;
}

InvarianceReport verify_periodic_invariance(const std::vector<HPolytope>& x_invariant,
                                            const std::vector<Matrix>& gains,
                                            const DiscretePlant& plant, const Schedule& schedule,
                                            const HPolytope& x_set,
                                            const std::vector<std::optional<HPolytope>>& u_per_phase,
                                            int samples, unsigned seed) {
  InvarianceReport rep;
  const int m = schedule.m;
  if (static_cast<int>(x_invariant.size()) != m || static_cast<int>(gains.size()) != m)
    throw DesignError("verify_periodic_invariance: one set and one gain per phase required");
  const double tol = 1e-9;
  for (int p = 0; p < m; ++p) {
    for (int row = 0; row < x_set.rows(); ++row) {
      if (x_invariant[p].support(x_set.H().row(row).transpose()) > x_set.h()(row) + tol) {
        rep = {false, "invariant set leaves the state constraint set", x_set.H().row(row).transpose(), p};
        return rep;
      }
    }
    const Matrix b = plant.b.col(p);
    const Matrix acl = plant.a - b * gains[p];
    for (const auto& x : sample_extreme_points(x_invariant[p], samples, seed + p)) {
      const Vector u = -gains[p] * x;
      if (u_per_phase.size() == static_cast<size_t>(m) && u_per_phase[p] &&
          !u_per_phase[p]->contains(u, tol)) {
        rep = {false, "feedback move violates the input constraint", x, p};
        return rep;
      }
      if (!x_invariant[wrap(p + 1, m)].contains(acl * x, tol)) {
        rep = {false, "closed-loop successor leaves the next invariant set", x, p};
        return rep;
      }
    }
  }
  rep.message = "periodic invariance verified";
  return rep;
}

}  // namespace mmpc
