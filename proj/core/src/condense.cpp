#include "mmpc/condense.hpp"

#include <algorithm>
#include <cmath>

namespace mmpc {
namespace {

int wrap(int phase, int period) {
  int p = phase % period;
  return p < 0 ? p + period : p;
}

Matrix gather_cols(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

}  // namespace

CondensedHorizon::CondensedHorizon(const DiscretePlant& plant, const MovePattern& pattern,
                                   int phase, int steps, std::vector<char> free_mask,
                                   const HorizonCost& cost, const TightenedSets& sets)
    : plant_(plant), phase_(wrap(phase, pattern.period())), steps_(steps), cost_(cost) {
  const int n = plant.states();
  pred_ = build_prediction(plant, pattern, phase_, steps);
  const int nslots = static_cast<int>(pred_.slots.size());
  if (static_cast<int>(free_mask.size()) != nslots)
    throw DesignError("CondensedHorizon: free mask must cover every slot");
  for (int s = 0; s < nslots; ++s) (free_mask[s] ? free_ : frozen_).push_back(s);
  if (free_.empty()) throw DesignError("CondensedHorizon: no decision variables");
  if (cost_.q.rows() != n || cost_.q.cols() != n) throw DesignError("CondensedHorizon: q must be n x n");
  if (!(cost_.r > 0.0)) throw DesignError("CondensedHorizon: r must be positive");
  if (cost_.terminal_weight.size() == 0) cost_.terminal_weight = Matrix::Zero(n, n);
  if (sets.steps != steps || static_cast<int>(sets.x_sets[phase_].size()) != steps + 1)
    throw DesignError("CondensedHorizon: constraint sets do not match the horizon or phase");

  g_free_ = gather_cols(pred_.g, free_);
  g_frozen_ = gather_cols(pred_.g, frozen_);
  const int v = static_cast<int>(free_.size());

  // Q G_free block by block.
  Matrix qg(g_free_.rows(), v);
  for (int i = 1; i <= steps; ++i) {
    const Matrix& w = i < steps ? cost_.q : cost_.terminal_weight;
    qg.middleRows((i - 1) * n, n) = w * g_free_.middleRows((i - 1) * n, n);
  }
  hessian_ = 2.0 * (g_free_.transpose() * qg + cost_.r * Matrix::Identity(v, v));
  hessian_ = 0.5 * (hessian_ + hessian_.transpose());
  grad_map_ = 2.0 * qg.transpose();
  factor_ = factor_hessian(hessian_);

  auto init_rows = [&](Rows& r) {
    r.a_free.resize(0, v);
    r.a_frozen.resize(0, static_cast<Eigen::Index>(frozen_.size()));
    r.a_state.resize(0, n);
    r.b.resize(0);
  };
  init_rows(in_);
  init_rows(eq_);

  // State constraints at steps 1 .. N-1.
  for (int i = 1; i < steps; ++i) {
    const HPolytope& xs = sets.x_sets[phase_][i];
    add_rows(in_, xs.H(), xs.h(), RowKind::kState, i, pred_.g.middleRows((i - 1) * n, n),
             pred_.phi.middleRows((i - 1) * n, n));
  }

  // Terminal set; opposite rows with zero total width become equalities.
  if (const auto& t = sets.t_sets[phase_]) {
    const Matrix& h = t->H();
    const Vector& off = t->h();
    std::vector<char> used(h.rows(), 0);
    Matrix heq(0, n), hin(0, n);
    Vector beq(0), bin(0);
    auto push = [](Matrix& m, Vector& b, const Eigen::RowVectorXd& row, double val) {
      m.conservativeResize(m.rows() + 1, Eigen::NoChange);
      m.row(m.rows() - 1) = row;
      b.conservativeResize(b.size() + 1);
      b(b.size() - 1) = val;
    };
    for (Eigen::Index a = 0; a < h.rows(); ++a) {
      if (used[a]) continue;
      bool paired = false;
      for (Eigen::Index b = a + 1; b < h.rows() && !paired; ++b) {
        if (used[b]) continue;
        const double scale = std::max(1.0, h.row(a).cwiseAbs().maxCoeff());
        if ((h.row(a) + h.row(b)).cwiseAbs().maxCoeff() <= 1e-12 * scale &&
            std::abs(off(a) + off(b)) <= 1e-12 * (1.0 + std::abs(off(a)))) {
          push(heq, beq, h.row(a), off(a));
          used[a] = used[b] = 1;
          paired = true;
        }
      }
      if (!paired) push(hin, bin, h.row(a), off(a));
    }
    const Matrix gN = pred_.g.middleRows((steps - 1) * n, n);
    const Matrix phiN = pred_.phi.middleRows((steps - 1) * n, n);
    if (heq.rows() > 0) add_rows(eq_, heq, beq, RowKind::kTerminal, steps, gN, phiN);
    if (hin.rows() > 0) add_rows(in_, hin, bin, RowKind::kTerminal, steps, gN, phiN);
  }

  // Move constraints per step.
  std::vector<int> slot_pos(nslots, -1);
  std::vector<char> slot_free(nslots, 0);
  for (int j = 0; j < v; ++j) {
    slot_pos[free_[j]] = j;
    slot_free[free_[j]] = 1;
  }
  for (size_t j = 0; j < frozen_.size(); ++j) slot_pos[frozen_[j]] = static_cast<int>(j);
  int slot = 0;
  for (int i = 0; i < steps; ++i) {
    const int first = slot;
    while (slot < nslots && pred_.slots[slot].step == i) ++slot;
    const auto& u = sets.u_sets[phase_][i];
    if (!u || slot == first) continue;
    const Matrix& hu = u->H();
    const auto rows = hu.rows();
    Matrix af = Matrix::Zero(rows, v);
    Matrix ac = Matrix::Zero(rows, static_cast<Eigen::Index>(frozen_.size()));
    for (int s = first; s < slot; ++s) {
      if (slot_free[s]) af.col(slot_pos[s]) = hu.col(s - first);
      else ac.col(slot_pos[s]) = hu.col(s - first);
    }
    const auto old = in_.b.size();
    in_.a_free.conservativeResize(old + rows, Eigen::NoChange);
    in_.a_frozen.conservativeResize(old + rows, Eigen::NoChange);
    in_.a_state.conservativeResize(old + rows, Eigen::NoChange);
    in_.b.conservativeResize(old + rows);
    in_.a_free.bottomRows(rows) = af;
    in_.a_frozen.bottomRows(rows) = ac;
    in_.a_state.bottomRows(rows).setZero();
    in_.b.tail(rows) = u->h();
    for (Eigen::Index r = 0; r < rows; ++r) in_.tags.push_back({RowKind::kInput, i});
  }
}

void CondensedHorizon::add_rows(Rows& rows, const Matrix& h, const Vector& offsets, RowKind kind,
                                int step, const Matrix& g_block, const Matrix& phi_block) {
  // Vacuous rows (zero normal) carry no information.
  std::vector<int> keep;
  for (Eigen::Index r = 0; r < h.rows(); ++r)
    if (h.row(r).cwiseAbs().maxCoeff() > 0.0) keep.push_back(static_cast<int>(r));
  if (static_cast<Eigen::Index>(keep.size()) != h.rows()) {
    if (keep.empty()) return;
    Matrix hk(static_cast<Eigen::Index>(keep.size()), h.cols());
    Vector ok(static_cast<Eigen::Index>(keep.size()));
    for (size_t j = 0; j < keep.size(); ++j) {
      hk.row(static_cast<Eigen::Index>(j)) = h.row(keep[j]);
      ok(static_cast<Eigen::Index>(j)) = offsets(keep[j]);
    }
    add_rows(rows, hk, ok, kind, step, g_block, phi_block);
    return;
  }
  const auto k = h.rows();
  const auto old = rows.b.size();
  rows.a_free.conservativeResize(old + k, Eigen::NoChange);
  rows.a_frozen.conservativeResize(old + k, Eigen::NoChange);
  rows.a_state.conservativeResize(old + k, Eigen::NoChange);
  rows.b.conservativeResize(old + k);
  const Matrix hg = h * g_block;
  rows.a_free.bottomRows(k) = gather_cols(hg, free_);
  rows.a_frozen.bottomRows(k) = gather_cols(hg, frozen_);
  rows.a_state.bottomRows(k) = h * phi_block;
  rows.b.tail(k) = offsets;
  for (Eigen::Index r = 0; r < k; ++r) rows.tags.push_back({kind, step});
}

QpInstance CondensedHorizon::instance(const Vector& x, const Vector& frozen) const {
  const int n = plant_.states();
  if (x.size() != n) throw DesignError("CondensedHorizon::instance: state has the wrong size");
  if (frozen.size() != static_cast<Eigen::Index>(frozen_.size()))
    throw DesignError("CondensedHorizon::instance: frozen vector has the wrong size");
  Vector c = pred_.phi * x;
  if (frozen.size() > 0) c += g_frozen_ * frozen;

  QpInstance qp;
  qp.hessian = hessian_;
  qp.gradient = grad_map_ * c;
  double constant = x.dot(cost_.q * x) + cost_.r * frozen.squaredNorm();
  for (int i = 1; i <= steps_; ++i) {
    const auto ci = c.segment((i - 1) * n, n);
    constant += ci.dot((i < steps_ ? cost_.q : cost_.terminal_weight) * ci);
  }
  qp.constant = constant;

  auto fill = [&](const Rows& r, Matrix& a, Vector& b, std::vector<RowTag>& tags) {
    a = r.a_free;
    b = r.b - r.a_state * x;
    if (frozen.size() > 0) b -= r.a_frozen * frozen;
    tags = r.tags;
  };
  fill(in_, qp.a_in, qp.b_in, qp.in_meta);
  fill(eq_, qp.a_eq, qp.b_eq, qp.eq_meta);
  return qp;
}

Vector CondensedHorizon::merge(const Vector& z, const Vector& frozen) const {
  Vector out(static_cast<Eigen::Index>(free_.size() + frozen_.size()));
  for (size_t j = 0; j < free_.size(); ++j) out(free_[j]) = z(static_cast<Eigen::Index>(j));
  for (size_t j = 0; j < frozen_.size(); ++j) out(frozen_[j]) = frozen(static_cast<Eigen::Index>(j));
  return out;
}

Vector CondensedHorizon::predict(const Vector& x, const Vector& moves) const {
  return pred_.phi * x + pred_.g * moves;
}

double CondensedHorizon::cost(const Vector& x, const Vector& moves) const {
  const int n = plant_.states();
  const Vector xs = predict(x, moves);
  double j = x.dot(cost_.q * x) + cost_.r * moves.squaredNorm();
  for (int i = 1; i <= steps_; ++i) {
    const auto xi = xs.segment((i - 1) * n, n);
    j += xi.dot((i < steps_ ? cost_.q : cost_.terminal_weight) * xi);
  }
  return j;
}

double CondensedHorizon::violation(const Vector& x, const Vector& moves) const {
  Vector z(static_cast<Eigen::Index>(free_.size()));
  for (size_t j = 0; j < free_.size(); ++j) z(static_cast<Eigen::Index>(j)) = moves(free_[j]);
  Vector f(static_cast<Eigen::Index>(frozen_.size()));
  for (size_t j = 0; j < frozen_.size(); ++j) f(static_cast<Eigen::Index>(j)) = moves(frozen_[j]);
  const QpInstance qp = instance(x, f);
  double worst = 0.0;
  if (qp.inequalities() > 0) worst = std::max(worst, (qp.a_in * z - qp.b_in).maxCoeff());
  if (qp.equalities() > 0) worst = std::max(worst, (qp.a_eq * z - qp.b_eq).cwiseAbs().maxCoeff());
  return worst;
}

namespace {

std::vector<char> own_channel_mask(const PredictionMatrices& pm, int period) {
  std::vector<char> mask(pm.slots.size());
  for (size_t s = 0; s < pm.slots.size(); ++s) mask[s] = pm.slots[s].step % period == 0;
  return mask;
}

QpInstance condense_multiplexed(const DiscretePlant& plant, const Schedule& schedule, long k,
                                int control_horizon, const Matrix& q, double r,
                                const Matrix& terminal_weight, const TightenedSets& sets,
                                const Vector& x, const Vector& buffer) {
  const auto pattern = MovePattern::multiplexed(Schedule{schedule.m, 0});
  const int steps = horizon_steps(control_horizon, schedule.m);
  const int phase = schedule.phase(k);
  const auto pm = build_prediction(plant, pattern, phase, steps);
  const CondensedHorizon ch(plant, pattern, phase, steps, own_channel_mask(pm, schedule.m),
                            HorizonCost{q, r, terminal_weight}, sets);
  const auto& frozen = ch.frozen_slots();
  if (buffer.size() != static_cast<Eigen::Index>(frozen.size()))
    throw DesignError("condense: plan buffer must have (m - 1)(Nu - 1) entries");
  // The buffer lists group 2, then group 3, ...; frozen slots are in step order.
  std::vector<int> group_order;
  for (int g = 1; g < schedule.m; ++g)
    group_order.insert(group_order.end(), pm.groups[g].begin(), pm.groups[g].end());
  Vector f(buffer.size());
  for (size_t j = 0; j < group_order.size(); ++j) {
    const auto pos = std::find(frozen.begin(), frozen.end(), group_order[j]) - frozen.begin();
    f(pos) = buffer(static_cast<Eigen::Index>(j));
  }
  return ch.instance(x, f);
}

}  // namespace

QpInstance condense_nominal(const DiscretePlant& plant, const Schedule& schedule, long k,
                            int control_horizon, const Matrix& q, double r,
                            const Matrix& terminal_weight, const HPolytope& x_set,
                            const std::vector<std::optional<HPolytope>>& u_per_phase,
                            const std::optional<HPolytope>& terminal, const Vector& x,
                            const Vector& plan_buffer) {
  const auto pattern = MovePattern::multiplexed(Schedule{schedule.m, 0});
  const int steps = horizon_steps(control_horizon, schedule.m);
  const auto sets = nominal_sets(plant, pattern, steps, x_set, u_per_phase, terminal);
  return condense_multiplexed(plant, schedule, k, control_horizon, q, r, terminal_weight, sets, x,
                              plan_buffer);
}

QpInstance condense_robust(const DiscretePlant& plant, const Schedule& schedule, long k,
                           int control_horizon, const Matrix& q, double r,
                           const Matrix& terminal_weight, const TightenedSets& sets,
                           const Vector& x, const Vector& corrected_buffer) {
  if (!sets.feasible()) {
    const auto& e = sets.empty.front();
    throw DesignError(std::string("condense_robust: tightened ") + to_string(e.kind) +
                      " set is empty at step " + std::to_string(e.step) + ", phase " +
                      std::to_string(e.phase));
  }
  return condense_multiplexed(plant, schedule, k, control_horizon, q, r, terminal_weight, sets, x,
                              corrected_buffer);
}

QpInstance condense_all_channels(const DiscretePlant& plant, const MovePattern& pattern,
                                 int phase, int steps, const Matrix& q, double r,
                                 const Matrix& terminal_weight, const TightenedSets& sets,
                                 const Vector& x) {
  const auto pm = build_prediction(plant, pattern, phase, steps);
  const CondensedHorizon ch(plant, pattern, phase, steps, std::vector<char>(pm.slots.size(), 1),
                            HorizonCost{q, r, terminal_weight}, sets);
  return ch.instance(x, Vector());
}

}  // namespace mmpc
