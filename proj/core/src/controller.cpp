#include "mmpc/controller.hpp"

#include <chrono>
#include <sstream>

namespace mmpc {
namespace {

int wrap(int phase, int period) {
  int p = phase % period;
  return p < 0 ? p + period : p;
}

}  // namespace

Vector Plan::moves_at(int i, int channels) const {
  Vector du = Vector::Zero(channels);
  for (size_t s = 0; s < slots.size(); ++s)
    if (slots[s].step == i) du(slots[s].channel) = moves(static_cast<Eigen::Index>(s));
  return du;
}

InfeasibleError::InfeasibleError(long step, const std::string& detail)
    : std::runtime_error("infeasible QP at step " + std::to_string(step) + ": " + detail),
      step_(step) {}

ControllerDesign mmpc_design(const DiscretePlant& plant, const Schedule& schedule,
                             int control_horizon, const Matrix& q, double r) {
  ControllerDesign d;
  d.plant = plant;
  d.pattern = MovePattern::multiplexed(schedule);
  d.steps = horizon_steps(control_horizon, schedule.m);
  d.q = q;
  d.r = r;
  return d;
}

ControllerDesign smpc_design(const DiscretePlant& plant, int period, int moves, const Matrix& q,
                             double r) {
  if (moves < 1) throw DesignError("smpc_design: at least one move per channel required");
  ControllerDesign d;
  d.plant = plant;
  d.pattern = MovePattern::synchronized(plant.channels(), period);
  d.steps = moves * period;
  d.q = q;
  d.r = r;
  return d;
}

Controller::Controller(ControllerDesign design) : design_(std::move(design)) {
  auto& d = design_;
  d.plant.validate();
  const int n = d.plant.states();
  const int period = d.pattern.period();
  if (d.steps < d.pattern.solve_interval())
    throw DesignError("controller: horizon shorter than the solve interval");
  if (d.pattern.channel_count() > d.plant.channels())
    throw DesignError("controller: move pattern refers to a channel the plant lacks");
  if (d.q.rows() != n || d.q.cols() != n) throw DesignError("controller: q must be n x n");
  if (!(d.r > 0.0)) throw DesignError("controller: r must be positive");
  if (d.input_sets.empty()) d.input_sets.assign(period, std::nullopt);
  if (static_cast<int>(d.input_sets.size()) != period)
    throw DesignError("controller: one (possibly absent) input set per phase required");

  // No state constraint is modelled as the single vacuous row 0'x <= 1.
  const HPolytope x_set = d.state_set ? *d.state_set
                                      : HPolytope(Matrix::Zero(1, n), Vector::Ones(1));
  if (x_set.dim() != n) throw DesignError("controller: state set has the wrong dimension");

  std::optional<HPolytope> terminal;
  switch (d.terminal) {
    case TerminalSetKind::kOrigin: terminal = HPolytope::point(Vector::Zero(n)); break;
    case TerminalSetKind::kNone: break;
    case TerminalSetKind::kPolytope:
      if (!d.terminal_set || d.terminal_set->dim() != n)
        throw DesignError("controller: terminal polytope missing or of the wrong dimension");
      terminal = d.terminal_set;
      break;
  }

  if (d.riccati_terminal_weight && d.terminal != TerminalSetKind::kOrigin)
    riccati_ = solve_dpre(d.plant, d.pattern, d.q, d.r);

  if (d.mode == ControllerMode::kRobust) {
    if (!d.disturbance_set) throw DesignError("controller: robust mode needs a disturbance set W");
    std::vector<double> ladder{0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
    if (d.policy_constraint_weight) ladder = {*d.policy_constraint_weight};
    for (double lambda : ladder) {
      PolicyWeights w{d.q, d.r, d.state_set ? d.state_set->H() : Matrix(), lambda};
      policy_ = deadbeat_policy(d.plant, d.pattern, d.steps, w);
      sets_ = build_tightened_sets(policy_, d.plant, d.pattern, x_set, d.input_sets, terminal,
                                   *d.disturbance_set);
      policy_weight_ = lambda;
      if (sets_.feasible()) break;
    }
    if (!sets_.feasible()) {
      const auto& e = sets_.empty.front();
      std::ostringstream msg;
      msg << "controller: tightened " << to_string(e.kind) << " set is empty at step " << e.step
          << ", phase " << e.phase;
      throw DesignError(msg.str());
    }
  } else {
    sets_ = nominal_sets(d.plant, d.pattern, d.steps, x_set, d.input_sets, terminal);
    policy_.steps = d.steps;
    policy_.period = period;
    policy_.solve_interval = d.pattern.solve_interval();
  }
}

void Controller::reset(long k0) {
  k_ = k0;
  plan_.reset();
}

const CondensedHorizon& Controller::horizon(int phase, bool all_free) const {
  const int p = wrap(phase, design_.pattern.period());
  auto& slot = cache_[{p, all_free}];
  if (!slot) {
    const auto pm = build_prediction(design_.plant, design_.pattern, p, design_.steps);
    std::vector<char> mask(pm.slots.size(), 1);
    if (!all_free)
      for (size_t s = 0; s < pm.slots.size(); ++s)
        mask[s] = pm.slots[s].step % design_.pattern.period() == 0;
    HorizonCost cost{design_.q, design_.r, Matrix()};
    if (riccati_) cost.terminal_weight = riccati_->at(p + design_.steps);
    slot = std::make_unique<CondensedHorizon>(design_.plant, design_.pattern, p, design_.steps,
                                              std::move(mask), cost, sets_);
  }
  return *slot;
}

int Controller::steady_variables() const {
  for (int p = 0; p < design_.pattern.period(); ++p)
    if (design_.pattern.is_solve_phase(p)) return horizon(p, false).variables();
  return 0;
}

Vector Controller::infer_disturbance(const Vector& x) const {
  const int n = design_.plant.states();
  if (!plan_) return Vector::Zero(n);
  const long i = k_ - plan_->start;
  if (i < 1 || i > plan_->steps) return Vector::Zero(n);
  return x - plan_->state(static_cast<int>(i));
}

Vector Controller::shifted_moves(int phase, const Vector& delta, bool corrected) const {
  const auto& slots = horizon(phase, true).prediction().slots;
  const int s = static_cast<int>(k_ - plan_->start);
  // Index of the first old slot at each old step.
  std::vector<int> first(plan_->steps + 1, static_cast<int>(plan_->slots.size()));
  for (int j = static_cast<int>(plan_->slots.size()) - 1; j >= 0; --j) first[plan_->slots[j].step] = j;
  for (int i = plan_->steps - 1; i >= 0; --i) first[i] = std::min(first[i], first[i + 1]);

  Vector out = Vector::Zero(static_cast<Eigen::Index>(slots.size()));
  int prev_step = -1;
  int pos = 0;
  for (size_t j = 0; j < slots.size(); ++j) {
    const auto& sl = slots[j];
    pos = sl.step == prev_step ? pos + 1 : 0;
    prev_step = sl.step;
    const int old_step = sl.step + s;
    if (old_step < plan_->steps) {
      const int idx = first[old_step] + pos;
      if (idx < static_cast<int>(plan_->slots.size()) && plan_->slots[idx].step == old_step &&
          plan_->slots[idx].channel == sl.channel)
        out(static_cast<Eigen::Index>(j)) = plan_->moves(idx);
    }
    if (corrected && sl.step < static_cast<int>(policy_.m[phase].size()))
      out(static_cast<Eigen::Index>(j)) += policy_.m[phase][sl.step].row(pos).dot(delta);
  }
  return out;
}

Vector Controller::frozen_values(const CondensedHorizon& ch, const Vector& x, bool corrected) const {
  const Vector all = shifted_moves(ch.phase(), infer_disturbance(x), corrected);
  const auto& frozen = ch.frozen_slots();
  Vector f(static_cast<Eigen::Index>(frozen.size()));
  for (size_t j = 0; j < frozen.size(); ++j) f(static_cast<Eigen::Index>(j)) = all(frozen[j]);
  return f;
}

Plan Controller::candidate(const Vector& x) const {
  if (!plan_) throw DesignError("candidate: no stored plan");
  const int p = design_.pattern.phase(k_);
  if (!design_.pattern.is_solve_phase(p)) throw DesignError("candidate: not a solve step");
  const auto& ch = horizon(p, true);
  Plan c;
  c.start = k_;
  c.phase = p;
  c.steps = design_.steps;
  c.state_dim = design_.plant.states();
  c.slots = ch.prediction().slots;
  c.moves = shifted_moves(p, infer_disturbance(x), design_.mode == ControllerMode::kRobust);
  c.states = ch.predict(x, c.moves);
  c.objective = ch.cost(x, c.moves);
  return c;
}

StepOutcome Controller::step(const Vector& x) {
  const int n = design_.plant.states();
  if (x.size() != n) throw DesignError("controller step: state has the wrong size");
  StepOutcome out;
  out.du = Vector::Zero(design_.plant.channels());
  const int p = design_.pattern.phase(k_);

  if (!design_.pattern.is_solve_phase(p)) {
    if (plan_) {
      const long i = k_ - plan_->start;
      if (i >= 0 && i < plan_->steps) out.du = plan_->moves_at(static_cast<int>(i), out.du.size());
    }
    ++k_;
    return out;
  }

  const bool first = !plan_.has_value();
  const auto& ch = horizon(p, first);
  const Vector f = first ? Vector() : frozen_values(ch, x, design_.mode == ControllerMode::kRobust);
  const QpInstance qp = ch.instance(x, f);

  const auto t0 = std::chrono::steady_clock::now();
  const QpSolution sol = solve(qp, ch.factor());
  const auto t1 = std::chrono::steady_clock::now();

  const bool accepted =
      sol.status == QpStatus::kOptimal ||
      (first && sol.status == QpStatus::kMaxIter && sol.primal_violation <= 1e-8);
  if (!accepted) {
    std::ostringstream msg;
    msg << to_string(sol.status);
    if (sol.blocking_row >= 0 && sol.blocking_row < qp.inequalities()) {
      const auto& tag = qp.in_meta[sol.blocking_row];
      msg << " (" << to_string(tag.kind) << " constraint at prediction step " << tag.step << ")";
    }
    throw InfeasibleError(k_, msg.str());
  }

  Plan plan;
  plan.start = k_;
  plan.phase = p;
  plan.steps = design_.steps;
  plan.state_dim = n;
  plan.slots = ch.prediction().slots;
  plan.moves = ch.merge(sol.x, f);
  plan.states = ch.predict(x, plan.moves);
  plan.objective = sol.objective;
  plan_ = std::move(plan);

  out.du = plan_->moves_at(0, out.du.size());
  out.solved = true;
  out.variables = qp.variables();
  out.iterations = sol.iterations;
  out.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.objective = sol.objective;
  ++k_;
  return out;
}

}  // namespace mmpc
