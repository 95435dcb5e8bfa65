#include "mmpc/controller.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mmpc/sim.hpp"

namespace mmpc {
namespace {

// Lightly unstable two-state plant, one input per state direction.
DiscretePlant two_state_plant() {
  DiscretePlant p;
  p.a = (Matrix(2, 2) << 1.05, 0.2, 0.0, 0.95).finished();
  p.b = (Matrix(2, 2) << 0.1, 0.02, 0.0, 0.15).finished();
  p.e = Matrix::Identity(2, 2);
  p.c = Matrix::Identity(2, 2);
  return p;
}

HPolytope square(double half) { return HPolytope::box(-half * Vector::Ones(2), half * Vector::Ones(2)); }

ControllerDesign constrained_design(ControllerMode mode, double w) {
  auto d = mmpc_design(two_state_plant(), Schedule{2, 0}, 4, Matrix::Identity(2, 2), 0.1);
  d.state_set = square(1.0);
  d.input_sets.assign(2, HPolytope::box(Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)));
  d.terminal = TerminalSetKind::kOrigin;
  d.mode = mode;
  if (mode == ControllerMode::kRobust) d.disturbance_set = square(w);
  return d;
}

TEST(Controller, OnlyTheScheduledChannelMoves) {
  Controller c(constrained_design(ControllerMode::kNominal, 0.0));
  const auto& plant = c.design().plant;
  Vector x = (Vector(2) << 0.4, -0.3).finished();
  for (int k = 0; k < 40; ++k) {
    const auto out = c.step(x);
    ASSERT_TRUE(out.solved);
    EXPECT_EQ(out.du((k + 1) % 2), 0.0) << "k = " << k;
    x = plant.a * x + plant.b * out.du;
  }
}

TEST(Controller, NominalCostIsNonincreasingAndStateConverges) {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  int trials = 0;
  while (trials < 20) {
    Controller c(constrained_design(ControllerMode::kNominal, 0.0));
    const auto& plant = c.design().plant;
    Vector x = (Vector(2) << u(rng), u(rng)).finished();
    StepOutcome out;
    try {
      out = c.step(x);
    } catch (const InfeasibleError&) {
      continue;  // not in the feasible region; draw again
    }
    ++trials;
    double prev = out.objective;
    x = plant.a * x + plant.b * out.du;
    for (int k = 1; k < 500; ++k) {
      out = c.step(x);
      ASSERT_TRUE(out.solved);
      EXPECT_LE(out.objective, prev + 1e-7 * (1.0 + std::abs(prev))) << "trial " << trials << " k " << k;
      prev = out.objective;
      x = plant.a * x + plant.b * out.du;
    }
    EXPECT_LT(x.norm(), 1e-6) << "trial " << trials;
  }
}

TEST(Controller, RobustWithZeroDisturbanceMatchesNominal) {
  auto robust = constrained_design(ControllerMode::kRobust, 0.0);
  robust.disturbance_set = HPolytope::point(Vector::Zero(2));
  Controller a(constrained_design(ControllerMode::kNominal, 0.0));
  Controller b(robust);
  const auto& plant = a.design().plant;
  Vector xa = (Vector(2) << 0.3, -0.2).finished(), xb = xa;
  for (int k = 0; k < 60; ++k) {
    const auto oa = a.step(xa);
    const auto ob = b.step(xb);
    EXPECT_LT((oa.du - ob.du).norm(), 1e-10);
    xa = plant.a * xa + plant.b * oa.du;
    xb = plant.a * xb + plant.b * ob.du;
  }
}

TEST(Controller, PredictionErrorFollowsRecoveryPolicy) {
  Controller c(constrained_design(ControllerMode::kRobust, 0.01));
  const auto& plant = c.design().plant;
  const auto w = Disturbance::bounded_random(square(0.01), 7, 100);
  Vector x = (Vector(2) << 0.3, -0.2).finished();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    c.step(x);
    const Plan old = *c.plan();
    const Vector d = plant.e * w.at(k);
    x = old.state(1) + d;
    const Plan cand = c.candidate(x);
    for (int i = 1; i < old.steps; ++i) {
      const Vector diff = cand.state(i) - old.state(i + 1);
      worst = std::max(worst, (diff - c.policy().l[cand.phase][i] * d).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Controller, RobustMonteCarloStaysFeasible) {
  const auto design = constrained_design(ControllerMode::kRobust, 0.01);
  for (unsigned seed = 1; seed <= 50; ++seed) {
    SimScenario scn;
    scn.design = design;
    scn.x0 = (Vector(2) << 0.3, -0.2).finished();
    scn.steps = 200;
    scn.disturbance = Disturbance::bounded_random(square(0.01), seed, scn.steps);
    SimResult res;
    ASSERT_NO_THROW(res = run_closed_loop(scn)) << "seed " << seed;
    EXPECT_LE(res.metrics.max_state_violation, 1e-8);
    EXPECT_LE(res.metrics.max_input_violation, 1e-8);
  }
}

TEST(Controller, UnconstrainedMatchesCondensedLaw) {
  const auto plant = two_state_plant();
  const Schedule sched{2, 0};
  const int nu = 3;
  auto d = mmpc_design(plant, sched, nu, Matrix::Identity(2, 2), 0.5);
  d.terminal = TerminalSetKind::kNone;
  d.riccati_terminal_weight = true;
  Controller c(d);
  const auto gains = mmpc_law_gains(plant, sched, nu, d.q, d.r, solve_dpre(plant, sched, d.q, d.r));
  Vector x = (Vector(2) << 1.0, -2.0).finished();
  c.step(x);
  x = plant.a * x + plant.b * c.plan()->moves_at(0, 2);
  for (int k = 1; k < 30; ++k) {
    // The other channel's buffered moves are the stored plan at odd steps.
    const Plan old = *c.plan();
    Vector xi(2 + nu - 1);
    xi.head(2) = x;
    for (int j = 0; j < nu - 1; ++j) xi(2 + j) = old.moves_at(2 * j + 2, 2)((k + 1) % 2);
    const Vector own = -gains[k % 2] * xi;
    const auto out = c.step(x);
    for (int j = 0; j < nu; ++j)
      EXPECT_NEAR(c.plan()->moves_at(2 * j, 2)(k % 2), own(j), 1e-9 * (1.0 + own.norm())) << k;
    x = plant.a * x + plant.b * out.du;
  }
}

TEST(Controller, InfeasibleStartRaises) {
  Controller c(constrained_design(ControllerMode::kNominal, 0.0));
  EXPECT_THROW(c.step((Vector(2) << 5.0, 5.0).finished()), InfeasibleError);
}

TEST(Controller, PolicyWeightLadderPicksSmallestFeasible) {
  Controller c(constrained_design(ControllerMode::kRobust, 0.01));
  EXPECT_EQ(c.policy_constraint_weight(), 0.0);
  auto fixed = constrained_design(ControllerMode::kRobust, 0.01);
  fixed.policy_constraint_weight = 1.0;
  EXPECT_EQ(Controller(fixed).policy_constraint_weight(), 1.0);
  auto huge = constrained_design(ControllerMode::kRobust, 0.6);
  EXPECT_THROW(Controller{huge}, DesignError);
}

TEST(Controller, SynchronizedSolvesOncePerPeriod) {
  auto d = smpc_design(two_state_plant(), 2, 3, Matrix::Identity(2, 2), 0.1);
  d.terminal = TerminalSetKind::kOrigin;
  Controller c(d);
  const auto& plant = c.design().plant;
  Vector x = (Vector(2) << 0.4, -0.3).finished();
  for (int k = 0; k < 20; ++k) {
    const auto out = c.step(x);
    EXPECT_EQ(out.solved, k % 2 == 0);
    if (out.solved) EXPECT_EQ(out.variables, 6);
    if (!out.solved) EXPECT_EQ(out.du.norm(), 0.0);
    x = plant.a * x + plant.b * out.du;
  }
}

}  // namespace
}  // namespace mmpc
