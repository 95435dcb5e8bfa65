#include "mmpc/qp.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/LU>
#include <gtest/gtest.h>

namespace mmpc {
namespace {

Matrix random_matrix(int rows, int cols, std::mt19937& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

QpInstance make_qp(Matrix h, Vector g, Matrix a_in, Vector b_in) {
  QpInstance qp;
  qp.hessian = std::move(h);
  qp.gradient = std::move(g);
  qp.a_in = std::move(a_in);
  qp.b_in = std::move(b_in);
  qp.in_meta.assign(qp.b_in.size(), RowTag{});
  qp.a_eq = Matrix::Zero(0, qp.gradient.size());
  qp.b_eq = Vector::Zero(0);
  return qp;
}

// Brute force: minimize over every active subset with the rows as equalities
// and keep the best primal-feasible point.
double enumerate_optimum(const QpInstance& qp, Vector* best_x) {
  const int v = qp.variables(), rows = qp.inequalities();
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << rows); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < rows; ++i)
      if (mask & (1 << i)) act.push_back(i);
    const int a = static_cast<int>(act.size());
    if (a > v) continue;
    Matrix kkt = Matrix::Zero(v + a, v + a);
    Vector rhs(v + a);
    kkt.topLeftCorner(v, v) = qp.hessian;
    rhs.head(v) = -qp.gradient;
    for (int j = 0; j < a; ++j) {
      kkt.block(0, v + j, v, 1) = qp.a_in.row(act[j]).transpose();
      kkt.block(v + j, 0, 1, v) = qp.a_in.row(act[j]);
      rhs(v + j) = qp.b_in(act[j]);
    }
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (lu.rank() < v + a) continue;
    const Vector x = lu.solve(rhs).head(v);
    if ((qp.a_in * x - qp.b_in).maxCoeff() > 1e-9) continue;
    const double f = qp.objective(x);
    if (f < best) {
      best = f;
      if (best_x) *best_x = x;
    }
  }
  return best;
}

TEST(Qp, BoundOnScalar) {
  // min 1/2 x^2  s.t.  x >= 1.
  const auto qp = make_qp(Matrix::Ones(1, 1), Vector::Zero(1), -Matrix::Ones(1, 1), -Vector::Ones(1));
  const auto s = solve(qp);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_NEAR(s.x(0), 1.0, 1e-12);
  EXPECT_NEAR(s.objective, 0.5, 1e-12);
  ASSERT_EQ(s.active_rows.size(), 1u);
  EXPECT_NEAR(s.multipliers_in(0), 1.0, 1e-12);
}

TEST(Qp, UnconstrainedMinimizer) {
  std::mt19937 rng(3);
  const Matrix f = random_matrix(5, 5, rng);
  const Matrix h = f * f.transpose() + Matrix::Identity(5, 5);
  const Vector g = random_matrix(5, 1, rng);
  const auto qp = make_qp(h, g, Matrix::Zero(0, 5), Vector::Zero(0));
  const auto s = solve(qp);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_LT((s.x + h.inverse() * g).norm(), 1e-10);
}

TEST(Qp, MatchesActiveSetEnumeration) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> vars(1, 4), rows(1, 10);
  for (int t = 0; t < 200; ++t) {
    const int v = vars(rng), q = rows(rng);
    const Matrix f = random_matrix(v, v, rng);
    const Matrix h = f * f.transpose() + 0.1 * Matrix::Identity(v, v);
    const Vector g = 3.0 * random_matrix(v, 1, rng);
    const Matrix a = random_matrix(q, v, rng);
    // The origin is strictly feasible, so every instance is feasible.
    const Vector b = random_matrix(q, 1, rng).cwiseAbs() + Vector::Constant(q, 0.1);
    const auto qp = make_qp(h, g, a, b);
    Vector xb;
    const double best = enumerate_optimum(qp, &xb);
    const auto s = solve(qp);
    ASSERT_EQ(s.status, QpStatus::kOptimal) << "trial " << t;
    EXPECT_NEAR(s.objective, best, 1e-9 * (1.0 + std::abs(best))) << "trial " << t;
    EXPECT_LT((s.x - xb).norm(), 1e-7 * (1.0 + xb.norm())) << "trial " << t;
    EXPECT_LT(s.primal_violation, 1e-9);
    EXPECT_GE(s.multipliers_in.minCoeff(), -1e-12);
  }
}

TEST(Qp, EqualityConstraints) {
  // min 1/2 |x|^2  s.t.  x1 + x2 = 2, x1 <= 0.5.
  auto qp = make_qp(Matrix::Identity(2, 2), Vector::Zero(2), (Matrix(1, 2) << 1, 0).finished(),
                    Vector::Constant(1, 0.5));
  qp.a_eq = (Matrix(1, 2) << 1, 1).finished();
  qp.b_eq = Vector::Constant(1, 2.0);
  qp.eq_meta.assign(1, RowTag{});
  const auto s = solve(qp);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_NEAR(s.x(0), 0.5, 1e-12);
  EXPECT_NEAR(s.x(1), 1.5, 1e-12);
}

TEST(Qp, RedundantEqualitiesWithPoorScaling) {
  // Twelve consistent equality rows on five variables, Hessian condition ~1e6.
  std::mt19937 rng(8);
  const Matrix basis = random_matrix(12, 5, rng) * 10.0;
  const Matrix s = random_matrix(5, 5, rng);
  Vector diag(5);
  diag << 60.0, 10.0, 1.0, 1e-2, 2e-4;
  const Matrix h = s * diag.asDiagonal() * s.transpose() + 1e-4 * Matrix::Identity(5, 5);
  const Vector target = random_matrix(5, 1, rng);
  auto qp = make_qp(h, random_matrix(5, 1, rng), Matrix::Zero(0, 5), Vector());
  qp.a_eq = basis;
  qp.b_eq = basis * target;
  qp.eq_meta.assign(12, RowTag{RowKind::kTerminal, 0});
  const auto sol = solve(qp);
  ASSERT_EQ(sol.status, QpStatus::kOptimal);
  EXPECT_LT((sol.x - target).norm(), 1e-8);
  EXPECT_LT(sol.stationarity, 1e-8);

  qp.b_eq(3) += 1e-3;
  EXPECT_EQ(solve(qp).status, QpStatus::kInfeasible);
}

TEST(Qp, DetectsInfeasibility) {
  // x <= -1 and x >= 1.
  Matrix a(2, 1);
  a << 1, -1;
  const auto qp = make_qp(Matrix::Ones(1, 1), Vector::Zero(1), a, -Vector::Ones(2));
  const auto s = solve(qp);
  EXPECT_EQ(s.status, QpStatus::kInfeasible);
  EXPECT_GE(s.blocking_row, 0);
}

TEST(Qp, WarmStartDoesNotChangeTheOptimum) {
  std::mt19937 rng(5);
  for (int t = 0; t < 50; ++t) {
    const Matrix f = random_matrix(6, 6, rng);
    const Matrix h = f * f.transpose() + 0.1 * Matrix::Identity(6, 6);
    const auto qp = make_qp(h, 5.0 * random_matrix(6, 1, rng), random_matrix(12, 6, rng),
                            Vector::Ones(12));
    const auto cold = solve(qp);
    ASSERT_EQ(cold.status, QpStatus::kOptimal);
    std::vector<int> hint = cold.active_rows;
    hint.push_back(static_cast<int>(t % 12));
    const auto warm = solve(qp, hint);
    const auto factored = solve(qp, factor_hessian(qp.hessian), hint);
    EXPECT_NEAR(warm.objective, cold.objective, 1e-10 * (1.0 + std::abs(cold.objective)));
    EXPECT_LT((warm.x - cold.x).norm(), 1e-8);
    EXPECT_LT((factored.x - cold.x).norm(), 1e-8);
  }
}

TEST(Qp, ValidateRejectsShapeErrors) {
  auto qp = make_qp(Matrix::Identity(2, 2), Vector::Zero(3), Matrix::Zero(0, 2), Vector::Zero(0));
  EXPECT_THROW(qp.validate(), DesignError);
}

TEST(Qp, DumpWritesDimensionsFirst) {
  const auto qp = make_qp(Matrix::Identity(2, 2), Vector::Ones(2), Matrix::Ones(1, 2), Vector::Ones(1));
  std::ostringstream os;
  dump_qp(os, qp);
  std::istringstream is(os.str());
  int v = -1, in = -1, eq = -1;
  is >> v >> in >> eq;
  EXPECT_EQ(v, 2);
  EXPECT_EQ(in, 1);
  EXPECT_EQ(eq, 0);
}

}  // namespace
}  // namespace mmpc
