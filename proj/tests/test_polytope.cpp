#include "mmpc/polytope.hpp"

#include <cmath>
#include <random>

#include <Eigen/LU>
#include <gtest/gtest.h>

namespace mmpc {
namespace {

// Random bounded 2-D polytope around the origin: normals spread over the
// circle, offsets in [lo, hi].
HPolytope random_polygon(std::mt19937& rng, double lo, double hi) {
  std::uniform_real_distribution<double> jitter(-0.3, 0.3), off(lo, hi);
  std::uniform_int_distribution<int> count(3, 8);
  const int q = count(rng);
  Matrix h(q, 2);
  Vector b(q);
  for (int i = 0; i < q; ++i) {
    const double t = 2.0 * M_PI * i / q + jitter(rng);
    h(i, 0) = std::cos(t);
    h(i, 1) = std::sin(t);
    b(i) = off(rng);
  }
  return HPolytope(h, b);
}

// Vertex enumeration by pairwise line intersection.
std::vector<Vector> vertices(const HPolytope& p) {
  std::vector<Vector> out;
  for (int i = 0; i < p.rows(); ++i)
    for (int j = i + 1; j < p.rows(); ++j) {
      Eigen::Matrix2d m;
      m << p.H().row(i), p.H().row(j);
      if (std::abs(m.determinant()) < 1e-12) continue;
      const Eigen::Vector2d v = m.inverse() * Eigen::Vector2d(p.h()(i), p.h()(j));
      if (p.contains(v, 1e-9)) out.push_back(v);
    }
  return out;
}

TEST(Contains, Box) {
  const auto b = HPolytope::box(-Vector::Ones(2), Vector::Ones(2));
  EXPECT_TRUE(b.contains(Vector::Zero(2)));
  const double tol = 1e-9;
  EXPECT_FALSE(b.contains((Vector(2) << 1.0 + 2 * tol, 0.0).finished(), tol));
}

TEST(Contains, VerticesOfRandomPolygons) {
  std::mt19937 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_polygon(rng, 0.5, 2.0);
    for (const auto& v : vertices(p)) EXPECT_TRUE(p.contains(v, 1e-9));
  }
}

TEST(Contains, InvariantUnderRowScaling) {
  std::mt19937 rng(8);
  const auto p = random_polygon(rng, 0.5, 1.5);
  Vector s(p.rows());
  for (int i = 0; i < p.rows(); ++i) s(i) = 0.1 + i;
  const HPolytope q(s.asDiagonal() * p.H(), s.cwiseProduct(p.h()));
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 200; ++t) {
    const Vector x = (Vector(2) << u(rng), u(rng)).finished();
    EXPECT_EQ(p.contains(x, 0.0), q.contains(x, 0.0));
  }
}

TEST(Support, Box) {
  const auto b = HPolytope::box(-Vector::Ones(2), Vector::Ones(2));
  EXPECT_DOUBLE_EQ(b.support((Vector(2) << 1, 0).finished()), 1.0);
  EXPECT_DOUBLE_EQ(b.support((Vector(2) << 1, 1).finished()), 2.0);
}

TEST(Support, MatchesVertexEnumeration) {
  std::mt19937 rng(12);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 50; ++t) {
    const auto p = random_polygon(rng, 0.2, 3.0);
    const Vector c = (Vector(2) << nd(rng), nd(rng)).finished();
    double best = -1e300;
    for (const auto& v : vertices(p)) best = std::max(best, c.dot(v));
    EXPECT_NEAR(p.support(c), best, 1e-8);
    EXPECT_NEAR(p.support(3.5 * c), 3.5 * p.support(c), 1e-9 * (1 + std::abs(best)));
  }
}

TEST(Support, UnboundedAndEmptyThrow) {
  const HPolytope half((Matrix(1, 2) << 1, 0).finished(), Vector::Ones(1));
  EXPECT_THROW(half.support((Vector(2) << 0, 1).finished()), PolytopeError);
  const HPolytope empty((Matrix(2, 1) << 1, -1).finished(), (Vector(2) << -1, -1).finished());
  EXPECT_THROW(empty.support(Vector::Ones(1)), PolytopeError);
}

TEST(Lp, SmallProblems) {
  // max x + y  s.t.  x + 2y <= 4, 3x + y <= 6, x, y >= 0  -> (1.6, 1.2).
  Matrix a(4, 2);
  a << 1, 2, 3, 1, -1, 0, 0, -1;
  const Vector b = (Vector(4) << 4, 6, 0, 0).finished();
  const auto r = maximize_lp((Vector(2) << 1, 1).finished(), a, b);
  ASSERT_EQ(r.status, LpStatus::kOptimal);
  EXPECT_NEAR(r.value, 2.8, 1e-12);
  EXPECT_NEAR(r.x(0), 1.6, 1e-12);
  EXPECT_NEAR(r.x(1), 1.2, 1e-12);
  const auto u = maximize_lp((Vector(2) << 1, 0).finished(), (Matrix(1, 2) << 0, 1).finished(),
                             Vector::Ones(1));
  EXPECT_EQ(u.status, LpStatus::kUnbounded);
}

TEST(IsEmpty, Basic) {
  const HPolytope contradictory((Matrix(2, 1) << 1, -1).finished(), (Vector(2) << -1, -1).finished());
  EXPECT_TRUE(contradictory.is_empty());
  EXPECT_FALSE(HPolytope::box(-Vector::Ones(2), Vector::Ones(2)).is_empty());
}

TEST(IsEmpty, RepeatedTighteningMatchesIntervalArithmetic) {
  // [-1, 1] tightened by [-0.15, 0.15] each time: nonempty while 0.15 k <= 1.
  HPolytope p = HPolytope::box(-Vector::Ones(1), Vector::Ones(1));
  const auto w = HPolytope::box(Vector::Constant(1, -0.15), Vector::Constant(1, 0.15));
  for (int k = 1; k <= 10; ++k) {
    p = pontryagin_diff(p, Matrix::Identity(1, 1), w);
    EXPECT_EQ(p.is_empty(), 0.15 * k > 1.0) << "k = " << k;
  }
}

TEST(Box, Construction) {
  const auto b = HPolytope::box(Vector::Constant(1, -1), Vector::Constant(1, 1));
  EXPECT_EQ(b.rows(), 2);
  EXPECT_TRUE(b.contains(Vector::Constant(1, 1)));
  const auto pt = HPolytope::point(Vector::Zero(2));
  EXPECT_TRUE(pt.contains(Vector::Zero(2)));
  EXPECT_FALSE(pt.contains(Vector::Constant(2, 1e-6)));
  EXPECT_THROW(HPolytope::box(Vector::Ones(1), -Vector::Ones(1)), DesignError);
  const auto w = HPolytope::box(Vector::Constant(2, -0.01), Vector::Constant(2, 0.01));
  EXPECT_EQ(box_vertices(w).size(), 4u);
}

TEST(Pontryagin, BoxArithmetic) {
  const auto p = HPolytope::box(-Vector::Ones(2), Vector::Ones(2));
  const auto w = HPolytope::box(Vector::Constant(2, -0.2), Vector::Constant(2, 0.2));
  const auto r = pontryagin_diff(p, Matrix::Identity(2, 2), w);
  const auto expected = HPolytope::box(Vector::Constant(2, -0.8), Vector::Constant(2, 0.8));
  for (int i = 0; i < 2; ++i) {
    Vector e = Vector::Zero(2);
    e(i) = 1;
    EXPECT_NEAR(r.support(e), expected.support(e), 1e-12);
    EXPECT_NEAR(r.support(-e), expected.support(-e), 1e-12);
  }
  const auto zero = HPolytope::point(Vector::Zero(2));
  EXPECT_LT((pontryagin_diff(p, Matrix::Identity(2, 2), zero).h() - p.h()).norm(), 1e-15);
}

TEST(Pontryagin, GridOracle) {
  std::mt19937 rng(21);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (int t = 0; t < 20; ++t) {
    const auto p = random_polygon(rng, 1.0, 2.0);
    const auto w = random_polygon(rng, 0.05, 0.2);
    Matrix m(2, 2);
    m << nd(rng), nd(rng), nd(rng), nd(rng);
    const auto r = pontryagin_diff(p, m, w);
    const auto wv = vertices(w);
    ASSERT_FALSE(wv.empty());
    // Interior agreement on a grid; points within 1e-6 of the boundary are skipped.
    for (double x = -2.0; x <= 2.0; x += 0.05)
      for (double y = -2.0; y <= 2.0; y += 0.05) {
        const Vector a = (Vector(2) << x, y).finished();
        const double slack = (r.H() * a - r.h()).maxCoeff();
        if (std::abs(slack) < 1e-6) continue;
        bool inside = true;
        for (const auto& v : wv) inside = inside && p.contains(a + m * v, 1e-8);
        EXPECT_EQ(slack < 0, inside);
      }
  }
}

TEST(Pontryagin, SubsetWhenDisturbanceContainsOrigin) {
  std::mt19937 rng(30);
  for (int t = 0; t < 10; ++t) {
    const auto p = random_polygon(rng, 1.0, 2.0);
    const auto w = random_polygon(rng, 0.05, 0.2);
    const auto r = pontryagin_diff(p, Matrix::Identity(2, 2), w);
    for (int i = 0; i < r.rows(); ++i) EXPECT_LE(r.h()(i), p.h()(i));
  }
}

}  // namespace
}  // namespace mmpc
