#include <cmath>
#include <limits>
#include <vector>

#include "mmpc/polytope.hpp"

namespace mmpc {
namespace {

constexpr double kPivotTol = 1e-11;

// Tableau for  min cost'y  s.t.  T y = rhs, y >= 0,  with a feasible basis.
struct Tableau {
  Matrix t;                // rows x cols, last column is the right-hand side
  std::vector<int> basis;  // basic column per row

  int rows() const { return static_cast<int>(t.rows()); }
  int vars() const { return static_cast<int>(t.cols()) - 1; }

  void pivot(int row, int col) {
    t.row(row) /= t(row, col);
    for (int r = 0; r < rows(); ++r) {
      if (r == row) continue;
      const double f = t(r, col);
      if (f != 0.0) t.row(r) -= f * t.row(row);
    }
    basis[row] = col;
  }

  // Runs Bland's rule on the given objective over columns [0, allowed).
  // Returns false if the objective is unbounded below.
  bool minimize(const Vector& cost, int allowed) {
    const double scale = std::max(1.0, t.cwiseAbs().maxCoeff());
    for (int iter = 0; iter < 50000; ++iter) {
      int entering = -1;
      for (int j = 0; j < allowed; ++j) {
        double reduced = cost(j);
        for (int r = 0; r < rows(); ++r) reduced -= cost(basis[r]) * t(r, j);
        if (reduced < -kPivotTol * std::max(1.0, cost.cwiseAbs().maxCoeff())) {
          entering = j;
          break;
        }
      }
      if (entering < 0) return true;
      int leaving = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < rows(); ++r) {
        const double a = t(r, entering);
        if (a <= kPivotTol * scale) continue;
        const double ratio = t(r, vars()) / a;
        if (ratio < best - 1e-14 ||
            (std::abs(ratio - best) <= 1e-14 && leaving >= 0 && basis[r] < basis[leaving])) {
          best = ratio;
          leaving = r;
        }
      }
      if (leaving < 0) return false;
      pivot(leaving, entering);
    }
    return true;
  }
};

}  // namespace

LpResult maximize_lp(const Vector& c, const Matrix& a, const Vector& b) {
  const int q = static_cast<int>(a.rows());
  const int d = static_cast<int>(a.cols());
  if (c.size() != d || b.size() != q) throw PolytopeError("maximize_lp: dimension mismatch");

  // Columns: x+ (d), x- (d), slack (q), artificial (one per negative-rhs row).
  std::vector<int> negative_rows;
  for (int i = 0; i < q; ++i)
    if (b(i) < 0.0) negative_rows.push_back(i);
  const int n_art = static_cast<int>(negative_rows.size());
  const int n_struct = 2 * d + q;
  const int n_vars = n_struct + n_art;

  Tableau tab;
  tab.t = Matrix::Zero(q, n_vars + 1);
  tab.basis.assign(q, -1);
  for (int i = 0; i < q; ++i) {
    const double sign = b(i) < 0.0 ? -1.0 : 1.0;
    tab.t.block(i, 0, 1, d) = sign * a.row(i);
    tab.t.block(i, d, 1, d) = -sign * a.row(i);
    tab.t(i, 2 * d + i) = sign;
    tab.t(i, n_vars) = sign * b(i);
    if (sign > 0.0) tab.basis[i] = 2 * d + i;
  }
  for (int k = 0; k < n_art; ++k) {
    const int row = negative_rows[k];
    tab.t(row, n_struct + k) = 1.0;
    tab.basis[row] = n_struct + k;
  }

  if (n_art > 0) {
    Vector phase1 = Vector::Zero(n_vars);
    phase1.tail(n_art).setOnes();
    tab.minimize(phase1, n_vars);
    double infeasibility = 0.0;
    for (int r = 0; r < q; ++r)
      if (tab.basis[r] >= n_struct) infeasibility += tab.t(r, n_vars);
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    if (infeasibility > 1e-9 * scale) return {LpStatus::kInfeasible, Vector(), 0.0};
    // Drive degenerate artificials out of the basis where possible.
    for (int r = 0; r < q; ++r) {
      if (tab.basis[r] < n_struct) continue;
      for (int j = 0; j < n_struct; ++j) {
        if (std::abs(tab.t(r, j)) > 1e-9) {
          tab.pivot(r, j);
          break;
        }
      }
    }
  }

  Vector cost = Vector::Zero(n_vars);
  cost.head(d) = -c;
  cost.segment(d, d) = c;
  if (!tab.minimize(cost, n_struct)) return {LpStatus::kUnbounded, Vector(), 0.0};

  Vector y = Vector::Zero(n_vars);
  for (int r = 0; r < q; ++r) y(tab.basis[r]) = tab.t(r, n_vars);
  LpResult out;
  out.status = LpStatus::kOptimal;
  out.x = y.head(d) - y.segment(d, d);
  out.value = c.dot(out.x);
  return out;
}

}  // namespace mmpc
