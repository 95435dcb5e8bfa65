#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mmpc/lti_model.hpp"

namespace mmpc {

enum class RowKind { kInput, kState, kTerminal };

struct RowTag {
  RowKind kind = RowKind::kState;
  int step = 0;
};

const char* to_string(RowKind kind);

/// minimize  1/2 z'Hz + g'z + constant
/// s.t.      A_in z <= b_in,  A_eq z = b_eq.
struct QpInstance {
  Matrix hessian;
  Vector gradient;
  double constant = 0.0;
  Matrix a_in;
  Vector b_in;
  std::vector<RowTag> in_meta;
  Matrix a_eq;
  Vector b_eq;
  std::vector<RowTag> eq_meta;

  int variables() const { return static_cast<int>(gradient.size()); }
  int inequalities() const { return static_cast<int>(b_in.size()); }
  int equalities() const { return static_cast<int>(b_eq.size()); }
  double objective(const Vector& z) const;
  void validate() const;
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIter };

const char* to_string(QpStatus status);

struct QpSolution {
  QpStatus status = QpStatus::kInfeasible;
  Vector x;
  double objective = 0.0;
  std::vector<int> active_rows;  // indices into the inequality rows
  Vector multipliers_in;         // >= 0
  Vector multipliers_eq;
  int iterations = 0;
  double stationarity = 0.0;
  double primal_violation = 0.0;
  double complementarity = 0.0;
  int blocking_row = -1;  // inequality row that proved infeasibility, if known
};

/// Inverse Cholesky factor of a Hessian, reusable across instances that
/// share it.
struct HessianFactor {
  Matrix j;  // L^{-T} with H = L L'
  double trace_h = 0.0;
  double trace_j = 0.0;
};

HessianFactor factor_hessian(const Matrix& hessian);

struct QpOptions {
  int max_iterations = 0;  // 0 selects 50 (v + rows) with a floor of 1000
  double feasibility_tol = 1e-9;
};

/// Dual active-set solver for strictly convex QPs.  The warm hint only
/// changes the order in which violated rows are considered.
QpSolution solve(const QpInstance& qp, const std::vector<int>& warm = {},
                 const QpOptions& options = {});
QpSolution solve(const QpInstance& qp, const HessianFactor& factor,
                 const std::vector<int>& warm = {}, const QpOptions& options = {});

/// Writes dimensions followed by row-major H, g, A_in, b_in, A_eq, b_eq.
void dump_qp(std::ostream& os, const QpInstance& qp);

}  // namespace mmpc
