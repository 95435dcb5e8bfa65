#pragma once

#include <optional>
#include <vector>
#include <stdexcept>

#include "mmpc/lti_model.hpp"

namespace mmpc {

/// Thrown by support() when the set is empty or unbounded in the direction.
class PolytopeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpResult {
  LpStatus status = LpStatus::kInfeasible;
  Vector x;
  double value = 0.0;
};

/// maximize c'x subject to A x <= b with x free.  Dense two-phase simplex
/// with Bland's rule.
LpResult maximize_lp(const Vector& c, const Matrix& a, const Vector& b);

/// {x : H x <= h}.  Rows are never pruned, so tightening only edits h and
/// row identities stay stable across a recursion.
class HPolytope {
 public:
  HPolytope() = default;
  HPolytope(Matrix h_mat, Vector h_vec);

  static HPolytope box(const Vector& lower, const Vector& upper);
  static HPolytope point(const Vector& p) { return box(p, p); }

  const Matrix& H() const { return h_mat_; }
  const Vector& h() const { return h_vec_; }
  int dim() const { return static_cast<int>(h_mat_.cols()); }
  int rows() const { return static_cast<int>(h_mat_.rows()); }
  bool is_box() const { return box_lower_.has_value(); }

  bool contains(const Vector& x, double tol = 1e-9) const;
  /// sup { c'x : x in P }.  Throws PolytopeError when empty or unbounded.
  double support(const Vector& c) const;
  bool is_empty() const;
  /// Same rows, new right-hand side.
  HPolytope with_offsets(const Vector& h_new) const;

 private:
  Matrix h_mat_;
  Vector h_vec_;
  std::optional<Vector> box_lower_;
  std::optional<Vector> box_upper_;
};

/// P minus M W (Pontryagin difference) without forming M W.
HPolytope pontryagin_diff(const HPolytope& p, const Matrix& m, const HPolytope& w);

/// support(W, (row M)') for each row of M; i.e. the margin M W adds to each
/// halfspace whose normal is a row of M.
Vector row_supports(const Matrix& m, const HPolytope& w);

/// Vertices of a box (all corner combinations).
std::vector<Vector> box_vertices(const HPolytope& p);

}  // namespace mmpc
