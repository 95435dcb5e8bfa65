#include "mmpc/polytope.hpp"

#include <cmath>

namespace mmpc {

HPolytope::HPolytope(Matrix h_mat, Vector h_vec)
    : h_mat_(std::move(h_mat)), h_vec_(std::move(h_vec)) {
  if (h_mat_.rows() < 1 || h_mat_.rows() != h_vec_.size())
    throw DesignError("HPolytope: H and h must have the same, nonzero, row count");
  if (!h_mat_.allFinite() || !h_vec_.allFinite())
    throw DesignError("HPolytope: non-finite entry");
}

HPolytope HPolytope::box(const Vector& lower, const Vector& upper) {
  const auto d = lower.size();
  if (d < 1 || upper.size() != d) throw DesignError("box: bound vectors must match and be nonempty");
  if ((upper - lower).minCoeff() < 0.0) throw DesignError("box: lower bound exceeds upper bound");
  Matrix h_mat(2 * d, d);
  h_mat << Matrix::Identity(d, d), -Matrix::Identity(d, d);
  Vector h_vec(2 * d);
  h_vec << upper, -lower;
  HPolytope p(std::move(h_mat), std::move(h_vec));
  p.box_lower_ = lower;
  p.box_upper_ = upper;
  return p;
}

bool HPolytope::contains(const Vector& x, double tol) const {
  if (x.size() != dim()) throw DesignError("HPolytope::contains: dimension mismatch");
  return (h_mat_ * x - h_vec_).maxCoeff() <= tol;
}

double HPolytope::support(const Vector& c) const {
  if (c.size() != dim()) throw DesignError("HPolytope::support: dimension mismatch");
  if (is_box()) {
    double value = 0.0;
    for (int i = 0; i < dim(); ++i)
      value += c(i) >= 0.0 ? c(i) * (*box_upper_)(i) : c(i) * (*box_lower_)(i);
    return value;
  }
  const LpResult lp = maximize_lp(c, h_mat_, h_vec_);
  if (lp.status == LpStatus::kInfeasible) throw PolytopeError("support: polytope is empty");
  if (lp.status == LpStatus::kUnbounded) throw PolytopeError("support: polytope is unbounded in this direction");
  return lp.value;
}

bool HPolytope::is_empty() const {
  if (is_box()) return false;
  return maximize_lp(Vector::Zero(dim()), h_mat_, h_vec_).status == LpStatus::kInfeasible;
}

HPolytope HPolytope::with_offsets(const Vector& h_new) const {
  if (h_new.size() != rows()) throw DesignError("with_offsets: row count mismatch");
  return HPolytope(h_mat_, h_new);
}

Vector row_supports(const Matrix& m, const HPolytope& w) {
  if (m.cols() != w.dim()) throw DesignError("row_supports: dimension mismatch");
  Vector out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out(i) = w.support(m.row(i).transpose());
  return out;
}

HPolytope pontryagin_diff(const HPolytope& p, const Matrix& m, const HPolytope& w) {
  if (m.rows() != p.dim()) throw DesignError("pontryagin_diff: M rows must equal the dimension of P");
  return p.with_offsets(p.h() - row_supports(p.H() * m, w));
}

std::vector<Vector> box_vertices(const HPolytope& p) {
  if (!p.is_box()) throw DesignError("box_vertices: polytope is not a box");
  const int d = p.dim();
  if (d > 20) throw DesignError("box_vertices: dimension too large");
  const Vector upper = p.h().head(d);
  const Vector lower = -p.h().tail(d);
  std::vector<Vector> out;
  for (long mask = 0; mask < (1L << d); ++mask) {
    Vector v(d);
    for (int i = 0; i < d; ++i) v(i) = (mask >> i) & 1 ? upper(i) : lower(i);
    out.push_back(v);
  }
  return out;
}

}  // namespace mmpc
