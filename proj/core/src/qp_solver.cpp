#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "mmpc/qp.hpp"

namespace mmpc {

const char* to_string(RowKind kind) {
  switch (kind) {
    case RowKind::kInput: return "input";
    case RowKind::kState: return "state";
    case RowKind::kTerminal: return "terminal";
  }
  return "?";
}

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kMaxIter: return "max_iter";
  }
  return "?";
}

double QpInstance::objective(const Vector& z) const {
  return 0.5 * z.dot(hessian * z) + gradient.dot(z) + constant;
}

void QpInstance::validate() const {
  const auto v = gradient.size();
  if (hessian.rows() != v || hessian.cols() != v) throw DesignError("QpInstance: Hessian shape");
  if (a_in.rows() != b_in.size() || (a_in.rows() > 0 && a_in.cols() != v))
    throw DesignError("QpInstance: inequality shape");
  if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != v))
    throw DesignError("QpInstance: equality shape");
  if (static_cast<Eigen::Index>(in_meta.size()) != b_in.size() ||
      static_cast<Eigen::Index>(eq_meta.size()) != b_eq.size())
    throw DesignError("QpInstance: row tags must cover every row");
}

HessianFactor factor_hessian(const Matrix& hessian) {
  Eigen::LLT<Matrix> llt(0.5 * (hessian + hessian.transpose()));
  if (llt.info() != Eigen::Success) throw DesignError("factor_hessian: Hessian is not positive definite");
  const auto n = hessian.rows();
  HessianFactor f;
  // J = L^{-T}
  f.j = llt.matrixU().solve(Matrix::Identity(n, n));
  f.trace_h = hessian.trace();
  f.trace_j = f.j.trace();
  return f;
}

namespace {

// Working set of the dual method: J (orthogonal-like basis), R (upper
// triangular), active constraint normals kept implicitly.
class DualActiveSet {
 public:
  explicit DualActiveSet(const HessianFactor& f)
      : n_(static_cast<int>(f.j.rows())), j_(f.j), r_(Matrix::Zero(n_, n_)) {}

  int size() const { return iq_; }

  // z = J2 d2, the primal step direction for a new normal with d = J'n.
  Vector step_direction(const Vector& d) const {
    if (iq_ >= n_) return Vector::Zero(n_);
    return j_.rightCols(n_ - iq_) * d.tail(n_ - iq_);
  }

  // r = R^{-1} d1, the change in the active multipliers.
  Vector multiplier_direction(const Vector& d) const {
    if (iq_ == 0) return Vector();
    return r_.topLeftCorner(iq_, iq_).triangularView<Eigen::Upper>().solve(d.head(iq_));
  }

  Vector project(const Vector& normal) const { return j_.transpose() * normal; }

  // Appends a normal with d = J'n; false if it is linearly dependent.
  bool add(Vector d) {
    for (int j = n_ - 1; j >= iq_ + 1; --j) {
      double cc = d(j - 1);
      double ss = d(j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      d(j) = 0.0;
      ss /= h;
      cc /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d(j - 1) = -h;
      } else {
        d(j - 1) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = 0; k < n_; ++k) {
        const double t1 = j_(k, j - 1);
        const double t2 = j_(k, j);
        j_(k, j - 1) = t1 * cc + t2 * ss;
        j_(k, j) = xny * (t1 + j_(k, j - 1)) - t2;
      }
    }
    if (iq_ >= n_) return false;
    if (std::abs(d(iq_)) <= std::numeric_limits<double>::epsilon() * r_norm_ * 1e2) return false;
    r_.col(iq_).head(iq_ + 1) = d.head(iq_ + 1);
    r_norm_ = std::max(r_norm_, std::abs(d(iq_)));
    ++iq_;
    return true;
  }

  // Removes active position `pos`, restoring triangularity with Givens rotations.
  void remove(int pos) {
    for (int i = pos; i < iq_ - 1; ++i) r_.col(i) = r_.col(i + 1);
    r_.col(iq_ - 1).setZero();
    --iq_;
    for (int j = pos; j < iq_; ++j) {
      double cc = r_(j, j);
      double ss = r_(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      r_(j + 1, j) = 0.0;
      if (cc < 0.0) {
        r_(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        r_(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = j + 1; k < iq_; ++k) {
        const double t1 = r_(j, k);
        const double t2 = r_(j + 1, k);
        r_(j, k) = t1 * cc + t2 * ss;
        r_(j + 1, k) = xny * (t1 + r_(j, k)) - t2;
      }
      for (int k = 0; k < n_; ++k) {
        const double t1 = j_(k, j);
        const double t2 = j_(k, j + 1);
        j_(k, j) = t1 * cc + t2 * ss;
        j_(k, j + 1) = xny * (j_(k, j) + t1) - t2;
      }
    }
  }

 private:
  int n_;
  Matrix j_;
  Matrix r_;
  int iq_ = 0;
  double r_norm_ = 1.0;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

void certify(const QpInstance& qp, QpSolution& sol) {
  Vector grad = qp.hessian * sol.x + qp.gradient;
  if (qp.inequalities() > 0) grad += qp.a_in.transpose() * sol.multipliers_in;
  if (qp.equalities() > 0) grad += qp.a_eq.transpose() * sol.multipliers_eq;
  const double scale = 1.0 + qp.gradient.cwiseAbs().maxCoeff() +
                       (qp.hessian * sol.x).cwiseAbs().maxCoeff();
  sol.stationarity = grad.cwiseAbs().maxCoeff() / scale;
  double viol = 0.0;
  double comp = 0.0;
  for (int i = 0; i < qp.inequalities(); ++i) {
    const double slack = qp.b_in(i) - qp.a_in.row(i).dot(sol.x);
    viol = std::max(viol, -slack);
    comp = std::max(comp, std::abs(sol.multipliers_in(i) * slack));
  }
  for (int i = 0; i < qp.equalities(); ++i)
    viol = std::max(viol, std::abs(qp.a_eq.row(i).dot(sol.x) - qp.b_eq(i)));
  sol.primal_violation = viol;
  sol.complementarity = comp / scale;
  sol.objective = qp.objective(sol.x);
}

}  // namespace

QpSolution solve(const QpInstance& qp, const std::vector<int>& warm, const QpOptions& options) {
  qp.validate();
  return solve(qp, factor_hessian(qp.hessian), warm, options);
}

QpSolution solve(const QpInstance& qp, const HessianFactor& factor, const std::vector<int>& warm,
                 const QpOptions& options) {
  const int n = qp.variables();
  const int m_in = qp.inequalities();
  const int m_eq = qp.equalities();
  if (factor.j.rows() != n) throw DesignError("solve: Hessian factor does not match the instance");

  QpSolution sol;
  sol.multipliers_in = Vector::Zero(m_in);
  sol.multipliers_eq = Vector::Zero(m_eq);
  const int max_iter =
      options.max_iterations > 0 ? options.max_iterations : std::max(1000, 50 * (n + m_in + m_eq));

  // Row scaling for the violation test only.
  Vector row_norm(m_in);
  for (int i = 0; i < m_in; ++i) row_norm(i) = std::max(1e-300, qp.a_in.row(i).norm());
  std::vector<char> hinted(m_in, 0);
  for (int w : warm)
    if (w >= 0 && w < m_in) hinted[w] = 1;

  // Rows with a zero normal are constant checks.
  std::vector<char> usable(m_in, 1);
  for (int i = 0; i < m_in; ++i) {
    if (row_norm(i) <= 1e-14 * (1.0 + std::abs(qp.b_in(i)))) {
      usable[i] = 0;
      if (qp.b_in(i) < -options.feasibility_tol) {
        sol.status = QpStatus::kInfeasible;
        sol.blocking_row = i;
        sol.x = Vector::Zero(n);
        return sol;
      }
    }
  }

  DualActiveSet ws(factor);
  // Unconstrained minimizer.
  Vector x = -(factor.j * (factor.j.transpose() * qp.gradient));
  // active[k] >= 0: inequality row; active[k] < 0: equality -(row + 1).
  std::vector<int> active;
  std::vector<double> u;

  // Equalities are replaced by an orthonormal basis of their row space, so
  // redundant rows (a terminal equality with fewer moves than states, say)
  // never reach the working set.  b must lie in the column space of A_eq.
  Matrix aeq;
  Vector beq;
  Matrix eq_map;  // original multipliers = eq_map * reduced ones
  if (m_eq > 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(qp.a_eq);
    qr.setThreshold(1e-10);
    const Matrix q = qr.householderQ();
    eq_map = q.leftCols(qr.rank());
    aeq = eq_map.transpose() * qp.a_eq;
    beq = eq_map.transpose() * qp.b_eq;
    const double outside = (qp.b_eq - eq_map * beq).cwiseAbs().maxCoeff();
    if (outside > options.feasibility_tol * (1.0 + qp.b_eq.cwiseAbs().maxCoeff())) {
      sol.status = QpStatus::kInfeasible;
      sol.x = x;
      return sol;
    }
  }
  Vector eq_u = Vector::Zero(aeq.rows());

  // Equalities first; dependent but consistent rows are skipped.
  for (int i = 0; i < aeq.rows(); ++i) {
    const Vector np = aeq.row(i).transpose();
    const Vector d = ws.project(np);
    const Vector z = ws.step_direction(d);
    const Vector r = ws.multiplier_direction(d);
    const double residual = np.dot(x) - beq(i);
    const double znp = z.dot(np);
    double t = 0.0;
    if (std::abs(znp) > std::numeric_limits<double>::epsilon() * np.squaredNorm() * 1e3) {
      t = -residual / znp;
    } else {
      if (std::abs(residual) > options.feasibility_tol * (1.0 + std::abs(beq(i)))) {
        sol.status = QpStatus::kInfeasible;
        sol.x = x;
        return sol;
      }
      continue;
    }
    x += t * z;
    for (int k = 0; k < ws.size(); ++k) u[k] -= t * r(k);
    if (!ws.add(d)) continue;
    active.push_back(-(i + 1));
    u.push_back(t);
  }

  std::vector<char> is_active(m_in, 0);
  int iter = 0;
  while (true) {
    if (++iter > max_iter) {
      sol.status = QpStatus::kMaxIter;
      break;
    }
    // Pick the violated row to add.
    int ip = -1;
    double worst = 0.0;
    bool worst_hinted = false;
    for (int i = 0; i < m_in; ++i) {
      if (!usable[i] || is_active[i]) continue;
      const double s = (qp.b_in(i) - qp.a_in.row(i).dot(x)) / row_norm(i);
      if (s >= -options.feasibility_tol * (1.0 + std::abs(qp.b_in(i)) / row_norm(i))) continue;
      const bool h = hinted[i] != 0;
      if (ip < 0 || (h && !worst_hinted) || (h == worst_hinted && s < worst)) {
        ip = i;
        worst = s;
        worst_hinted = h;
      }
    }
    if (ip < 0) {
      sol.status = QpStatus::kOptimal;
      break;
    }

    // Add row ip, dropping blocking rows as needed (dual steps).  The row is
    // handled in the form  n'x >= -b  with n = -a.
    const Vector np = -qp.a_in.row(ip).transpose();
    double u_new = 0.0;
    bool added = false;
    while (!added) {
      if (++iter > max_iter) break;
      const Vector d = ws.project(np);
      const Vector z = ws.step_direction(d);
      const Vector r = ws.multiplier_direction(d);
      // Dual step bound from active inequality multipliers.
      double t1 = kInf;
      int l_pos = -1;
      for (int k = 0; k < ws.size(); ++k) {
        if (active[k] < 0) continue;
        if (r(k) > 0.0 && u[k] / r(k) < t1) {
          t1 = u[k] / r(k);
          l_pos = k;
        }
      }
      const double znp = z.dot(np);
      const double slack = qp.b_in(ip) + np.dot(x);
      double t2 = kInf;
      if (z.squaredNorm() > std::numeric_limits<double>::epsilon() * 1e2 * np.squaredNorm() &&
          znp > 0.0)
        t2 = -slack / znp;
      const double t = std::min(t1, t2);
      if (t == kInf) {
        sol.status = QpStatus::kInfeasible;
        sol.blocking_row = ip;
        sol.x = x;
        sol.iterations = iter;
        return sol;
      }
      if (t2 == kInf) {
        // Partial dual step, then drop the blocking row.
        for (int k = 0; k < ws.size(); ++k) u[k] -= t * r(k);
        u_new += t;
        is_active[active[l_pos]] = 0;
        ws.remove(l_pos);
        active.erase(active.begin() + l_pos);
        u.erase(u.begin() + l_pos);
        continue;
      }
      x += t * z;
      for (int k = 0; k < ws.size(); ++k) u[k] -= t * r(k);
      u_new += t;
      if (t == t2) {
        if (!ws.add(d)) {
          // Numerically dependent: the row is satisfied at x now, leave it out.
          added = true;
          break;
        }
        active.push_back(ip);
        u.push_back(u_new);
        is_active[ip] = 1;
        added = true;
      } else {
        is_active[active[l_pos]] = 0;
        ws.remove(l_pos);
        active.erase(active.begin() + l_pos);
        u.erase(u.begin() + l_pos);
      }
    }
    if (!added) {
      sol.status = QpStatus::kMaxIter;
      break;
    }
  }

  sol.x = x;
  sol.iterations = iter;
  for (size_t k = 0; k < active.size(); ++k) {
    if (active[k] >= 0) {
      sol.multipliers_in(active[k]) = std::max(0.0, u[k]);
      sol.active_rows.push_back(active[k]);
    } else {
      // Equality rows entered with normal +a, hence the sign flip.
      eq_u(-active[k] - 1) = -u[k];
    }
  }
  if (m_eq > 0) sol.multipliers_eq = eq_map * eq_u;
  std::sort(sol.active_rows.begin(), sol.active_rows.end());
  certify(qp, sol);
  return sol;
}

void dump_qp(std::ostream& os, const QpInstance& qp) {
  os << std::setprecision(17);
  os << qp.variables() << ' ' << qp.inequalities() << ' ' << qp.equalities() << '\n';
  auto put = [&os](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
      os << '\n';
    }
  };
  put(qp.hessian);
  put(qp.gradient.transpose());
  put(qp.a_in);
  put(qp.b_in.transpose());
  put(qp.a_eq);
  put(qp.b_eq.transpose());
  os << qp.constant << '\n';
}

}  // namespace mmpc
