#include "mmpc/lti_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

namespace mmpc {
namespace {

void require(bool condition, const std::string& message) {
  if (!condition) throw DesignError(message);
}

Matrix or_empty(const Matrix& m, Eigen::Index rows) {
  if (m.size() == 0) return Matrix::Zero(rows, 0);
  return m;
}

}  // namespace

void ContinuousPlant::validate() const {
  const auto n = a.rows();
  require(n > 0 && a.cols() == n, "continuous plant: A must be square and nonempty");
  require(b.rows() == n && b.cols() > 0, "continuous plant: B must have n rows and at least one column");
  require(c.cols() == n, "continuous plant: C must have n columns");
  require(e.rows() == n, "continuous plant: E must have n rows");
  require(a.allFinite() && b.allFinite() && c.allFinite() && e.allFinite(),
          "continuous plant: non-finite matrix entry");
}

void DiscretePlant::validate() const {
  const auto n = a.rows();
  require(n > 0 && a.cols() == n, "discrete plant: A must be square and nonempty");
  require(b.rows() == n && b.cols() > 0, "discrete plant: B must have n rows and m >= 1 columns");
  require(e.rows() == n, "discrete plant: E must have n rows");
  require(c.cols() == n, "discrete plant: C must have n columns");
  require(dt > 0.0, "discrete plant: dt must be positive");
  require(a.allFinite() && b.allFinite() && e.allFinite() && c.allFinite(),
          "discrete plant: non-finite matrix entry");
}

int Schedule::sigma(long k) const {
  require(m >= 1, "schedule: m must be at least 1");
  long r = (k + offset) % m;
  if (r < 0) r += m;
  return static_cast<int>(r) + 1;
}

MovePattern::MovePattern(std::vector<std::vector<int>> channels_per_phase,
                         int solve_interval, int offset)
    : channels_(std::move(channels_per_phase)),
      solve_interval_(solve_interval),
      offset_(offset) {
  require(!channels_.empty(), "move pattern: period must be at least 1");
  require(solve_interval_ >= 1 && period() % solve_interval_ == 0,
          "move pattern: solve interval must divide the period");
  for (const auto& phase : channels_) {
    for (int c : phase) {
      require(c >= 0, "move pattern: negative channel index");
      channel_count_ = std::max(channel_count_, c + 1);
    }
  }
  require(channel_count_ > 0, "move pattern: no channel is ever moved");
}

MovePattern MovePattern::multiplexed(const Schedule& schedule) {
  require(schedule.m >= 1, "schedule: m must be at least 1");
  std::vector<std::vector<int>> phases(schedule.m);
  for (int p = 0; p < schedule.m; ++p) phases[p] = {p};
  return MovePattern(std::move(phases), 1, schedule.offset);
}

MovePattern MovePattern::synchronized(int channels, int period) {
  require(channels >= 1 && period >= 1, "synchronized pattern: bad sizes");
  std::vector<std::vector<int>> phases(period);
  phases[0].resize(channels);
  std::iota(phases[0].begin(), phases[0].end(), 0);
  return MovePattern(std::move(phases), period, 0);
}

int MovePattern::phase(long k) const {
  long r = (k + offset_) % period();
  if (r < 0) r += period();
  return static_cast<int>(r);
}

const std::vector<int>& MovePattern::channels(int phase) const {
  int p = phase % period();
  if (p < 0) p += period();
  return channels_[p];
}

bool MovePattern::is_solve_phase(int phase) const {
  int p = phase % period();
  if (p < 0) p += period();
  return p % solve_interval_ == 0;
}

ContinuousPlant make_continuous_plant(Matrix a, Matrix b, Matrix c, Matrix e) {
  ContinuousPlant plant;
  plant.e = or_empty(e, a.rows());
  plant.a = std::move(a);
  plant.b = std::move(b);
  plant.c = std::move(c);
  plant.validate();
  return plant;
}

DiscretePlant discretize_zoh(const ContinuousPlant& plant, double dt) {
  plant.validate();
  require(dt > 0.0 && std::isfinite(dt), "discretize_zoh: dt must be positive");
  const auto n = plant.a.rows();
  const auto nu = plant.b.cols();
  const auto nw = plant.e.cols();
  Matrix m = Matrix::Zero(n + nu + nw, n + nu + nw);
  m.topLeftCorner(n, n) = plant.a * dt;
  m.block(0, n, n, nu) = plant.b * dt;
  m.block(0, n + nu, n, nw) = plant.e * dt;
  const Matrix phi = m.exp();
  require(phi.allFinite(), "discretize_zoh: matrix exponential overflowed");

  DiscretePlant out;
  out.a = phi.topLeftCorner(n, n);
  out.b = phi.block(0, n, n, nu);
  out.e = phi.block(0, n + nu, n, nw);
  out.c = plant.c;
  out.dt = dt;
  out.form = InputForm::kAbsolute;
  return out;
}

DiscretePlant augment_delta_u(const DiscretePlant& plant) {
  plant.validate();
  require(plant.form == InputForm::kAbsolute,
          "augment_delta_u: plant is already in move form");
  const auto n = plant.a.rows();
  const auto m = plant.b.cols();
  DiscretePlant out;
  out.a = Matrix::Zero(n + m, n + m);
  out.a.topLeftCorner(n, n) = plant.a;
  out.a.topRightCorner(n, m) = plant.b;
  out.a.bottomRightCorner(m, m).setIdentity();
  out.b.resize(n + m, m);
  out.b << plant.b, Matrix::Identity(m, m);
  out.e = Matrix::Zero(n + m, plant.e.cols());
  out.e.topRows(n) = plant.e;
  out.c = Matrix::Zero(plant.c.rows(), n + m);
  out.c.leftCols(n) = plant.c;
  out.dt = plant.dt;
  out.form = InputForm::kDeltaU;
  return out;
}

DiscretePlant augment_velocity_form(const DiscretePlant& plant) {
  plant.validate();
  require(plant.form == InputForm::kAbsolute,
          "augment_velocity_form: plant is already in move form");
  const auto n = plant.a.rows();
  const auto p = plant.c.rows();
  require(p > 0, "augment_velocity_form: plant has no outputs");
  DiscretePlant out;
  out.a = Matrix::Zero(n + p, n + p);
  out.a.topLeftCorner(n, n) = plant.a;
  out.a.bottomLeftCorner(p, n) = plant.c * plant.a;
  out.a.bottomRightCorner(p, p).setIdentity();
  out.b.resize(n + p, plant.b.cols());
  out.b << plant.b, plant.c * plant.b;
  out.e.resize(n + p, plant.e.cols());
  out.e << plant.e, plant.c * plant.e;
  out.c = Matrix::Zero(p, n + p);
  out.c.rightCols(p).setIdentity();
  out.dt = plant.dt;
  out.form = InputForm::kVelocity;
  return out;
}

int horizon_steps(int control_horizon, int channels) {
  require(control_horizon >= 1 && channels >= 1, "horizon_steps: Nu and m must be >= 1");
  return (control_horizon - 1) * channels + 1;
}

PredictionMatrices build_prediction(const DiscretePlant& plant,
                                    const MovePattern& pattern, int phase,
                                    int steps) {
  plant.validate();
  require(steps >= 1, "build_prediction: horizon must be at least one step");
  require(pattern.channel_count() <= plant.channels(),
          "build_prediction: pattern refers to a channel the plant lacks");
  const int n = plant.states();

  PredictionMatrices pm;
  pm.horizon = steps;
  pm.states = n;
  for (int i = 0; i < steps; ++i) {
    for (int c : pattern.channels(phase + i)) pm.slots.push_back({i, c});
  }
  const int v = static_cast<int>(pm.slots.size());

  pm.phi.resize(static_cast<Eigen::Index>(steps) * n, n);
  Matrix power = plant.a;
  for (int i = 0; i < steps; ++i) {
    pm.phi.middleRows(i * n, n) = power;
    power = plant.a * power;
  }

  // Column of slot (j, c) holds A^{i-1-j} B_c in the block row of x_{k+i}.
  pm.g = Matrix::Zero(static_cast<Eigen::Index>(steps) * n, v);
  for (int s = 0; s < v; ++s) {
    const auto& slot = pm.slots[s];
    Vector col = plant.b.col(slot.channel);
    for (int i = slot.step + 1; i <= steps; ++i) {
      pm.g.block((i - 1) * n, s, n, 1) = col;
      col = plant.a * col;
    }
  }

  pm.groups.assign(pattern.period(), {});
  for (int s = 0; s < v; ++s) pm.groups[pm.slots[s].step % pattern.period()].push_back(s);
  return pm;
}

PredictionMatrices build_prediction(const DiscretePlant& plant,
                                    const Schedule& schedule, long k,
                                    int steps) {
  require(steps >= 1 && (steps - 1) % schedule.m == 0,
          "build_prediction: N must equal (Nu - 1) m + 1");
  require(schedule.m <= plant.channels(),
          "build_prediction: schedule has more channels than the plant");
  const MovePattern pattern = MovePattern::multiplexed(Schedule{schedule.m, 0});
  return build_prediction(plant, pattern, schedule.phase(k), steps);
}

bool is_stabilizable(const Matrix& a, const Matrix& b, double rel_tol) {
  require(a.rows() == a.cols() && b.rows() == a.rows(), "is_stabilizable: dimension mismatch");
  const auto n = a.rows();
  Eigen::EigenSolver<Matrix> es(a, false);
  const Eigen::MatrixXcd ac = a.cast<std::complex<double>>();
  const Eigen::MatrixXcd bc = b.cast<std::complex<double>>();
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> lambda = es.eigenvalues()(i);
    if (std::abs(lambda) < 1.0 - 1e-12) continue;
    Eigen::MatrixXcd pbh(n, n + b.cols());
    pbh << ac - lambda * Eigen::MatrixXcd::Identity(n, n), bc;
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pbh);
    const auto& sv = svd.singularValues();
    const double threshold = rel_tol * std::max(1.0, sv(0));
    if (sv(n - 1) <= threshold) return false;
  }
  return true;
}

double spectral_radius(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace mmpc
