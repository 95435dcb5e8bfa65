#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when a model, design, or configuration violates a precondition.
class DesignError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Continuous-time plant  xdot = A x + B u + E w,  y = C x.
struct ContinuousPlant {
  Matrix a;
  Matrix b;
  Matrix c;
  Matrix e;  // disturbance map; may have zero columns

  int states() const { return static_cast<int>(a.rows()); }
  int inputs() const { return static_cast<int>(b.cols()); }
  void validate() const;
};

/// How the input of a DiscretePlant is to be read.
enum class InputForm {
  kAbsolute,  // input is the held level u
  kDeltaU,    // state is [x; u_prev], input is the move du
  kVelocity,  // state is [dx; y], input is the move du
};

/// Discrete-time plant  x+ = A x + sum_j B_j du_j + E w.
///
/// Column j of `b` is the channel-j input vector B_j.  `c` maps the state to
/// the physical outputs and is carried through the augmentations.
struct DiscretePlant {
  Matrix a;
  Matrix b;
  Matrix e;
  Matrix c;
  double dt = 1.0;
  InputForm form = InputForm::kAbsolute;

  int states() const { return static_cast<int>(a.rows()); }
  int channels() const { return static_cast<int>(b.cols()); }
  int disturbances() const { return static_cast<int>(e.cols()); }
  Vector input_column(int channel) const { return b.col(channel); }
  void validate() const;
};

/// Cyclic channel schedule: sigma(k) = ((k + offset) mod m) + 1.
struct Schedule {
  int m = 1;
  int offset = 0;

  /// One-based channel index moved at step k.
  int sigma(long k) const;
  /// Zero-based phase of step k.
  int phase(long k) const { return sigma(k) - 1; }
};

/// Channels moved at each phase of a periodic update pattern, plus how often
/// the controller re-plans.  Multiplexed control moves one channel per
/// phase and re-plans every step; synchronized control moves every channel
/// at phase 0 and re-plans once per period.
class MovePattern {
 public:
  MovePattern(std::vector<std::vector<int>> channels_per_phase,
              int solve_interval, int offset = 0);

  static MovePattern multiplexed(const Schedule& schedule);
  static MovePattern synchronized(int channels, int period);

  int period() const { return static_cast<int>(channels_.size()); }
  int solve_interval() const { return solve_interval_; }
  int offset() const { return offset_; }
  int phase(long k) const;
  const std::vector<int>& channels(int phase) const;
  int width(int phase) const { return static_cast<int>(channels(phase).size()); }
  bool is_solve_phase(int phase) const;
  int channel_count() const { return channel_count_; }

 private:
  std::vector<std::vector<int>> channels_;
  int solve_interval_ = 1;
  int offset_ = 0;
  int channel_count_ = 0;
};

/// One planned move: the channel moved at a given prediction step.
struct MoveSlot {
  int step = 0;
  int channel = 0;
};

/// Stacked prediction  X = Phi x + G dU  over N steps starting at a phase.
///
/// `slots` lists the columns of G in order.  For a multiplexed pattern there
/// is exactly one slot per step and `groups` holds the per-channel column
/// groupings g_1 ... g_m (g_1 is the channel moved at the first step).
struct PredictionMatrices {
  Matrix phi;
  Matrix g;
  std::vector<MoveSlot> slots;
  std::vector<std::vector<int>> groups;
  int horizon = 0;
  int states = 0;

  /// Rows of the stacked prediction for x_{k+i}, i in [1, N].
  auto state_rows(int i) const { return g.middleRows((i - 1) * states, states); }
};

ContinuousPlant make_continuous_plant(Matrix a, Matrix b, Matrix c,
                                      Matrix e = Matrix());

/// Exact zero-order-hold discretization; the returned plant is in absolute-u
/// form.  The disturbance is held over each sample as well.
DiscretePlant discretize_zoh(const ContinuousPlant& plant, double dt);

/// [x; u_prev] augmentation so that the input becomes the move du.
DiscretePlant augment_delta_u(const DiscretePlant& plant);

/// [dx; y] (velocity-form) augmentation; outputs become states.
DiscretePlant augment_velocity_form(const DiscretePlant& plant);

/// Horizon length N = (Nu - 1) m + 1.
int horizon_steps(int control_horizon, int channels);

PredictionMatrices build_prediction(const DiscretePlant& plant,
                                    const MovePattern& pattern, int phase,
                                    int steps);

/// Multiplexed prediction at time k; N must be of the form (Nu - 1) m + 1.
PredictionMatrices build_prediction(const DiscretePlant& plant,
                                    const Schedule& schedule, long k,
                                    int steps);

/// PBH test at every eigenvalue with modulus >= 1.
bool is_stabilizable(const Matrix& a, const Matrix& b, double rel_tol = 1e-9);

double spectral_radius(const Matrix& a);

}  // namespace mmpc
