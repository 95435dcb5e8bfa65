#include "mmpc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <thread>

#include <json.hpp>

namespace mmpc {

Disturbance Disturbance::none(int dim) {
  Disturbance d;
  d.dim_ = dim;
  return d;
}

Disturbance Disturbance::pulse(double start_s, double end_s, const Vector& magnitude, double dt) {
  if (!(dt > 0.0)) throw DesignError("pulse: dt must be positive");
  if (end_s < start_s) throw DesignError("pulse: end before start");
  Disturbance d;
  d.kind_ = Kind::kPulse;
  d.dim_ = static_cast<int>(magnitude.size());
  // Aligned to step boundaries: step k is active when start <= k dt < end.
  // The small slack absorbs rounding in start / dt.
  d.first_ = static_cast<long>(std::ceil(start_s / dt - 1e-9));
  d.last_ = static_cast<long>(std::ceil(end_s / dt - 1e-9));
  d.magnitude_ = magnitude;
  return d;
}

Disturbance Disturbance::bounded_random(const HPolytope& w, unsigned seed, long steps) {
  Disturbance d;
  d.kind_ = Kind::kSequence;
  d.dim_ = w.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);

  // Bounding box for rejection sampling, and the vertices (for boxes, the
  // corners; otherwise LP maximizers in random directions).
  Vector lo(d.dim_), hi(d.dim_);
  for (int i = 0; i < d.dim_; ++i) {
    Vector e = Vector::Zero(d.dim_);
    e(i) = 1.0;
    hi(i) = w.support(e);
    lo(i) = -w.support(-e);
  }
  std::vector<Vector> extremes;
  for (const Vector& v : sample_extreme_points(w, 64, seed ^ 0x9e3779b9u))
    if (d.dim_ == 0 || (w.H() * v - w.h()).maxCoeff() > -1e-9) extremes.push_back(v);
  std::uniform_int_distribution<size_t> pick(0, extremes.empty() ? 0 : extremes.size() - 1);

  d.samples_.reserve(static_cast<size_t>(std::max<long>(steps, 0)));
  for (long k = 0; k < steps; ++k) {
    if (coin(rng) && !extremes.empty()) {
      d.samples_.push_back(extremes[pick(rng)]);
      continue;
    }
    Vector v(d.dim_);
    for (int tries = 0;; ++tries) {
      for (int i = 0; i < d.dim_; ++i) v(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
      if (w.contains(v, 1e-12)) break;
      if (tries > 1000) {
        v = extremes.empty() ? Vector::Zero(d.dim_) : extremes[pick(rng)];
        break;
      }
    }
    d.samples_.push_back(v);
  }
  return d;
}

Vector Disturbance::at(long k) const {
  switch (kind_) {
    case Kind::kNone: break;
    case Kind::kPulse:
      if (k >= first_ && k < last_) return magnitude_;
      break;
    case Kind::kSequence:
      if (k >= 0 && k < static_cast<long>(samples_.size())) return samples_[static_cast<size_t>(k)];
      break;
  }
  return Vector::Zero(dim_);
}

SimResult run_closed_loop(const SimScenario& scn) {
  const DiscretePlant& plant = scn.design.plant;
  const int n = plant.states();
  const int nu = plant.channels();
  const int nw = plant.disturbances();
  if (scn.x0.size() != n) throw DesignError("run_closed_loop: x0 has the wrong size");
  if (scn.steps < 0) throw DesignError("run_closed_loop: negative duration");
  if (nw > 0 && scn.disturbance.dim() != nw)
    throw DesignError("run_closed_loop: disturbance dimension does not match E");

  Controller ctrl(scn.design);
  SimResult res;
  res.name = scn.name;
  res.dt = plant.dt;
  res.x.resize(scn.steps + 1, n);
  res.u.resize(scn.steps, nu);
  res.du.resize(scn.steps, nu);
  res.w.resize(scn.steps, nw);
  res.y.resize(scn.steps + 1, plant.c.rows());
  res.qp_iterations.assign(static_cast<size_t>(scn.steps), 0);
  res.qp_variables.assign(static_cast<size_t>(scn.steps), 0);
  res.qp_seconds.assign(static_cast<size_t>(scn.steps), 0.0);
  res.objective.assign(static_cast<size_t>(scn.steps), std::numeric_limits<double>::quiet_NaN());

  Vector u_level = Vector::Zero(nu);
  if (plant.form == InputForm::kDeltaU) u_level = scn.x0.tail(nu);

  Vector x = scn.x0;
  res.x.row(0) = x.transpose();
  res.y.row(0) = (plant.c * x).transpose();
  for (long k = 0; k < scn.steps; ++k) {
    const StepOutcome out = ctrl.step(x);
    const auto kk = static_cast<size_t>(k);
    if (out.solved) {
      res.qp_iterations[kk] = out.iterations;
      res.qp_variables[kk] = out.variables;
      res.qp_seconds[kk] = out.solve_seconds;
      res.objective[kk] = out.objective;
    }
    if (plant.form == InputForm::kAbsolute) u_level = out.du;
    else u_level += out.du;
    const Vector w = nw > 0 ? scn.disturbance.at(k) : Vector::Zero(0);
    x = plant.a * x + plant.b * out.du;
    if (nw > 0) x += plant.e * w;
    res.du.row(k) = out.du.transpose();
    res.u.row(k) = u_level.transpose();
    if (nw > 0) res.w.row(k) = w.transpose();
    res.x.row(k + 1) = x.transpose();
    res.y.row(k + 1) = (plant.c * x).transpose();
  }
  res.metrics = compute_metrics(res, scn.design, scn.peak_state);
  return res;
}

std::vector<SimResult> run_batch(const std::vector<SimScenario>& scenarios, int threads) {
  std::vector<SimResult> results(scenarios.size());
  std::vector<std::exception_ptr> errors(scenarios.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < scenarios.size(); i = next++) {
      try {
        results[i] = run_closed_loop(scenarios[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp<int>(threads, 1, static_cast<int>(std::max<size_t>(scenarios.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

Metrics compute_metrics(const SimResult& r, const ControllerDesign& design, int peak_state) {
  Metrics m;
  const double dt = r.dt;
  for (Eigen::Index k = 0; k < r.u.rows(); ++k) m.control_energy += r.u.row(k).squaredNorm() * dt;
  if (peak_state >= 0 && peak_state < r.x.cols() && r.x.rows() > 0)
    m.peak_state = r.x.col(peak_state).cwiseAbs().maxCoeff();
  if (r.y.size() > 0) m.peak_output = r.y.cwiseAbs().maxCoeff();

  std::map<int, int> counts;
  for (size_t k = 0; k < r.qp_iterations.size(); ++k) {
    if (std::isnan(r.objective[k])) continue;
    ++m.qp_count;
    ++counts[r.qp_variables[k]];
    m.solver_seconds += r.qp_seconds[k];
  }
  // Variables per QP: the most common count (the first solve plans every slot).
  int best = 0;
  for (const auto& [vars, count] : counts)
    if (count >= best) {
      best = count;
      m.decision_variables = vars;
    }

  const bool have_q = design.q.rows() == r.x.cols() && design.q.cols() == r.x.cols();
  for (Eigen::Index k = 0; k < r.du.rows(); ++k) {
    m.accumulated_cost += design.r * r.du.row(k).squaredNorm();
    if (have_q) {
      const Vector xn = r.x.row(k + 1).transpose();
      m.accumulated_cost += xn.dot(design.q * xn);
    }
  }

  if (design.state_set) {
    for (Eigen::Index k = 0; k < r.x.rows(); ++k) {
      const Vector xk = r.x.row(k).transpose();
      m.max_state_violation = std::max(
          m.max_state_violation, (design.state_set->H() * xk - design.state_set->h()).maxCoeff());
    }
  }
  // Input sets constrain the moves of the channels updated at each phase.
  for (Eigen::Index k = 0; k < r.du.rows(); ++k) {
    const int p = design.pattern.phase(k);
    if (p >= static_cast<int>(design.input_sets.size()) || !design.input_sets[p]) continue;
    const auto& ch = design.pattern.channels(p);
    Vector v(static_cast<Eigen::Index>(ch.size()));
    for (size_t j = 0; j < ch.size(); ++j) v(static_cast<Eigen::Index>(j)) = r.du(k, ch[j]);
    const auto& us = *design.input_sets[p];
    m.max_input_violation = std::max(m.max_input_violation, (us.H() * v - us.h()).maxCoeff());
  }
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void header(std::ostream& os, const char* prefix, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) os << ',' << prefix << i + 1;
}

void row(std::ostream& os, const Matrix& m, Eigen::Index k) {
  for (Eigen::Index i = 0; i < m.cols(); ++i) os << ',' << fmt(m(k, i));
}

}  // namespace

void write_trace_csv(std::ostream& os, const SimResult& r) {
  os << 't';
  header(os, "x", r.x.cols());
  header(os, "u", r.u.cols());
  header(os, "du", r.du.cols());
  header(os, "w", r.w.cols());
  header(os, "y", r.y.cols());
  os << ",qp_iters,qp_vars,objective\n";
  for (Eigen::Index k = 0; k < r.u.rows(); ++k) {
    os << fmt(static_cast<double>(k) * r.dt);
    row(os, r.x, k);
    row(os, r.u, k);
    row(os, r.du, k);
    row(os, r.w, k);
    row(os, r.y, k);
    const auto kk = static_cast<size_t>(k);
    os << ',' << r.qp_iterations[kk] << ',' << r.qp_variables[kk] << ','
       << (std::isnan(r.objective[kk]) ? std::string() : fmt(r.objective[kk])) << '\n';
  }
}

void write_timing_csv(std::ostream& os, const SimResult& r) {
  os << "t,qp_vars,qp_iters,qp_seconds\n";
  for (size_t k = 0; k < r.qp_seconds.size(); ++k) {
    if (std::isnan(r.objective[k])) continue;
    os << fmt(static_cast<double>(k) * r.dt) << ',' << r.qp_variables[k] << ','
       << r.qp_iterations[k] << ',' << fmt(r.qp_seconds[k]) << '\n';
  }
}

std::string metrics_json(const SimResult& r) {
  const Metrics& m = r.metrics;
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["steps"] = r.steps();
  j["dt"] = r.dt;
  j["control_energy"] = m.control_energy;
  j["control_energy_x1000"] = m.control_energy * 1000.0;
  j["peak_state"] = m.peak_state;
  j["peak_output"] = m.peak_output;
  j["qp_count"] = m.qp_count;
  j["decision_variables"] = m.decision_variables;
  j["solver_seconds"] = m.solver_seconds;
  j["mean_qp_seconds"] = m.qp_count > 0 ? m.solver_seconds / m.qp_count : 0.0;
  j["accumulated_cost"] = m.accumulated_cost;
  j["max_state_violation"] = m.max_state_violation;
  j["max_input_violation"] = m.max_input_violation;
  return j.dump(2) + "\n";
}

}  // namespace mmpc
