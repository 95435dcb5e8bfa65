#include "mmpc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmpc/periodic_lq.hpp"
#include "mmpc/tightening.hpp"

namespace mmpc {
namespace {

using nlohmann::json;

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

const json& need(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  return obj.at(key);
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(where + ": must be finite");
  return d;
}

int integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<int>();
}

bool boolean(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
  return v.get<bool>();
}

std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

Vector vec(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = number(v[i], where + "[" + std::to_string(i) + "]");
  return out;
}

Matrix mat(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of rows");
  if (v.empty()) return Matrix();
  const size_t cols = v[0].is_array() ? v[0].size() : 0;
  Matrix out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != cols) throw ConfigError(where + ": ragged matrix");
    out.row(static_cast<Eigen::Index>(i)) = vec(v[i], where).transpose();
  }
  return out;
}

/// A vector is read as the diagonal.
Matrix weight(const json& v, int n, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a diagonal or a matrix");
  const Matrix m = v[0].is_array() ? mat(v, where) : Matrix(vec(v, where).asDiagonal());
  if (m.rows() != n || m.cols() != n)
    throw ConfigError(where + ": must be " + std::to_string(n) + " x " + std::to_string(n));
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw ConfigError(where + ": not symmetric");
  return m;
}

/// {"lower": [...], "upper": [...]} bounds on `map` * x; null entries are unbounded.
void append_bounds(Matrix& h, Vector& off, const json& node, const Matrix& map,
                   const std::string& where) {
  only_keys(node, where, {"lower", "upper"});
  const auto rows = map.rows();
  auto add = [&](const json& side, double sign, const char* name) {
    if (!side.is_array() || static_cast<Eigen::Index>(side.size()) != rows)
      throw ConfigError(where + "." + name + ": expected " + std::to_string(rows) + " entries");
    for (Eigen::Index i = 0; i < rows; ++i) {
      const json& e = side[static_cast<size_t>(i)];
      if (e.is_null()) continue;
      const double b = number(e, where + "." + name);
      h.conservativeResize(h.rows() + 1, map.cols());
      off.conservativeResize(off.size() + 1);
      h.row(h.rows() - 1) = sign * map.row(i);
      off(off.size() - 1) = sign * b;
    }
  };
  if (node.contains("upper")) add(node.at("upper"), 1.0, "upper");
  if (node.contains("lower")) add(node.at("lower"), -1.0, "lower");
}

HPolytope polytope(const json& node, int dim, const std::string& where) {
  if (node.contains("box")) {
    only_keys(node, where, {"box"});
    return polytope(node.at("box"), dim, where + ".box");
  }
  if (node.contains("H") || node.contains("h")) {
    only_keys(node, where, {"H", "h"});
    const Matrix h = mat(need(node, "H", where), where + ".H");
    const Vector off = vec(need(node, "h", where), where + ".h");
    if (h.cols() != dim || h.rows() != off.size())
      throw ConfigError(where + ": H must have " + std::to_string(dim) + " columns and match h");
    return HPolytope(h, off);
  }
  Matrix h(0, dim);
  Vector off(0);
  append_bounds(h, off, node, Matrix::Identity(dim, dim), where);
  if (h.rows() == 0) throw ConfigError(where + ": no bounds given");
  return HPolytope(h, off);
}

ContinuousPlant parse_plant(const json& p) {
  const std::string where = "plant";
  if (p.contains("builtin")) {
    const std::string name = text(p.at("builtin"), where + ".builtin");
    if (name == "spring_mass") {
      only_keys(p, where, {"builtin", "masses", "mass", "stiffness", "anchored"});
      return spring_mass_plant(p.contains("masses") ? integer(p.at("masses"), where + ".masses") : 4,
                               p.contains("mass") ? number(p.at("mass"), where + ".mass") : 5.0,
                               p.contains("stiffness") ? number(p.at("stiffness"), where + ".stiffness") : 1.0,
                               p.contains("anchored") ? boolean(p.at("anchored"), where + ".anchored") : false);
    }
    only_keys(p, where, {"builtin"});
    if (name == "tito") return tito_plant();
    if (name == "surrogate_aircraft") return surrogate_aircraft_plant();
    throw ConfigError(where + ": unknown builtin plant '" + name + "'");
  }
  only_keys(p, where, {"a", "b", "c", "e"});
  const Matrix a = mat(need(p, "a", where), where + ".a");
  const Matrix b = mat(need(p, "b", where), where + ".b");
  const Matrix c = p.contains("c") ? mat(p.at("c"), where + ".c") : Matrix::Identity(a.rows(), a.cols());
  const Matrix e = p.contains("e") ? mat(p.at("e"), where + ".e") : Matrix(a.rows(), 0);
  try {
    return make_continuous_plant(a, b, c, e);
  } catch (const DesignError& err) {
    throw ConfigError(where + ": " + err.what());
  }
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text, const ScenarioOverrides& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  only_keys(doc, "scenario",
            {"name", "plant", "discretization", "controller", "disturbance", "duration", "seed",
             "outputs", "x0", "analysis"});

  ScenarioConfig cfg;
  SimScenario& scn = cfg.sim;
  scn.name = doc.contains("name") ? text(doc.at("name"), "name") : "scenario";
  cfg.seed = doc.contains("seed") ? static_cast<unsigned>(integer(doc.at("seed"), "seed")) : 1u;
  if (overrides.seed) cfg.seed = *overrides.seed;

  const ContinuousPlant cont = parse_plant(need(doc, "plant", "scenario"));

  const json& disc = need(doc, "discretization", "scenario");
  only_keys(disc, "discretization", {"dt", "form"});
  const double dt = number(need(disc, "dt", "discretization"), "discretization.dt");
  if (!(dt > 0.0)) throw ConfigError("discretization.dt: must be positive");
  const std::string form = disc.contains("form") ? text(disc.at("form"), "discretization.form") : "delta_u";
  DiscretePlant plant = discretize_zoh(cont, dt);
  if (form == "delta_u") plant = augment_delta_u(plant);
  else if (form == "velocity") plant = augment_velocity_form(plant);
  else if (form != "absolute")
    throw ConfigError("discretization.form: expected absolute, delta_u or velocity");
  const int n = plant.states();
  const int nu = plant.channels();

  const json& c = need(doc, "controller", "scenario");
  only_keys(c, "controller",
            {"scheme", "mode", "N_u", "period", "moves", "offset", "q", "r", "terminal",
             "riccati_terminal_weight", "policy_constraint_weight", "sets"});
  // "mode": "smpc" is shorthand for the synchronized scheme, robust when W is given.
  std::string mode = c.contains("mode") ? text(c.at("mode"), "controller.mode") : "nominal";
  std::string scheme = c.contains("scheme") ? text(c.at("scheme"), "controller.scheme") : "mmpc";
  if (mode == "smpc") {
    if (c.contains("scheme") && scheme != "smpc")
      throw ConfigError("controller: mode smpc contradicts scheme " + scheme);
    scheme = "smpc";
    const bool has_w = c.contains("sets") && c.at("sets").is_object() && c.at("sets").contains("disturbance");
    mode = has_w ? "robust" : "nominal";
  }
  const Matrix q = weight(need(c, "q", "controller"), n, "controller.q");
  const double r = number(need(c, "r", "controller"), "controller.r");
  if (!(r > 0.0)) throw ConfigError("controller.r: must be positive");

  ControllerDesign& d = scn.design;
  if (scheme == "mmpc") {
    if (c.contains("period") || c.contains("moves"))
      throw ConfigError("controller: 'period' and 'moves' belong to the smpc scheme");
    cfg.scheme = Scheme::kMultiplexed;
    cfg.control_horizon = integer(need(c, "N_u", "controller"), "controller.N_u");
    if (overrides.control_horizon) cfg.control_horizon = *overrides.control_horizon;
    if (cfg.control_horizon < 1) throw ConfigError("controller.N_u: must be at least 1");
    const int offset = c.contains("offset") ? integer(c.at("offset"), "controller.offset") : 0;
    d = mmpc_design(plant, Schedule{nu, offset}, cfg.control_horizon, q, r);
  } else if (scheme == "smpc") {
    if (c.contains("N_u") || c.contains("offset"))
      throw ConfigError("controller: 'N_u' and 'offset' belong to the mmpc scheme");
    cfg.scheme = Scheme::kSynchronized;
    const int period = c.contains("period") ? integer(c.at("period"), "controller.period") : nu;
    if (period < 1) throw ConfigError("controller.period: must be at least 1");
    cfg.control_horizon = integer(need(c, "moves", "controller"), "controller.moves");
    if (overrides.control_horizon) cfg.control_horizon = *overrides.control_horizon;
    if (cfg.control_horizon < 1) throw ConfigError("controller.moves: must be at least 1");
    d = smpc_design(plant, period, cfg.control_horizon, q, r);
  } else {
    throw ConfigError("controller.scheme: expected mmpc or smpc");
  }

  if (mode == "nominal") d.mode = ControllerMode::kNominal;
  else if (mode == "robust") d.mode = ControllerMode::kRobust;
  else throw ConfigError("controller.mode: expected nominal, robust or smpc");

  if (c.contains("terminal")) {
    const json& t = c.at("terminal");
    if (t.is_string()) {
      const std::string kind = t.get<std::string>();
      if (kind == "origin") d.terminal = TerminalSetKind::kOrigin;
      else if (kind == "none") d.terminal = TerminalSetKind::kNone;
      else throw ConfigError("controller.terminal: expected origin, none or a polytope");
    } else {
      d.terminal = TerminalSetKind::kPolytope;
      d.terminal_set = polytope(t, n, "controller.terminal");
    }
  }
  if (c.contains("riccati_terminal_weight"))
    d.riccati_terminal_weight = boolean(c.at("riccati_terminal_weight"), "controller.riccati_terminal_weight");
  if (c.contains("policy_constraint_weight")) {
    const json& pw = c.at("policy_constraint_weight");
    if (!(pw.is_string() && pw.get<std::string>() == "auto")) {
      d.policy_constraint_weight = number(pw, "controller.policy_constraint_weight");
      if (*d.policy_constraint_weight < 0.0)
        throw ConfigError("controller.policy_constraint_weight: must be nonnegative or \"auto\"");
    }
  }

  if (c.contains("sets")) {
    const json& s = c.at("sets");
    only_keys(s, "controller.sets", {"state", "output", "input_level", "move", "disturbance"});
    Matrix h(0, n);
    Vector off(0);
    if (s.contains("state")) {
      const HPolytope ps = polytope(s.at("state"), n, "controller.sets.state");
      h.conservativeResize(h.rows() + ps.rows(), n);
      off.conservativeResize(off.size() + ps.rows());
      h.bottomRows(ps.rows()) = ps.H();
      off.tail(ps.rows()) = ps.h();
    }
    if (s.contains("output")) append_bounds(h, off, s.at("output"), plant.c, "controller.sets.output");
    if (s.contains("input_level")) {
      if (plant.form != InputForm::kDeltaU)
        throw ConfigError("controller.sets.input_level: needs the delta_u form");
      Matrix sel = Matrix::Zero(nu, n);
      sel.rightCols(nu).setIdentity();
      append_bounds(h, off, s.at("input_level"), sel, "controller.sets.input_level");
    }
    if (h.rows() > 0) d.state_set = HPolytope(h, off);
    if (s.contains("move")) {
      Matrix hm(0, nu);
      Vector om(0);
      append_bounds(hm, om, s.at("move"), Matrix::Identity(nu, nu), "controller.sets.move");
      d.input_sets.assign(d.pattern.period(), std::nullopt);
      for (int p = 0; p < d.pattern.period(); ++p) {
        const auto& ch = d.pattern.channels(p);
        if (ch.empty()) continue;
        Matrix sel = Matrix::Zero(nu, static_cast<Eigen::Index>(ch.size()));
        for (size_t j = 0; j < ch.size(); ++j) sel(ch[j], static_cast<Eigen::Index>(j)) = 1.0;
        // Keep only rows that involve a channel moved at this phase.
        const Matrix hp = hm * sel;
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < hp.rows(); ++i)
          if (hp.row(i).cwiseAbs().maxCoeff() > 0.0) keep.push_back(i);
        if (keep.empty()) continue;
        Matrix hk(static_cast<Eigen::Index>(keep.size()), hp.cols());
        Vector ok(static_cast<Eigen::Index>(keep.size()));
        for (size_t j = 0; j < keep.size(); ++j) {
          hk.row(static_cast<Eigen::Index>(j)) = hp.row(keep[j]);
          ok(static_cast<Eigen::Index>(j)) = om(keep[j]);
        }
        d.input_sets[p] = HPolytope(hk, ok);
      }
    }
    if (s.contains("disturbance"))
      d.disturbance_set = polytope(s.at("disturbance"), plant.disturbances(), "controller.sets.disturbance");
  }
  if (d.mode == ControllerMode::kRobust && !d.disturbance_set)
    throw ConfigError("controller.sets.disturbance: required in robust mode");

  const double duration = number(need(doc, "duration", "scenario"), "duration");
  const double ratio = duration / dt;
  if (duration < 0.0 || std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError("duration: must be a nonnegative multiple of dt");
  scn.steps = static_cast<long>(std::llround(ratio));

  scn.x0 = Vector::Zero(n);
  if (doc.contains("x0")) {
    scn.x0 = vec(doc.at("x0"), "x0");
    if (scn.x0.size() != n) throw ConfigError("x0: expected " + std::to_string(n) + " entries");
  }

  const int nw = plant.disturbances();
  scn.disturbance = Disturbance::none(nw);
  if (doc.contains("disturbance")) {
    const json& w = doc.at("disturbance");
    const std::string where = "disturbance";
    const std::string type = text(need(w, "type", where), where + ".type");
    if (type == "none") {
      only_keys(w, where, {"type"});
    } else if (type == "pulse" || type == "step") {
      if (type == "pulse") only_keys(w, where, {"type", "start", "end", "magnitude"});
      else only_keys(w, where, {"type", "start", "magnitude"});
      const Vector mag = vec(need(w, "magnitude", where), where + ".magnitude");
      if (mag.size() != nw) throw ConfigError(where + ".magnitude: expected " + std::to_string(nw) + " entries");
      const double start = w.contains("start") ? number(w.at("start"), where + ".start") : 0.0;
      const double end = type == "pulse" ? number(need(w, "end", where), where + ".end")
                                         : duration + dt;
      if (end < start) throw ConfigError(where + ": end before start");
      scn.disturbance = Disturbance::pulse(start, end, mag, dt);
    } else if (type == "random") {
      only_keys(w, where, {"type"});
      if (!d.disturbance_set) throw ConfigError(where + ": random disturbances need controller.sets.disturbance");
      scn.disturbance = Disturbance::bounded_random(*d.disturbance_set, cfg.seed, scn.steps);
    } else {
      throw ConfigError(where + ".type: expected none, pulse, step or random");
    }
  }

  if (doc.contains("outputs")) {
    const json& o = doc.at("outputs");
    only_keys(o, "outputs", {"peak_state"});
    if (o.contains("peak_state")) {
      scn.peak_state = integer(o.at("peak_state"), "outputs.peak_state");
      if (scn.peak_state < 0 || scn.peak_state >= n)
        throw ConfigError("outputs.peak_state: state index out of range");
    }
  }

  if (doc.contains("analysis")) {
    const json& a = doc.at("analysis");
    only_keys(a, "analysis", {"N_u", "phases", "step"});
    if (a.contains("N_u")) {
      const Vector v = vec(a.at("N_u"), "analysis.N_u");
      cfg.analysis.control_horizons.clear();
      for (Eigen::Index i = 0; i < v.size(); ++i) cfg.analysis.control_horizons.push_back(static_cast<int>(v(i)));
    }
    if (a.contains("phases")) {
      const json& ph = a.at("phases");
      if (!ph.is_array() || ph.size() != 2) throw ConfigError("analysis.phases: expected two phases");
      cfg.analysis.phase_a = integer(ph[0], "analysis.phases");
      cfg.analysis.phase_b = integer(ph[1], "analysis.phases");
    }
    if (a.contains("step")) {
      cfg.analysis.step = vec(a.at("step"), "analysis.step");
      if (cfg.analysis.step.size() != nu) throw ConfigError("analysis.step: one entry per input");
    }
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path, const ScenarioOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), overrides);
}

std::vector<CheckItem> check_design(const ControllerDesign& design) {
  std::vector<CheckItem> out;
  const auto& plant = design.plant;

  CheckItem stab{"stabilizability", true, ""};
  if (!is_stabilizable(plant.a, plant.b)) {
    stab.passed = false;
    stab.detail = "(A, B) has an uncontrollable mode with |lambda| >= 1";
  }
  out.push_back(stab);

  CheckItem dpre{"periodic Riccati convergence", true, ""};
  if (stab.passed) {
    try {
      const auto ric = solve_dpre(plant, design.pattern, design.q, design.r);
      dpre.detail = std::to_string(ric.sweeps) + " sweeps";
    } catch (const std::exception& e) {
      dpre.passed = false;
      dpre.detail = e.what();
    }
  } else {
    dpre.passed = false;
    dpre.detail = "skipped: plant not stabilizable";
  }
  out.push_back(dpre);

  CheckItem sets{"tightened sets nonempty", true, ""};
  CheckItem inv{"terminal invariance", true, ""};
  try {
    const Controller ctrl(design);
    if (design.mode == ControllerMode::kRobust) {
      sets.detail = "all (step, phase) pairs; policy output weight " +
                    std::to_string(ctrl.policy_constraint_weight());
      if (design.terminal == TerminalSetKind::kNone) {
        inv.detail = "no terminal set";
      } else {
        const auto rep = verify_terminal_invariance(ctrl.sets(), ctrl.policy(), plant, design.pattern,
                                                    *design.disturbance_set);
        inv.passed = rep.passed;
        inv.detail = rep.passed ? "sampled vertices stay inside"
                                : rep.message + " (phase " + std::to_string(rep.phase) + ")";
      }
    } else {
      sets.detail = "nominal design, no tightening";
      inv.detail = "nominal design, not required";
    }
  } catch (const std::exception& e) {
    sets.passed = false;
    sets.detail = e.what();
    inv.passed = false;
    inv.detail = "skipped";
  }
  out.push_back(sets);
  out.push_back(inv);
  return out;
}

}  // namespace mmpc
