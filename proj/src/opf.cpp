#include "acdc/opf.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace acdc {

namespace {

void add_band(ConstraintReport& r, LimitGroup g, const std::string& element, double value, double lo, double hi) {
  if (value > hi) r.violations.push_back({g, element, value - hi});
  if (value < lo) r.violations.push_back({g, element, lo - value});
}

// Search order of the corrective pattern search: converter setpoints first,
// then generators, then stepped devices, droop slopes last.
int priority(ControlKind k) {
  switch (k) {
    case ControlKind::ConvP: return 0;
    case ControlKind::ConvQ: return 1;
    case ControlKind::DcVoltageRef: return 2;
    case ControlKind::GenP: return 3;
    case ControlKind::GenV: return 4;
    case ControlKind::Tap: return 5;
    case ControlKind::ShuntQ: return 6;
    case ControlKind::Droop: return 7;
  }
  return 8;
}

}  // namespace

std::string to_string(LimitGroup g) {
  switch (g) {
    case LimitGroup::AcVoltage: return "ac_voltage";
    case LimitGroup::AcAngle: return "ac_angle";
    case LimitGroup::GenP: return "gen_p";
    case LimitGroup::GenQ: return "gen_q";
    case LimitGroup::BranchFlow: return "branch_flow";
    case LimitGroup::DcVoltage: return "dc_voltage";
    case LimitGroup::DcCurrent: return "dc_current";
    case LimitGroup::DcPower: return "dc_power";
    case LimitGroup::Capability: return "converter_capability";
    case LimitGroup::Convergence: return "convergence";
  }
  return "?";
}

double generation_cost(const SystemState& state, const Network& net) {
  if (!state.converged) throw EvaluationError("generation cost of a non-converged state");
  double f = 0.0;
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    const double p = state.ac.gen_p[g];
    f += gen.cost_a * p * p + gen.cost_b * p + gen.cost_c;
  }
  return f;
}

double voltage_deviation(const SystemState& state, const Network& net) {
  if (!state.converged) throw EvaluationError("voltage deviation of a non-converged state");
  double f = 0.0;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const double d = state.ac.voltage[i] - net.buses[i].v_target;
    f += d * d;
  }
  if (state.dc.converged()) {
    for (std::size_t i = 0; i < net.dc_buses.size(); ++i) {
      const double d = state.dc.voltage[i] - net.dc_buses[i].v_target;
      f += d * d;
    }
  }
  return f;
}

ConstraintReport check_limits(const Network& net, const SystemState& state) {
  ConstraintReport r;
  r.converged = state.converged;
  if (!state.converged) {
    r.violations.push_back({LimitGroup::Convergence, to_string(state.failed_stage), kPenaltyUnconverged});
    r.total = kPenaltyUnconverged;
    return r;
  }
  const auto& ac = state.ac;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& b = net.buses[i];
    const auto name = fmt::format("bus{}", b.id);
    add_band(r, LimitGroup::AcVoltage, name, ac.voltage[i], b.v_min, b.v_max);
    add_band(r, LimitGroup::AcAngle, name, ac.angle[i], b.angle_min, b.angle_max);
  }
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    add_band(r, LimitGroup::GenP, gen.name, ac.gen_p[g], gen.p_min, gen.p_max);
    add_band(r, LimitGroup::GenQ, gen.name, ac.gen_q[g], gen.q_min, gen.q_max);
  }
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    add_band(r, LimitGroup::BranchFlow, br.label, ac.branch_p_from[k], br.flow_min, br.flow_max);
  }
  const auto& dc = state.dc;
  if (dc.converged()) {
    for (std::size_t i = 0; i < net.dc_buses.size(); ++i) {
      const auto& b = net.dc_buses[i];
      add_band(r, LimitGroup::DcVoltage, fmt::format("dcbus{}", b.id), dc.voltage[i], b.v_min, b.v_max);
    }
    for (std::size_t k = 0; k < net.dc_branches.size(); ++k) {
      const auto& br = net.dc_branches[k];
      add_band(r, LimitGroup::DcCurrent, br.label, dc.branch_current[k], br.i_min, br.i_max);
      add_band(r, LimitGroup::DcPower, br.label, dc.branch_power[k], br.p_min, br.p_max);
    }
  }
  for (std::size_t c = 0; c < net.converters.size() && c < state.converters.size(); ++c) {
    const auto& cv = net.converters[c];
    const auto& st = state.converters[c];
    const double d = std::hypot(st.p_s - cv.cap_p0, st.q_s - cv.cap_q0);
    add_band(r, LimitGroup::Capability, cv.name, d, cv.cap_r_min, cv.cap_r_max);
  }
  for (const auto& v : r.violations) r.total += v.amount;
  return r;
}

Evaluation evaluate(const Network& net, const SolverOptions& opts) {
  Evaluation e;
  e.state = solve_acdc(net, opts);
  e.report = check_limits(net, e.state);
  if (e.state.converged) {
    e.objectives.f1 = generation_cost(e.state, net);
    e.objectives.f2 = voltage_deviation(e.state, net);
    e.objectives.valid = std::isfinite(e.objectives.f1) && std::isfinite(e.objectives.f2);
  }
  return e;
}

Evaluation evaluate(const Network& net, const ControlLayout& layout, const ControlVector& u, const SolverOptions& opts) {
  return evaluate(layout.apply(net, u), opts);
}

CorrectiveLimits CorrectiveLimits::defaults(const Network& net, const ControlLayout& layout) {
  CorrectiveLimits lim;
  lim.delta_max.resize(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& s = layout[i];
    const auto it = net.limits.corrective_overrides.find(to_string(s.kind));
    lim.delta_max[i] = it != net.limits.corrective_overrides.end() ? it->second
                                                                    : net.limits.corrective_fraction * s.range();
  }
  return lim;
}

CorrectiveResult corrective_search(const Network& outaged, const ControlLayout& layout, const ControlVector& u0,
                                   const CorrectiveLimits& lim, const CorrectiveOptions& opts) {
  if (lim.delta_max.size() != layout.size())
    throw std::invalid_argument(
        fmt::format("corrective limits have {} components, layout expects {}", lim.delta_max.size(), layout.size()));

  CorrectiveResult res;
  bool any_converged = false;
  auto score = [&](const ControlVector& u) {
    ++res.probes;
    const Network adjusted = layout.apply(outaged, u);
    const auto st = solve_acdc(adjusted, opts.solver);
    if (st.converged) any_converged = true;
    return check_limits(adjusted, st).total;
  };

  res.controls = u0;
  res.residual = score(u0);
  auto finish = [&]() {
    res.feasible = res.residual <= opts.tol_feas;
    res.diverged = !any_converged;
    return res;
  };
  if (res.residual <= opts.tol_feas) return finish();

  // Components that may move, by priority then position.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!(lim.delta_max[i] > 0.0)) continue;
    if (layout[i].discrete() && !opts.include_discrete) continue;
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return priority(layout[a].kind) < priority(layout[b].kind); });
  if (order.empty()) return finish();

  auto box_value = [&](std::size_t i, double v) {
    const auto& s = layout[i];
    const double lo = std::max(s.lower, u0[i] - lim.delta_max[i]);
    const double hi = std::min(s.upper, u0[i] + lim.delta_max[i]);
    v = std::clamp(v, lo, hi);
    if (s.discrete()) {
      v = snap_to_grid(v, s.lower, s.upper, s.step);
      // Rounding may leave the box; step back inside.
      if (v > hi) v -= s.step;
      if (v < lo) v += s.step;
      if (v > hi || v < lo) return u0[i];
    }
    return v;
  };

  double scale = 1.0;
  while (res.probes < opts.max_probes && scale > 1e-3) {
    bool improved = false;
    for (const std::size_t i : order) {
      for (const double dir : {1.0, -1.0}) {
        if (res.probes >= opts.max_probes) return finish();
        ControlVector cand = res.controls;
        cand[i] = box_value(i, res.controls[i] + dir * scale * lim.delta_max[i]);
        if (cand[i] == res.controls[i]) continue;
        const double v = score(cand);
        if (v < res.residual) {
          res.controls = std::move(cand);
          res.residual = v;
          improved = true;
          if (res.residual <= opts.tol_feas) return finish();
          break;
        }
      }
    }
    if (!improved) scale *= 0.5;
  }
  return finish();
}

CorrectiveResult corrective_feasibility(const Network& net, const ControlLayout& layout, const ControlVector& u0,
                                        const Contingency& k, const CorrectiveLimits& lim,
                                        const CorrectiveOptions& opts) {
  return corrective_search(apply_contingency(net, k), layout, u0, lim, opts);
}

}  // namespace acdc
