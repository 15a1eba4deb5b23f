#include "acdc/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <fmt/format.h>

namespace acdc {

namespace {

// Above this many unknowns the Jacobian is factorized sparse.
constexpr Eigen::Index kDenseLimit = 200;
constexpr double kSingularRcond = 1e-14;
constexpr double kBlowUp = 1e10;

struct Factorized {
  bool ok = false;
  Eigen::VectorXd x;
};

Factorized solve_linear(Eigen::Index n, const std::vector<Eigen::Triplet<double>>& entries, const Eigen::VectorXd& rhs) {
  Factorized out;
  if (n <= kDenseLimit) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (const auto& t : entries) a(t.row(), t.col()) += t.value();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    if (!(lu.rcond() > kSingularRcond)) return out;
    out.x = lu.solve(rhs);
  } else {
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(entries.begin(), entries.end());
    a.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) return out;
    out.x = lu.solve(rhs);
    if (lu.info() != Eigen::Success) return out;
  }
  out.ok = out.x.allFinite();
  return out;
}

Eigen::VectorXcd bus_currents(const AdmittanceMatrix& y, const std::vector<double>& vm, const std::vector<double>& va) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(vm.size()));
  for (std::size_t i = 0; i < vm.size(); ++i) v[static_cast<Eigen::Index>(i)] = std::polar(vm[i], va[i]);
  return y * v;
}

// PCC-side flows of one converter for a given PCC voltage and injection.
ConverterState converter_state(const ConverterStation& cv, Complex u_s, double p_s, double q_s) {
  ConverterState st;
  st.p_s = p_s;
  st.q_s = q_s;
  const Complex current = std::conj(Complex(p_s, q_s) / u_s);
  const Complex u_c = u_s - current / cv.coupling_admittance();
  const Complex s_c = u_c * std::conj(current);
  st.u_c = std::abs(u_c);
  st.delta_c = std::arg(u_c);
  st.p_c = s_c.real();
  st.q_c = s_c.imag();
  st.i_c = std::abs(s_c) / st.u_c;
  st.p_loss = converter_loss(st.p_c, st.q_c, st.u_c, cv.loss_a, cv.loss_b, cv.loss_c);
  st.p_dc = st.p_c - st.p_loss;
  return st;
}

// Finds the PCC active injection whose DC-side power equals `p_dc`.
ConverterState match_dc_power(const ConverterStation& cv, Complex u_s, double p_s, double q_s, double p_dc) {
  ConverterState st = converter_state(cv, u_s, p_s, q_s);
  for (int k = 0; k < 60; ++k) {
    const double err = st.p_dc - p_dc;
    if (std::abs(err) <= 1e-13) break;
    st = converter_state(cv, u_s, st.p_s - err, q_s);
  }
  return st;
}

}  // namespace

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::Diverged: return "diverged";
    case SolveStatus::Singular: return "singular";
    case SolveStatus::ConfigError: return "config_error";
  }
  return "?";
}

std::string to_string(SolveStage s) {
  switch (s) {
    case SolveStage::None: return "none";
    case SolveStage::AC: return "ac";
    case SolveStage::DC: return "dc";
    case SolveStage::Coupling: return "coupling";
  }
  return "?";
}

AcState solve_ac(const Network& net, std::span<const Complex> extra_load, const AcState* warm,
                 const SolverOptions& opts, std::vector<TraceRow>* trace) {
  const std::size_t n = net.buses.size();
  if (!extra_load.empty() && extra_load.size() != n)
    throw std::invalid_argument(fmt::format("extra load has {} entries for {} buses", extra_load.size(), n));

  AcState st;
  std::vector<double> p_spec(n, 0.0), q_spec(n, 0.0);
  std::vector<int> gens_at(n, 0);
  std::vector<double> v_set(n, 1.0);
  std::vector<std::size_t> gen_bus(net.generators.size());
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    const auto b = net.bus_index(gen.bus);
    gen_bus[g] = b;
    if (gens_at[b]++ == 0) v_set[b] = gen.v_setpoint;
    p_spec[b] += gen.p;
  }
  for (std::size_t i = 0; i < n; ++i) {
    p_spec[i] -= net.buses[i].p_load;
    q_spec[i] -= net.buses[i].q_load;
    if (!extra_load.empty()) {
      p_spec[i] -= extra_load[i].real();
      q_spec[i] -= extra_load[i].imag();
    }
  }

  // Unknown layout: angles of non-slack buses, then magnitudes of PQ buses.
  std::vector<Eigen::Index> ang_pos(n, -1), mag_pos(n, -1);
  Eigen::Index nu = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (net.buses[i].kind != BusKind::Slack) ang_pos[i] = nu++;
  for (std::size_t i = 0; i < n; ++i)
    if (net.buses[i].kind == BusKind::PQ) mag_pos[i] = nu++;

  st.voltage.assign(n, 1.0);
  st.angle.assign(n, 0.0);
  if (warm && warm->voltage.size() == n && warm->angle.size() == n) {
    st.voltage = warm->voltage;
    st.angle = warm->angle;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (net.buses[i].kind != BusKind::PQ) st.voltage[i] = v_set[i];

  const auto& y = net.ybus;
  std::vector<double> p_calc(n), q_calc(n);
  Eigen::VectorXd mismatch(nu);
  auto evaluate = [&]() {
    const Eigen::VectorXcd cur = bus_currents(y, st.voltage, st.angle);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Complex s = std::polar(st.voltage[i], st.angle[i]) * std::conj(cur[static_cast<Eigen::Index>(i)]);
      p_calc[i] = s.real();
      q_calc[i] = s.imag();
      if (ang_pos[i] >= 0) {
        mismatch[ang_pos[i]] = p_spec[i] - p_calc[i];
        worst = std::max(worst, std::abs(mismatch[ang_pos[i]]));
      }
      if (mag_pos[i] >= 0) {
        mismatch[mag_pos[i]] = q_spec[i] - q_calc[i];
        worst = std::max(worst, std::abs(mismatch[mag_pos[i]]));
      }
    }
    if (!std::isfinite(worst)) worst = std::numeric_limits<double>::infinity();
    return worst;
  };

  std::vector<Eigen::Triplet<double>> jac;
  st.max_mismatch = evaluate();
  st.status = SolveStatus::Diverged;
  for (int it = 0;; ++it) {
    if (trace) trace->push_back({SolveStage::AC, 0, it, st.max_mismatch});
    if (st.max_mismatch <= opts.tol_ac) {
      st.status = SolveStatus::Converged;
      break;
    }
    if (it >= opts.max_ac_iterations || !(st.max_mismatch < kBlowUp)) break;

    jac.clear();
    for (Eigen::Index col = 0; col < y.outerSize(); ++col) {
      for (AdmittanceMatrix::InnerIterator e(y, col); e; ++e) {
        const auto i = static_cast<std::size_t>(e.row());
        const auto j = static_cast<std::size_t>(e.col());
        const double g = e.value().real(), b = e.value().imag();
        const double vi = st.voltage[i], vj = st.voltage[j];
        if (i == j) {
          if (ang_pos[i] >= 0) {
            jac.emplace_back(ang_pos[i], ang_pos[i], -q_calc[i] - b * vi * vi);
            if (mag_pos[i] >= 0) jac.emplace_back(ang_pos[i], mag_pos[i], p_calc[i] / vi + g * vi);
          }
          if (mag_pos[i] >= 0) {
            jac.emplace_back(mag_pos[i], ang_pos[i], p_calc[i] - g * vi * vi);
            jac.emplace_back(mag_pos[i], mag_pos[i], q_calc[i] / vi - b * vi);
          }
          continue;
        }
        const double th = st.angle[i] - st.angle[j];
        const double sn = std::sin(th), cs = std::cos(th);
        if (ang_pos[i] >= 0) {
          if (ang_pos[j] >= 0) jac.emplace_back(ang_pos[i], ang_pos[j], vi * vj * (g * sn - b * cs));
          if (mag_pos[j] >= 0) jac.emplace_back(ang_pos[i], mag_pos[j], vi * (g * cs + b * sn));
        }
        if (mag_pos[i] >= 0) {
          if (ang_pos[j] >= 0) jac.emplace_back(mag_pos[i], ang_pos[j], -vi * vj * (g * cs + b * sn));
          if (mag_pos[j] >= 0) jac.emplace_back(mag_pos[i], mag_pos[j], vi * (g * sn - b * cs));
        }
      }
    }
    const auto step = solve_linear(nu, jac, mismatch);
    if (!step.ok) {
      st.status = SolveStatus::Singular;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (ang_pos[i] >= 0) st.angle[i] += step.x[ang_pos[i]];
      if (mag_pos[i] >= 0) st.voltage[i] += step.x[mag_pos[i]];
    }
    st.iterations = it + 1;
    st.max_mismatch = evaluate();
  }
  if (!st.converged()) return st;

  // Generator outputs: slack takes the active balance, every machine on a
  // bus shares the reactive output equally.
  st.gen_p.assign(net.generators.size(), 0.0);
  st.gen_q.assign(net.generators.size(), 0.0);
  const std::size_t slack_gen = net.slack_generator();
  const std::size_t slack_bus = gen_bus[slack_gen];
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto b = gen_bus[g];
    const double q_bus = q_calc[b] + net.buses[b].q_load + (extra_load.empty() ? 0.0 : extra_load[b].imag());
    st.gen_q[g] = q_bus / gens_at[b];
    st.gen_p[g] = net.generators[g].p;
  }
  double others = 0.0;
  for (std::size_t g = 0; g < net.generators.size(); ++g)
    if (g != slack_gen && gen_bus[g] == slack_bus) others += net.generators[g].p;
  st.gen_p[slack_gen] = p_calc[slack_bus] + net.buses[slack_bus].p_load +
                        (extra_load.empty() ? 0.0 : extra_load[slack_bus].real()) - others;

  st.branch_p_from.resize(net.branches.size());
  st.branch_q_from.resize(net.branches.size());
  st.branch_p_to.resize(net.branches.size());
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    const auto f = net.bus_index(br.from), t = net.bus_index(br.to);
    const Complex ys = br.series_admittance();
    const Complex ych(0.0, br.charging / 2.0);
    const double tap = br.transformer ? br.tap : 1.0;
    const Complex vf = std::polar(st.voltage[f], st.angle[f]);
    const Complex vt = std::polar(st.voltage[t], st.angle[t]);
    const Complex i_f = (ys + ych) / (tap * tap) * vf - ys / tap * vt;
    const Complex i_t = -ys / tap * vf + (ys + ych) * vt;
    const Complex s_f = vf * std::conj(i_f);
    st.branch_p_from[k] = s_f.real();
    st.branch_q_from[k] = s_f.imag();
    st.branch_p_to[k] = (vt * std::conj(i_t)).real();
  }
  return st;
}

DcState solve_dc(const Network& net, std::span<const DcBusControl> control, const DcState* warm,
                 const SolverOptions& opts, std::vector<TraceRow>* trace) {
  const std::size_t n = net.dc_buses.size();
  if (control.size() != n)
    throw std::invalid_argument(fmt::format("{} DC bus controls for {} DC buses", control.size(), n));
  DcState st;
  const bool anchored = std::any_of(control.begin(), control.end(), [](const DcBusControl& c) {
    return c.role == DcBusRole::Droop || c.role == DcBusRole::ConstVdc;
  });
  if (n == 0 || !anchored) {
    st.status = SolveStatus::ConfigError;
    return st;
  }

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& br : net.dc_branches) {
    const auto f = static_cast<Eigen::Index>(net.dc_bus_index(br.from));
    const auto t = static_cast<Eigen::Index>(net.dc_bus_index(br.to));
    const double c = br.conductance();
    g(f, f) += c;
    g(t, t) += c;
    g(f, t) -= c;
    g(t, f) -= c;
  }

  std::vector<Eigen::Index> pos(n, -1);
  Eigen::Index nu = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (control[i].role != DcBusRole::ConstVdc) pos[i] = nu++;

  Eigen::VectorXd u = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  if (warm && warm->voltage.size() == n)
    for (std::size_t i = 0; i < n; ++i) u[static_cast<Eigen::Index>(i)] = warm->voltage[i];
  else
    for (std::size_t i = 0; i < n; ++i)
      if (control[i].role == DcBusRole::Droop) u[static_cast<Eigen::Index>(i)] = control[i].v_ref;
  for (std::size_t i = 0; i < n; ++i)
    if (control[i].role == DcBusRole::ConstVdc) u[static_cast<Eigen::Index>(i)] = control[i].v_ref;

  Eigen::VectorXd f(nu);
  Eigen::VectorXd cur;
  auto evaluate = [&]() {
    cur = g * u;
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pos[i] < 0) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      const double p = u[ii] * cur[ii];
      const auto& c = control[i];
      double r = 0.0;
      switch (c.role) {
        case DcBusRole::Passive: r = p; break;
        case DcBusRole::ConstP: r = p - c.p_ref; break;
        case DcBusRole::Droop: r = (u[ii] - c.v_ref) + c.droop * (p - c.p_ref); break;
        case DcBusRole::ConstVdc: break;
      }
      f[pos[i]] = r;
      worst = std::max(worst, std::abs(r));
    }
    if (!std::isfinite(worst)) worst = std::numeric_limits<double>::infinity();
    return worst;
  };

  std::vector<Eigen::Triplet<double>> jac;
  st.max_mismatch = evaluate();
  st.status = SolveStatus::Diverged;
  for (int it = 0;; ++it) {
    if (trace) trace->push_back({SolveStage::DC, 0, it, st.max_mismatch});
    if (st.max_mismatch <= opts.tol_dc) {
      st.status = SolveStatus::Converged;
      break;
    }
    if (it >= opts.max_dc_iterations || !(st.max_mismatch < kBlowUp)) break;
    jac.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (pos[i] < 0) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      const auto& c = control[i];
      // d(U_i I_i)/dU_j = U_i G_ij, plus I_i on the diagonal.
      const double scale = c.role == DcBusRole::Droop ? c.droop : 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (pos[j] < 0) continue;
        const auto jj = static_cast<Eigen::Index>(j);
        double d = u[ii] * g(ii, jj);
        if (i == j) d += cur[ii];
        d *= scale;
        if (i == j && c.role == DcBusRole::Droop) d += 1.0;
        if (d != 0.0) jac.emplace_back(pos[i], pos[j], d);
      }
    }
    const auto step = solve_linear(nu, jac, -f);
    if (!step.ok) {
      st.status = SolveStatus::Singular;
      break;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (pos[i] >= 0) u[static_cast<Eigen::Index>(i)] += step.x[pos[i]];
    st.iterations = it + 1;
    st.max_mismatch = evaluate();
  }
  if (!st.converged()) return st;

  st.voltage.assign(u.begin(), u.end());
  st.current.assign(cur.begin(), cur.end());
  st.power.resize(n);
  for (std::size_t i = 0; i < n; ++i) st.power[i] = st.voltage[i] * st.current[i];
  st.branch_current.resize(net.dc_branches.size());
  st.branch_power.resize(net.dc_branches.size());
  for (std::size_t k = 0; k < net.dc_branches.size(); ++k) {
    const auto& br = net.dc_branches[k];
    const double uf = st.voltage[net.dc_bus_index(br.from)];
    const double ut = st.voltage[net.dc_bus_index(br.to)];
    st.branch_current[k] = (uf - ut) * br.conductance();
    st.branch_power[k] = uf * st.branch_current[k];
  }
  return st;
}

ConverterFlows converter_injections(double u_s, double delta_s, double u_c, double delta_c, double g, double b) {
  const double th = delta_s - delta_c;
  const double sn = std::sin(th), cs = std::cos(th);
  ConverterFlows out;
  out.p_s = u_s * u_s * g - u_s * u_c * (g * cs + b * sn);
  out.q_s = -u_s * u_s * b - u_s * u_c * (g * sn - b * cs);
  out.p_c = -u_c * u_c * g + u_s * u_c * (g * cs - b * sn);
  out.q_c = u_c * u_c * b - u_s * u_c * (g * sn + b * cs);
  return out;
}

double converter_loss(double p_c, double q_c, double u_c, double a, double b, double c) {
  if (!(u_c > 0.0)) throw std::domain_error(fmt::format("converter bus voltage {} is not positive", u_c));
  const double i = std::hypot(p_c, q_c) / u_c;
  return a + b * i + c * i * i;
}

Capability capability_check(double p_s, double q_s, double p0, double q0, double r_min, double r_max) {
  const double d = std::hypot(p_s - p0, q_s - q0);
  if (d < r_min) return Capability::BelowMin;
  if (d > r_max) return Capability::AboveMax;
  return Capability::Inside;
}

double droop_reference_power(const ConverterStation& c) {
  return converter_state(c, Complex(1.0, 0.0), c.p_s, c.q_s).p_dc;
}

SystemState solve_acdc(const Network& net, const SolverOptions& opts) {
  SystemState out;
  std::vector<TraceRow>* trace = opts.trace ? &out.trace : nullptr;
  const std::size_t n = net.buses.size();
  const std::size_t nc = net.converters.size();

  auto fail = [&](SolveStage stage, SolveStatus status) {
    out.converged = false;
    out.failed_stage = stage;
    out.failure = status;
    return out;
  };
  auto tag_outer = [&](std::size_t from, int outer) {
    if (!trace) return;
    for (std::size_t i = from; i < trace->size(); ++i) (*trace)[i].outer = outer;
  };

  if (nc == 0 || !net.has_dc()) {
    const std::size_t mark = trace ? trace->size() : 0;
    out.ac = solve_ac(net, {}, nullptr, opts, trace);
    tag_outer(mark, 1);
    out.outer_iterations = 1;
    if (!out.ac.converged()) return fail(SolveStage::AC, out.ac.status);
    out.converged = true;
    return out;
  }

  std::vector<std::size_t> pcc(nc), dc_of(nc);
  std::vector<DcBusControl> control(net.dc_buses.size());
  std::vector<int> claimed(net.dc_buses.size(), 0);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& cv = net.converters[c];
    pcc[c] = net.bus_index(cv.ac_bus);
    dc_of[c] = net.dc_bus_index(cv.dc_bus);
    if (claimed[dc_of[c]]++) return fail(SolveStage::DC, SolveStatus::ConfigError);
    auto& ctl = control[dc_of[c]];
    ctl.v_ref = cv.v_dc_ref;
    ctl.droop = cv.droop;
    switch (cv.mode) {
      case ConverterMode::Droop:
        ctl.role = DcBusRole::Droop;
        ctl.p_ref = droop_reference_power(cv);
        break;
      case ConverterMode::ConstP: ctl.role = DcBusRole::ConstP; break;
      case ConverterMode::ConstVdc: ctl.role = DcBusRole::ConstVdc; break;
    }
  }

  std::vector<double> p_s(nc), q_s(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    p_s[c] = net.converters[c].p_s;
    q_s[c] = net.converters[c].q_s;
  }
  std::vector<Complex> extra(n);
  out.converters.resize(nc);

  try {
    for (int outer = 1; outer <= opts.max_outer_iterations; ++outer) {
      out.outer_iterations = outer;
      std::fill(extra.begin(), extra.end(), Complex(0.0, 0.0));
      for (std::size_t c = 0; c < nc; ++c) extra[pcc[c]] += Complex(p_s[c], q_s[c]);

      std::size_t mark = trace ? trace->size() : 0;
      out.ac = solve_ac(net, extra, outer == 1 ? nullptr : &out.ac, opts, trace);
      tag_outer(mark, outer);
      if (!out.ac.converged()) return fail(SolveStage::AC, out.ac.status);

      for (std::size_t c = 0; c < nc; ++c) {
        const Complex u_s = std::polar(out.ac.voltage[pcc[c]], out.ac.angle[pcc[c]]);
        out.converters[c] = converter_state(net.converters[c], u_s, p_s[c], q_s[c]);
        if (control[dc_of[c]].role == DcBusRole::ConstP) control[dc_of[c]].p_ref = out.converters[c].p_dc;
      }

      mark = trace ? trace->size() : 0;
      const bool warm_dc = outer > 1 && out.dc.converged();
      out.dc = solve_dc(net, control, warm_dc ? &out.dc : nullptr, opts, trace);
      tag_outer(mark, outer);
      if (!out.dc.converged()) return fail(SolveStage::DC, out.dc.status);

      double residual = 0.0;
      for (std::size_t c = 0; c < nc; ++c)
        residual = std::max(residual, std::abs(out.converters[c].p_dc - out.dc.power[dc_of[c]]));
      out.coupling_residual = residual;
      if (trace) trace->push_back({SolveStage::Coupling, outer, 0, residual});
      if (!std::isfinite(residual)) return fail(SolveStage::Coupling, SolveStatus::Diverged);
      if (residual <= opts.tol_couple) {
        out.converged = true;
        return out;
      }
      for (std::size_t c = 0; c < nc; ++c) {
        if (control[dc_of[c]].role == DcBusRole::ConstP) continue;
        const Complex u_s = std::polar(out.ac.voltage[pcc[c]], out.ac.angle[pcc[c]]);
        p_s[c] = match_dc_power(net.converters[c], u_s, p_s[c], q_s[c], out.dc.power[dc_of[c]]).p_s;
        if (!std::isfinite(p_s[c])) return fail(SolveStage::Coupling, SolveStatus::Diverged);
      }
    }
  } catch (const std::domain_error&) {
    return fail(SolveStage::Coupling, SolveStatus::Diverged);
  }
  return fail(SolveStage::Coupling, SolveStatus::Diverged);
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows) {
  out << "stage,outer,iteration,residual\n";
  for (const auto& r : rows) out << fmt::format("{},{},{},{:.6e}\n", to_string(r.stage), r.outer, r.iteration, r.residual);
}

}  // namespace acdc
