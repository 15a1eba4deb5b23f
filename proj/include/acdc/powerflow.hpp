#pragma once

// Steady-state AC/DC power flow: Newton-Raphson on the AC grid, Newton on the
// DC grid with droop characteristics, coupled by the sequential (alternating)
// scheme through the converter stations.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "acdc/netmodel.hpp"

namespace acdc {

struct SolverOptions {
  double tol_ac = 1e-8;
  int max_ac_iterations = 20;
  double tol_dc = 1e-8;
  int max_dc_iterations = 20;
  double tol_couple = 1e-6;
  int max_outer_iterations = 50;
  bool trace = false;
};

enum class SolveStatus { Converged, Diverged, Singular, ConfigError };
enum class SolveStage { None, AC, DC, Coupling };

std::string to_string(SolveStatus s);
std::string to_string(SolveStage s);

struct TraceRow {
  SolveStage stage;
  int outer;
  int iteration;
  double residual;
};

struct AcState {
  std::vector<double> voltage;
  std::vector<double> angle;
  std::vector<double> branch_p_from;  // P_L, measured at the from end
  std::vector<double> branch_q_from;
  std::vector<double> branch_p_to;
  std::vector<double> gen_p;
  std::vector<double> gen_q;
  int iterations = 0;
  double max_mismatch = 0.0;
  SolveStatus status = SolveStatus::Diverged;

  [[nodiscard]] bool converged() const { return status == SolveStatus::Converged; }
};

/// Role of a DC bus in the DC solve.
enum class DcBusRole { Passive, ConstP, Droop, ConstVdc };

struct DcBusControl {
  DcBusRole role = DcBusRole::Passive;
  double p_ref = 0.0;  // P_dc (const P) or P_dc0 (droop)
  double v_ref = 1.0;  // U_dc0
  double droop = 0.0;  // R
};

struct DcState {
  std::vector<double> voltage;
  std::vector<double> current;  // injected current per bus
  std::vector<double> power;    // injected power per bus
  std::vector<double> branch_current;  // from -> to
  std::vector<double> branch_power;    // at the from end
  int iterations = 0;
  double max_mismatch = 0.0;
  SolveStatus status = SolveStatus::Diverged;

  [[nodiscard]] bool converged() const { return status == SolveStatus::Converged; }
};

struct ConverterFlows {
  double p_s = 0.0;
  double q_s = 0.0;
  double p_c = 0.0;
  double q_c = 0.0;
};

struct ConverterState {
  double p_s = 0.0;
  double q_s = 0.0;
  double p_c = 0.0;
  double q_c = 0.0;
  double p_dc = 0.0;
  double p_loss = 0.0;
  double i_c = 0.0;
  double u_c = 0.0;
  double delta_c = 0.0;
};

struct SystemState {
  AcState ac;
  DcState dc;
  std::vector<ConverterState> converters;
  int outer_iterations = 0;
  bool converged = false;
  SolveStage failed_stage = SolveStage::None;
  SolveStatus failure = SolveStatus::Converged;
  double coupling_residual = 0.0;
  std::vector<TraceRow> trace;
};

/// AC Newton-Raphson. `extra_load[i]` is withdrawn at bus i in addition to
/// its own load (converter PCC injections enter here).
AcState solve_ac(const Network& net, std::span<const Complex> extra_load, const AcState* warm = nullptr,
                 const SolverOptions& opts = {}, std::vector<TraceRow>* trace = nullptr);

/// DC grid Newton with per-bus roles. Returns ConfigError when no bus fixes
/// the voltage level (no droop and no constant-voltage converter).
DcState solve_dc(const Network& net, std::span<const DcBusControl> control, const DcState* warm = nullptr,
                 const SolverOptions& opts = {}, std::vector<TraceRow>* trace = nullptr);

/// Power at both ends of the converter coupling admittance Y = G + jB.
/// p_s/q_s flow from the PCC into the link; p_c/q_c arrive at the converter
/// bus, so p_s - p_c is the active loss G * |U_s - U_c|^2.
ConverterFlows converter_injections(double u_s, double delta_s, double u_c, double delta_c, double g, double b);

/// a + b I + c I^2 with I = |P_c + jQ_c| / U_c. Throws std::domain_error for
/// U_c <= 0.
double converter_loss(double p_c, double q_c, double u_c, double a, double b, double c);

enum class Capability { Inside, BelowMin, AboveMax };

Capability capability_check(double p_s, double q_s, double p0, double q0, double r_min, double r_max);

/// DC-side reference power of a droop converter: the scheduled PCC injection
/// carried through the coupling link and converter losses at nominal PCC
/// voltage.
double droop_reference_power(const ConverterStation& c);

/// Full sequential AC/DC solve of `net` at its stored control settings.
SystemState solve_acdc(const Network& net, const SolverOptions& opts = {});

/// Writes the iteration trace as CSV (stage, outer, iteration, residual).
void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows);

}  // namespace acdc
