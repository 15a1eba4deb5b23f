#pragma once

// Grid data model for hybrid AC / VSC-MTDC networks.
//
// All electrical quantities are per-unit on Network::base_mva, angles are
// radians. A Network is immutable once loaded; per-contingency and
// per-control variants are produced as independent copies.

#include <complex>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace acdc {

using Complex = std::complex<double>;
using AdmittanceMatrix = Eigen::SparseMatrix<Complex, Eigen::ColMajor>;

/// Raised when a case file cannot be parsed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when case data violates a model invariant. The message names the
/// offending element.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when removing a branch separates a load or generator bus from the
/// slack (or splits the DC grid).
class IslandingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BusKind { Slack, PV, PQ };

struct AcBus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double p_load = 0.0;
  double q_load = 0.0;
  double voltage = 1.0;  // initial / reported magnitude
  double angle = 0.0;
  double v_min = 0.9;
  double v_max = 1.1;
  double angle_min = -1.0;
  double angle_max = 1.0;
  double v_target = 1.0;  // preset value used by the voltage deviation index
  // Security (H) and alarm (A) bands of the composite security index.
  double v_secure_min = 0.9;
  double v_secure_max = 1.1;
  double v_alarm_min = 0.89;
  double v_alarm_max = 1.11;
};

struct AcBranch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double charging = 0.0;  // total line charging susceptance
  bool transformer = false;
  double tap = 1.0;
  double tap_min = 1.0;
  double tap_max = 1.0;
  double tap_step = 0.0;
  double flow_min = -1e9;
  double flow_max = 1e9;
  double flow_secure = 1e9;  // P_H
  double flow_alarm = 1.1e9; // P_A
  std::string label;         // e.g. "L4(3-4)"

  [[nodiscard]] Complex series_admittance() const { return 1.0 / Complex(r, x); }
};

struct Generator {
  std::string name;
  int bus = 0;
  double p = 0.0;
  double q = 0.0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = -1e9;
  double q_max = 1e9;
  double v_setpoint = 1.0;
  double v_set_min = 0.9;
  double v_set_max = 1.1;
  // Cost = cost_a * p^2 + cost_b * p + cost_c  ($/h, p in p.u.)
  double cost_a = 0.0;
  double cost_b = 0.0;
  double cost_c = 0.0;
};

struct ShuntCompensator {
  int bus = 0;
  double q = 0.0;  // reactive injection at 1 p.u. voltage
  double q_min = 0.0;
  double q_max = 0.0;
  double q_step = 0.0;
};

enum class ConverterMode { Droop, ConstP, ConstVdc };

struct ConverterStation {
  std::string name;
  int ac_bus = 0;
  int dc_bus = 0;
  double r = 0.0;  // coupling impedance between PCC and converter bus
  double x = 0.1;
  // Scheduled PCC-side injection (AC grid -> converter positive).
  double p_s = 0.0;
  double q_s = 0.0;
  double p_s_min = -1.0;
  double p_s_max = 1.0;
  double q_s_min = -1.0;
  double q_s_max = 1.0;
  // Loss = loss_a + loss_b * I + loss_c * I^2
  double loss_a = 0.0;
  double loss_b = 0.0;
  double loss_c = 0.0;
  // PQ capability ring at the PCC.
  double cap_p0 = 0.0;
  double cap_q0 = 0.0;
  double cap_r_min = 0.0;
  double cap_r_max = 1e9;
  ConverterMode mode = ConverterMode::Droop;
  double droop = 0.0;     // R: voltage deviation per unit power deviation
  double droop_min = -10.0;
  double droop_max = 10.0;
  double v_dc_ref = 1.0;  // U_dc0
  double v_dc_ref_min = 0.9;
  double v_dc_ref_max = 1.1;

  /// Y = G + jB between PCC and converter bus.
  [[nodiscard]] Complex coupling_admittance() const { return 1.0 / Complex(r, x); }
};

struct DcBus {
  int id = 0;
  double voltage = 1.0;
  double v_min = 0.9;
  double v_max = 1.1;
  double v_target = 1.0;
};

struct DcBranch {
  int from = 0;
  int to = 0;
  double r = 0.01;
  double i_min = -1e9;
  double i_max = 1e9;
  double p_min = -1e9;
  double p_max = 1e9;
  std::string label;

  [[nodiscard]] double conductance() const { return 1.0 / r; }
};

enum class ContingencyKind { AcLine, DcLine };

struct Contingency {
  ContingencyKind kind = ContingencyKind::AcLine;
  std::size_t branch = 0;  // index into ac_branches or dc_branches
  std::string label;

  friend bool operator==(const Contingency&, const Contingency&) = default;
};

/// Case-wide settings that are not tied to one element.
struct CaseLimits {
  double alarm_widening = 0.05;       // A = H widened by this fraction of the band
  double corrective_fraction = 0.15;  // default corrective box, fraction of each range
  std::map<std::string, double> corrective_overrides;  // per control kind, absolute
};

struct Network {
  std::string name;
  double base_mva = 100.0;
  std::vector<AcBus> buses;
  std::vector<AcBranch> branches;
  std::vector<Generator> generators;
  std::vector<ShuntCompensator> shunts;
  std::vector<ConverterStation> converters;
  std::vector<DcBus> dc_buses;
  std::vector<DcBranch> dc_branches;
  CaseLimits limits;

  // Derived on load.
  std::vector<Contingency> contingencies;     // solvable single-branch outages
  std::vector<Contingency> islanding_outages;  // excluded from `contingencies`
  AdmittanceMatrix ybus;

  [[nodiscard]] std::size_t bus_index(int id) const;
  [[nodiscard]] std::size_t dc_bus_index(int id) const;
  [[nodiscard]] std::size_t slack_index() const;
  [[nodiscard]] std::size_t slack_generator() const;
  [[nodiscard]] bool has_dc() const { return !dc_buses.empty(); }

  /// Rebuilds index maps and the admittance matrix after element edits.
  void rebuild();

 private:
  std::map<int, std::size_t> bus_lookup_;
  std::map<int, std::size_t> dc_bus_lookup_;
};

/// Nodal admittance matrix of the in-service AC branches and shunts.
AdmittanceMatrix build_admittance(const Network& net);

/// Checks every invariant of the model. Throws ValidationError naming the
/// first offending element.
void validate(const Network& net);

/// All single-branch outages, split into solvable ones and islanding ones.
void enumerate_contingencies(Network& net);

/// Copy of `net` without the branch named by `k`. Throws IslandingError if the
/// outage separates a load or generator bus from the slack, or splits the DC
/// grid.
Network apply_contingency(const Network& net, const Contingency& k);

/// True when every AC bus still reaches the slack through in-service
/// branches.
bool ac_connected(const Network& net);
bool dc_connected(const Network& net);

}  // namespace acdc
