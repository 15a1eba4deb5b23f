#pragma once

// Objectives, operating-limit checks and corrective feasibility of the
// security-constrained two-objective OPF (generation cost, voltage deviation).

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "acdc/controls.hpp"
#include "acdc/netmodel.hpp"
#include "acdc/powerflow.hpp"

namespace acdc {

inline constexpr double kPenaltyUnconverged = 1e3;

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ObjectivePair {
  double f1 = std::numeric_limits<double>::quiet_NaN();  // $/h
  double f2 = std::numeric_limits<double>::quiet_NaN();  // p.u.^2
  bool valid = false;
};

enum class LimitGroup { AcVoltage, AcAngle, GenP, GenQ, BranchFlow, DcVoltage, DcCurrent, DcPower, Capability, Convergence };

std::string to_string(LimitGroup g);

struct Violation {
  LimitGroup group;
  std::string element;
  double amount;  // > 0
};

struct ConstraintReport {
  std::vector<Violation> violations;
  bool converged = false;
  double total = 0.0;

  [[nodiscard]] bool feasible(double tol = 0.0) const { return converged && total <= tol; }
};

struct Evaluation {
  ObjectivePair objectives;
  ConstraintReport report;
  SystemState state;
};

/// Sum of quadratic generator costs, slack output included.
double generation_cost(const SystemState& state, const Network& net);

/// Squared deviation of AC and DC bus voltages from their targets.
double voltage_deviation(const SystemState& state, const Network& net);

/// Operating limits of a converged state. A non-converged state yields a
/// single Convergence entry of kPenaltyUnconverged.
ConstraintReport check_limits(const Network& net, const SystemState& state);

/// Solves `net` as stored and scores it.
Evaluation evaluate(const Network& net, const SolverOptions& opts = {});

/// Writes `u` into a copy of `net`, then solves and scores it.
Evaluation evaluate(const Network& net, const ControlLayout& layout, const ControlVector& u,
                    const SolverOptions& opts = {});

struct CorrectiveLimits {
  std::vector<double> delta_max;  // per control component

  /// corrective_fraction of each component's range, with per-kind absolute
  /// overrides from the case ("PG", "Ps", ...).
  static CorrectiveLimits defaults(const Network& net, const ControlLayout& layout);
};

struct CorrectiveOptions {
  int max_probes = 30;
  double tol_feas = 1e-6;
  bool include_discrete = true;
  SolverOptions solver;
};

struct CorrectiveResult {
  bool feasible = false;
  ControlVector controls;  // best post-contingency controls found
  double residual = 0.0;   // total violation at `controls`
  bool diverged = false;   // every probe diverged
  int probes = 0;
};

/// Pattern search for post-contingency controls within |u_k - u0| <= delta_max
/// that clear every operating limit of the network without branch `k`.
CorrectiveResult corrective_feasibility(const Network& net, const ControlLayout& layout, const ControlVector& u0,
                                        const Contingency& k, const CorrectiveLimits& lim,
                                        const CorrectiveOptions& opts = {});

/// Same search on an already-outaged network.
CorrectiveResult corrective_search(const Network& outaged, const ControlLayout& layout, const ControlVector& u0,
                                   const CorrectiveLimits& lim, const CorrectiveOptions& opts = {});

}  // namespace acdc
