#pragma once

// Decision-variable encoding shared by the power flow, the optimizer and the
// screening model. The component order is fixed by the case file:
//   P_G (non-slack generators) | U_G (all generators) | T (transformers) |
//   Q_C (shunts) | P_s | Q_s (converters) | U_dc0 (droop / const-Vdc
//   converters) | R (droop converters)

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "acdc/netmodel.hpp"

namespace acdc {

enum class ControlKind { GenP, GenV, Tap, ShuntQ, ConvP, ConvQ, DcVoltageRef, Droop };

std::string to_string(ControlKind kind);

struct ControlSlot {
  ControlKind kind;
  std::size_t element;  // index into the matching element vector
  double lower;
  double upper;
  double step;  // 0 for continuous components
  std::string name;

  [[nodiscard]] bool discrete() const { return step > 0.0; }
  [[nodiscard]] double range() const { return upper - lower; }
};

struct ControlVector {
  std::vector<double> values;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const ControlVector&, const ControlVector&) = default;
};

class ControlLayout {
 public:
  ControlLayout() = default;
  explicit ControlLayout(const Network& net);

  [[nodiscard]] std::size_t size() const { return slots_.size(); }
  [[nodiscard]] const ControlSlot& operator[](std::size_t i) const { return slots_[i]; }
  [[nodiscard]] std::span<const ControlSlot> slots() const { return slots_; }
  [[nodiscard]] std::vector<std::string> names() const;

  /// Operating point stored in the case file ("before optimization").
  [[nodiscard]] ControlVector read(const Network& net) const;

  /// Copy of `net` with every control component written into its element.
  [[nodiscard]] Network apply(const Network& net, const ControlVector& u) const;

  /// Whether a component is on its grid and inside its bounds.
  [[nodiscard]] bool admissible(const ControlVector& u) const;

 private:
  std::vector<ControlSlot> slots_;
};

struct SnapResult {
  ControlVector controls;
  std::vector<std::size_t> clamped;  // components that were outside their bounds
};

/// Clamps every component to its bounds and rounds stepped components to the
/// nearest grid point lower + k * step. Idempotent.
SnapResult snap_discrete(const ControlLayout& layout, std::span<const double> raw);

/// Nearest grid value of one stepped component, clamped to [lower, upper].
double snap_to_grid(double value, double lower, double upper, double step);

}  // namespace acdc
