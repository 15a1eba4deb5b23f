#include "acdc/controls.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace acdc {

std::string to_string(ControlKind kind) {
  switch (kind) {
    case ControlKind::GenP: return "PG";
    case ControlKind::GenV: return "UG";
    case ControlKind::Tap: return "T";
    case ControlKind::ShuntQ: return "QC";
    case ControlKind::ConvP: return "Ps";
    case ControlKind::ConvQ: return "Qs";
    case ControlKind::DcVoltageRef: return "Udc0";
    case ControlKind::Droop: return "R";
  }
  return "?";
}

ControlLayout::ControlLayout(const Network& net) {
  const auto slack_gen = net.slack_generator();
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    if (g == slack_gen) continue;
    const auto& gen = net.generators[g];
    slots_.push_back({ControlKind::GenP, g, gen.p_min, gen.p_max, 0.0, fmt::format("PG[{}]", gen.name)});
  }
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    slots_.push_back({ControlKind::GenV, g, gen.v_set_min, gen.v_set_max, 0.0, fmt::format("UG[{}]", gen.name)});
  }
  for (std::size_t b = 0; b < net.branches.size(); ++b) {
    const auto& br = net.branches[b];
    if (!br.transformer || !(br.tap_min < br.tap_max)) continue;
    slots_.push_back({ControlKind::Tap, b, br.tap_min, br.tap_max, br.tap_step, fmt::format("T[{}]", br.label)});
  }
  for (std::size_t s = 0; s < net.shunts.size(); ++s) {
    const auto& sh = net.shunts[s];
    if (!(sh.q_min < sh.q_max)) continue;
    slots_.push_back({ControlKind::ShuntQ, s, sh.q_min, sh.q_max, sh.q_step, fmt::format("QC[bus{}]", sh.bus)});
  }
  for (std::size_t c = 0; c < net.converters.size(); ++c) {
    const auto& cv = net.converters[c];
    slots_.push_back({ControlKind::ConvP, c, cv.p_s_min, cv.p_s_max, 0.0, fmt::format("Ps[{}]", cv.name)});
  }
  for (std::size_t c = 0; c < net.converters.size(); ++c) {
    const auto& cv = net.converters[c];
    slots_.push_back({ControlKind::ConvQ, c, cv.q_s_min, cv.q_s_max, 0.0, fmt::format("Qs[{}]", cv.name)});
  }
  for (std::size_t c = 0; c < net.converters.size(); ++c) {
    const auto& cv = net.converters[c];
    if (cv.mode == ConverterMode::ConstP) continue;
    slots_.push_back(
        {ControlKind::DcVoltageRef, c, cv.v_dc_ref_min, cv.v_dc_ref_max, 0.0, fmt::format("Udc0[{}]", cv.name)});
  }
  for (std::size_t c = 0; c < net.converters.size(); ++c) {
    const auto& cv = net.converters[c];
    if (cv.mode != ConverterMode::Droop) continue;
    slots_.push_back({ControlKind::Droop, c, cv.droop_min, cv.droop_max, 0.0, fmt::format("R[{}]", cv.name)});
  }
}

std::vector<std::string> ControlLayout::names() const {
  std::vector<std::string> out;
  out.reserve(slots_.size());
  for (const auto& s : slots_) out.push_back(s.name);
  return out;
}

ControlVector ControlLayout::read(const Network& net) const {
  ControlVector u;
  u.values.reserve(slots_.size());
  for (const auto& s : slots_) {
    switch (s.kind) {
      case ControlKind::GenP: u.values.push_back(net.generators[s.element].p); break;
      case ControlKind::GenV: u.values.push_back(net.generators[s.element].v_setpoint); break;
      case ControlKind::Tap: u.values.push_back(net.branches[s.element].tap); break;
      case ControlKind::ShuntQ: u.values.push_back(net.shunts[s.element].q); break;
      case ControlKind::ConvP: u.values.push_back(net.converters[s.element].p_s); break;
      case ControlKind::ConvQ: u.values.push_back(net.converters[s.element].q_s); break;
      case ControlKind::DcVoltageRef: u.values.push_back(net.converters[s.element].v_dc_ref); break;
      case ControlKind::Droop: u.values.push_back(net.converters[s.element].droop); break;
    }
  }
  return u;
}

Network ControlLayout::apply(const Network& net, const ControlVector& u) const {
  if (u.size() != slots_.size())
    throw std::invalid_argument(fmt::format("control vector has {} components, layout expects {}", u.size(), slots_.size()));
  Network out = net;
  bool taps_or_shunts = false;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto& s = slots_[i];
    const double v = u[i];
    switch (s.kind) {
      case ControlKind::GenP: out.generators[s.element].p = v; break;
      case ControlKind::GenV: out.generators[s.element].v_setpoint = v; break;
      case ControlKind::Tap:
        out.branches[s.element].tap = v;
        taps_or_shunts = true;
        break;
      case ControlKind::ShuntQ:
        out.shunts[s.element].q = v;
        taps_or_shunts = true;
        break;
      case ControlKind::ConvP: out.converters[s.element].p_s = v; break;
      case ControlKind::ConvQ: out.converters[s.element].q_s = v; break;
      case ControlKind::DcVoltageRef: out.converters[s.element].v_dc_ref = v; break;
      case ControlKind::Droop: out.converters[s.element].droop = v; break;
    }
  }
  if (taps_or_shunts) out.ybus = build_admittance(out);
  return out;
}

bool ControlLayout::admissible(const ControlVector& u) const {
  if (u.size() != slots_.size()) return false;
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto& s = slots_[i];
    if (u[i] < s.lower || u[i] > s.upper) return false;
    if (s.discrete() && snap_to_grid(u[i], s.lower, s.upper, s.step) != u[i]) return false;
  }
  return true;
}

double snap_to_grid(double value, double lower, double upper, double step) {
  const double k = std::round((std::clamp(value, lower, upper) - lower) / step);
  return std::min(lower + k * step, upper);
}

SnapResult snap_discrete(const ControlLayout& layout, std::span<const double> raw) {
  if (raw.size() != layout.size())
    throw std::invalid_argument(fmt::format("control vector has {} components, layout expects {}", raw.size(), layout.size()));
  SnapResult out;
  out.controls.values.assign(raw.begin(), raw.end());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& s = layout[i];
    double& v = out.controls.values[i];
    if (v < s.lower || v > s.upper) {
      out.clamped.push_back(i);
      v = std::clamp(v, s.lower, s.upper);
    }
    if (s.discrete()) v = snap_to_grid(v, s.lower, s.upper, s.step);
  }
  return out;
}

}  // namespace acdc
