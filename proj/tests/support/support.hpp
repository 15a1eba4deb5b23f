#pragma once

// Shared fixtures for the unit and acceptance tests: bundled cases, small
// hand-built cases and seeded random generators.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "acdc/case_io.hpp"
#include "acdc/random.hpp"

namespace support {

inline std::filesystem::path data_dir() { return ACDC_DATA_DIR; }

inline const acdc::Network& hybrid_case() {
  static const acdc::Network net = acdc::load_case(data_dir() / "ieee14_acdc.json");
  return net;
}

inline const acdc::Network& ac_case() {
  static const acdc::Network net = acdc::load_case(data_dir() / "ieee14_ac.json");
  return net;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * acdc::uniform01(rng); }

inline std::vector<double> random_point(std::mt19937_64& rng, std::size_t dim, double lo = 0.0, double hi = 1.0) {
  std::vector<double> p(dim);
  for (auto& v : p) v = uniform(rng, lo, hi);
  return p;
}

/// Slack bus 1 feeding a PQ bus 2 over one line.
inline nlohmann::json two_bus_doc(double p_load, double q_load, double r, double x) {
  using nlohmann::json;
  return json{{"schema", "acdc-case/1"},
              {"name", "two-bus"},
              {"ac_buses", json::array({json{{"id", 1}, {"type", "slack"}, {"voltage", 1.0}},
                                        json{{"id", 2}, {"type", "PQ"}, {"p_load", p_load}, {"q_load", q_load}}})},
              {"ac_branches", json::array({json{{"from", 1}, {"to", 2}, {"r", r}, {"x", x}}})},
              {"generators", json::array({json{{"bus", 1}, {"p_max", 10.0}, {"v_setpoint", 1.0}}})}};
}

/// Three AC buses in a ring plus a two-terminal DC link between buses 1 and
/// 3. VSC1 (bus 3) runs at constant power, VSC2 (bus 1) holds the DC voltage.
/// Line ratings are left to the caller.
inline nlohmann::json ring_with_link_doc(double load3, double link_p) {
  using nlohmann::json;
  return json{
      {"schema", "acdc-case/1"},
      {"name", "ring-link"},
      {"ac_buses", json::array({json{{"id", 1}, {"type", "slack"}, {"voltage", 1.0}, {"v_target", 1.0}},
                                json{{"id", 2}, {"type", "PQ"}, {"p_load", 0.2}, {"q_load", 0.05}},
                                json{{"id", 3}, {"type", "PQ"}, {"p_load", load3}, {"q_load", 0.1}}})},
      {"ac_branches", json::array({json{{"from", 1}, {"to", 2}, {"r", 0.01}, {"x", 0.08}},
                                   json{{"from", 2}, {"to", 3}, {"r", 0.01}, {"x", 0.08}},
                                   json{{"from", 1}, {"to", 3}, {"r", 0.01}, {"x", 0.08}}})},
      {"generators", json::array({json{{"bus", 1}, {"p_max", 10.0}, {"q_min", -5.0}, {"q_max", 5.0},
                                       {"v_setpoint", 1.0}, {"cost_a", 10.0}, {"cost_b", 100.0}}})},
      {"converters",
       json::array({json{{"name", "VSC1"}, {"ac_bus", 3}, {"dc_bus", 1}, {"r", 0.001}, {"x", 0.05},
                         {"mode", "const_P"}, {"p_s", link_p}},
                    json{{"name", "VSC2"}, {"ac_bus", 1}, {"dc_bus", 2}, {"r", 0.001}, {"x", 0.05},
                         {"mode", "const_Vdc"}, {"v_dc_ref", 1.0}}})},
      {"dc_buses", json::array({json{{"id", 1}}, json{{"id", 2}}})},
      {"dc_branches", json::array({json{{"from", 1}, {"to", 2}, {"r", 0.02}}})}};
}

}  // namespace support
