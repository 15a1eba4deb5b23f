#include "acdc/case_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace acdc {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(fmt::format("{}: missing field '{}'", where, key));
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: field '{}' has the wrong type ({})", where, key, e.what()));
  }
}

template <typename T>
T optional(const json& obj, const char* key, T fallback, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: field '{}' has the wrong type ({})", where, key, e.what()));
  }
}

const json& section(const json& doc, const char* key, bool required_section) {
  static const json empty = json::array();
  const auto it = doc.find(key);
  if (it == doc.end()) {
    if (required_section) throw ParseError(fmt::format("case: missing section '{}'", key));
    return empty;
  }
  if (!it->is_array()) throw ParseError(fmt::format("case: section '{}' must be an array", key));
  return *it;
}

BusKind parse_bus_kind(const std::string& s, const std::string& where) {
  if (s == "slack") return BusKind::Slack;
  if (s == "PV" || s == "pv") return BusKind::PV;
  if (s == "PQ" || s == "pq") return BusKind::PQ;
  throw ParseError(fmt::format("{}: unknown bus type '{}'", where, s));
}

std::string bus_kind_name(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "PV";
    case BusKind::PQ: return "PQ";
  }
  return "PQ";
}

ConverterMode parse_mode(const std::string& s, const std::string& where) {
  if (s == "droop") return ConverterMode::Droop;
  if (s == "const_P") return ConverterMode::ConstP;
  if (s == "const_Vdc") return ConverterMode::ConstVdc;
  throw ParseError(fmt::format("{}: unknown converter mode '{}'", where, s));
}

std::string mode_name(ConverterMode m) {
  switch (m) {
    case ConverterMode::Droop: return "droop";
    case ConverterMode::ConstP: return "const_P";
    case ConverterMode::ConstVdc: return "const_Vdc";
  }
  return "droop";
}

}  // namespace

Network parse_case(const json& doc) {
  if (!doc.is_object()) throw ParseError("case: top level must be an object");
  const auto schema = optional<std::string>(doc, "schema", kCaseSchema, "case");
  if (schema != kCaseSchema) throw ParseError(fmt::format("case: unsupported schema '{}'", schema));

  Network net;
  net.name = optional<std::string>(doc, "name", "", "case");
  net.base_mva = optional<double>(doc, "base_mva", 100.0, "case");

  if (const auto it = doc.find("limits"); it != doc.end()) {
    net.limits.alarm_widening = optional<double>(*it, "alarm_widening", 0.05, "limits");
    net.limits.corrective_fraction = optional<double>(*it, "corrective_fraction", 0.15, "limits");
    if (const auto ov = it->find("corrective_overrides"); ov != it->end()) {
      for (const auto& [k, v] : ov->items()) net.limits.corrective_overrides[k] = v.get<double>();
    }
  }
  const double widen = net.limits.alarm_widening;

  for (const auto& jb : section(doc, "ac_buses", true)) {
    AcBus b;
    b.id = required<int>(jb, "id", "ac_buses");
    const auto where = fmt::format("AC bus {}", b.id);
    b.kind = parse_bus_kind(required<std::string>(jb, "type", where), where);
    b.p_load = optional(jb, "p_load", 0.0, where);
    b.q_load = optional(jb, "q_load", 0.0, where);
    b.voltage = optional(jb, "voltage", 1.0, where);
    b.angle = optional(jb, "angle", 0.0, where);
    b.v_min = optional(jb, "v_min", 0.9, where);
    b.v_max = optional(jb, "v_max", 1.1, where);
    b.angle_min = optional(jb, "angle_min", -1.0, where);
    b.angle_max = optional(jb, "angle_max", 1.0, where);
    b.v_target = optional(jb, "v_target", 1.0, where);
    b.v_secure_min = optional(jb, "v_secure_min", b.v_min, where);
    b.v_secure_max = optional(jb, "v_secure_max", b.v_max, where);
    const double band = b.v_secure_max - b.v_secure_min;
    b.v_alarm_min = optional(jb, "v_alarm_min", b.v_secure_min - widen * band, where);
    b.v_alarm_max = optional(jb, "v_alarm_max", b.v_secure_max + widen * band, where);
    net.buses.push_back(b);
  }

  std::size_t line_no = 0;
  for (const auto& jb : section(doc, "ac_branches", false)) {
    ++line_no;
    AcBranch br;
    br.from = required<int>(jb, "from", "ac_branches");
    br.to = required<int>(jb, "to", "ac_branches");
    br.label = optional<std::string>(jb, "label", fmt::format("L{}({}-{})", line_no, br.from, br.to), "ac_branches");
    const auto& where = br.label;
    br.r = required<double>(jb, "r", where);
    br.x = required<double>(jb, "x", where);
    br.charging = optional(jb, "charging", 0.0, where);
    br.transformer = jb.contains("tap");
    if (br.transformer) {
      br.tap = required<double>(jb, "tap", where);
      br.tap_min = optional(jb, "tap_min", br.tap, where);
      br.tap_max = optional(jb, "tap_max", br.tap, where);
      br.tap_step = optional(jb, "tap_step", 0.0, where);
    }
    br.flow_max = optional(jb, "flow_max", 1e9, where);
    br.flow_min = optional(jb, "flow_min", -br.flow_max, where);
    br.flow_secure = optional(jb, "flow_secure", br.flow_max, where);
    br.flow_alarm = optional(jb, "flow_alarm", br.flow_secure + widen * (br.flow_max - br.flow_min), where);
    net.branches.push_back(br);
  }

  for (const auto& jg : section(doc, "generators", true)) {
    Generator g;
    g.bus = required<int>(jg, "bus", "generators");
    g.name = optional<std::string>(jg, "name", fmt::format("G{}", net.generators.size() + 1), "generators");
    const auto& where = g.name;
    g.p = optional(jg, "p", 0.0, where);
    g.q = optional(jg, "q", 0.0, where);
    g.p_min = optional(jg, "p_min", 0.0, where);
    g.p_max = optional(jg, "p_max", 0.0, where);
    g.q_min = optional(jg, "q_min", -1e9, where);
    g.q_max = optional(jg, "q_max", 1e9, where);
    g.v_setpoint = optional(jg, "v_setpoint", 1.0, where);
    g.v_set_min = optional(jg, "v_set_min", 0.9, where);
    g.v_set_max = optional(jg, "v_set_max", 1.1, where);
    g.cost_a = optional(jg, "cost_a", 0.0, where);
    g.cost_b = optional(jg, "cost_b", 0.0, where);
    g.cost_c = optional(jg, "cost_c", 0.0, where);
    net.generators.push_back(g);
  }

  for (const auto& js : section(doc, "shunts", false)) {
    ShuntCompensator sh;
    sh.bus = required<int>(js, "bus", "shunts");
    const auto where = fmt::format("shunt at bus {}", sh.bus);
    sh.q = optional(js, "q", 0.0, where);
    sh.q_min = optional(js, "q_min", sh.q, where);
    sh.q_max = optional(js, "q_max", sh.q, where);
    sh.q_step = optional(js, "q_step", 0.0, where);
    net.shunts.push_back(sh);
  }

  for (const auto& jc : section(doc, "converters", false)) {
    ConverterStation c;
    c.name = optional<std::string>(jc, "name", fmt::format("VSC{}", net.converters.size() + 1), "converters");
    const auto& where = c.name;
    c.ac_bus = required<int>(jc, "ac_bus", where);
    c.dc_bus = required<int>(jc, "dc_bus", where);
    c.r = optional(jc, "r", 0.0, where);
    c.x = optional(jc, "x", 0.1, where);
    c.p_s = optional(jc, "p_s", 0.0, where);
    c.q_s = optional(jc, "q_s", 0.0, where);
    c.p_s_min = optional(jc, "p_s_min", -1.0, where);
    c.p_s_max = optional(jc, "p_s_max", 1.0, where);
    c.q_s_min = optional(jc, "q_s_min", -1.0, where);
    c.q_s_max = optional(jc, "q_s_max", 1.0, where);
    c.loss_a = optional(jc, "loss_a", 0.0, where);
    c.loss_b = optional(jc, "loss_b", 0.0, where);
    c.loss_c = optional(jc, "loss_c", 0.0, where);
    c.cap_p0 = optional(jc, "cap_p0", 0.0, where);
    c.cap_q0 = optional(jc, "cap_q0", 0.0, where);
    c.cap_r_min = optional(jc, "cap_r_min", 0.0, where);
    c.cap_r_max = optional(jc, "cap_r_max", 1e9, where);
    c.mode = parse_mode(optional<std::string>(jc, "mode", "droop", where), where);
    c.droop = optional(jc, "droop", 0.0, where);
    c.droop_min = optional(jc, "droop_min", -10.0, where);
    c.droop_max = optional(jc, "droop_max", 10.0, where);
    c.v_dc_ref = optional(jc, "v_dc_ref", 1.0, where);
    c.v_dc_ref_min = optional(jc, "v_dc_ref_min", 0.9, where);
    c.v_dc_ref_max = optional(jc, "v_dc_ref_max", 1.1, where);
    net.converters.push_back(c);
  }

  for (const auto& jb : section(doc, "dc_buses", false)) {
    DcBus b;
    b.id = required<int>(jb, "id", "dc_buses");
    const auto where = fmt::format("DC bus {}", b.id);
    b.voltage = optional(jb, "voltage", 1.0, where);
    b.v_min = optional(jb, "v_min", 0.9, where);
    b.v_max = optional(jb, "v_max", 1.1, where);
    b.v_target = optional(jb, "v_target", 1.0, where);
    net.dc_buses.push_back(b);
  }

  std::size_t dc_no = 0;
  for (const auto& jb : section(doc, "dc_branches", false)) {
    ++dc_no;
    DcBranch br;
    br.from = required<int>(jb, "from", "dc_branches");
    br.to = required<int>(jb, "to", "dc_branches");
    br.label = optional<std::string>(jb, "label", fmt::format("DC{}({}-{})", dc_no, br.from, br.to), "dc_branches");
    const auto& where = br.label;
    br.r = required<double>(jb, "r", where);
    br.i_max = optional(jb, "i_max", 1e9, where);
    br.i_min = optional(jb, "i_min", -br.i_max, where);
    br.p_max = optional(jb, "p_max", 1e9, where);
    br.p_min = optional(jb, "p_min", -br.p_max, where);
    net.dc_branches.push_back(br);
  }

  // Index maps are needed by validation; the admittance matrix is rebuilt
  // afterwards anyway.
  try {
    net.rebuild();
  } catch (const ValidationError&) {
    // Unknown bus references: report through validate() for a better message.
  }
  validate(net);
  net.rebuild();
  enumerate_contingencies(net);
  return net;
}

Network parse_case_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("case: malformed JSON ({})", e.what()));
  }
  return parse_case(doc);
}

Network load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open case file '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case_text(ss.str());
}

json case_to_json(const Network& net) {
  json doc;
  doc["schema"] = kCaseSchema;
  doc["name"] = net.name;
  doc["base_mva"] = net.base_mva;
  doc["limits"] = {{"alarm_widening", net.limits.alarm_widening},
                   {"corrective_fraction", net.limits.corrective_fraction},
                   {"corrective_overrides", net.limits.corrective_overrides}};
  auto& buses = doc["ac_buses"] = json::array();
  for (const auto& b : net.buses) {
    buses.push_back({{"id", b.id}, {"type", bus_kind_name(b.kind)}, {"p_load", b.p_load}, {"q_load", b.q_load},
                     {"voltage", b.voltage}, {"angle", b.angle}, {"v_min", b.v_min}, {"v_max", b.v_max},
                     {"angle_min", b.angle_min}, {"angle_max", b.angle_max}, {"v_target", b.v_target},
                     {"v_secure_min", b.v_secure_min}, {"v_secure_max", b.v_secure_max},
                     {"v_alarm_min", b.v_alarm_min}, {"v_alarm_max", b.v_alarm_max}});
  }
  auto& branches = doc["ac_branches"] = json::array();
  for (const auto& br : net.branches) {
    json jb = {{"from", br.from}, {"to", br.to}, {"label", br.label}, {"r", br.r}, {"x", br.x},
               {"charging", br.charging}, {"flow_min", br.flow_min}, {"flow_max", br.flow_max},
               {"flow_secure", br.flow_secure}, {"flow_alarm", br.flow_alarm}};
    if (br.transformer) {
      jb["tap"] = br.tap;
      jb["tap_min"] = br.tap_min;
      jb["tap_max"] = br.tap_max;
      jb["tap_step"] = br.tap_step;
    }
    branches.push_back(std::move(jb));
  }
  auto& gens = doc["generators"] = json::array();
  for (const auto& g : net.generators) {
    gens.push_back({{"name", g.name}, {"bus", g.bus}, {"p", g.p}, {"q", g.q}, {"p_min", g.p_min},
                    {"p_max", g.p_max}, {"q_min", g.q_min}, {"q_max", g.q_max}, {"v_setpoint", g.v_setpoint},
                    {"v_set_min", g.v_set_min}, {"v_set_max", g.v_set_max}, {"cost_a", g.cost_a},
                    {"cost_b", g.cost_b}, {"cost_c", g.cost_c}});
  }
  auto& shunts = doc["shunts"] = json::array();
  for (const auto& s : net.shunts) {
    shunts.push_back({{"bus", s.bus}, {"q", s.q}, {"q_min", s.q_min}, {"q_max", s.q_max}, {"q_step", s.q_step}});
  }
  auto& convs = doc["converters"] = json::array();
  for (const auto& c : net.converters) {
    convs.push_back({{"name", c.name}, {"ac_bus", c.ac_bus}, {"dc_bus", c.dc_bus}, {"r", c.r}, {"x", c.x},
                     {"p_s", c.p_s}, {"q_s", c.q_s}, {"p_s_min", c.p_s_min}, {"p_s_max", c.p_s_max},
                     {"q_s_min", c.q_s_min}, {"q_s_max", c.q_s_max}, {"loss_a", c.loss_a},
                     {"loss_b", c.loss_b}, {"loss_c", c.loss_c}, {"cap_p0", c.cap_p0}, {"cap_q0", c.cap_q0},
                     {"cap_r_min", c.cap_r_min}, {"cap_r_max", c.cap_r_max}, {"mode", mode_name(c.mode)},
                     {"droop", c.droop}, {"droop_min", c.droop_min}, {"droop_max", c.droop_max},
                     {"v_dc_ref", c.v_dc_ref}, {"v_dc_ref_min", c.v_dc_ref_min},
                     {"v_dc_ref_max", c.v_dc_ref_max}});
  }
  auto& dcb = doc["dc_buses"] = json::array();
  for (const auto& b : net.dc_buses) {
    dcb.push_back({{"id", b.id}, {"voltage", b.voltage}, {"v_min", b.v_min}, {"v_max", b.v_max},
                   {"v_target", b.v_target}});
  }
  auto& dcl = doc["dc_branches"] = json::array();
  for (const auto& br : net.dc_branches) {
    dcl.push_back({{"from", br.from}, {"to", br.to}, {"label", br.label}, {"r", br.r}, {"i_min", br.i_min},
                   {"i_max", br.i_max}, {"p_min", br.p_min}, {"p_max", br.p_max}});
  }
  return doc;
}

void save_case(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write case file '{}'", path.string()));
  out << case_to_json(net).dump(2) << '\n';
}

}  // namespace acdc
