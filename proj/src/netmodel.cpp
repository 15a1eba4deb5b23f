#include "acdc/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <queue>
#include <set>

namespace acdc {

namespace {

bool on_grid(double lo, double hi, double step) {
  const double k = (hi - lo) / step;
  return std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, std::abs(k));
}

// Breadth-first reachability over an undirected edge list.
std::vector<bool> reachable(std::size_t n, std::size_t root,
                            const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> todo;
  seen[root] = true;
  todo.push(root);
  while (!todo.empty()) {
    const auto v = todo.front();
    todo.pop();
    for (auto w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        todo.push(w);
      }
    }
  }
  return seen;
}

}  // namespace

std::size_t Network::bus_index(int id) const {
  const auto it = bus_lookup_.find(id);
  if (it == bus_lookup_.end()) throw ValidationError(fmt::format("unknown AC bus {}", id));
  return it->second;
}

std::size_t Network::dc_bus_index(int id) const {
  const auto it = dc_bus_lookup_.find(id);
  if (it == dc_bus_lookup_.end()) throw ValidationError(fmt::format("unknown DC bus {}", id));
  return it->second;
}

std::size_t Network::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].kind == BusKind::Slack) return i;
  throw ValidationError("network has no slack bus");
}

std::size_t Network::slack_generator() const {
  const int slack_id = buses[slack_index()].id;
  for (std::size_t g = 0; g < generators.size(); ++g)
    if (generators[g].bus == slack_id) return g;
  throw ValidationError(fmt::format("slack bus {} has no generator", slack_id));
}

void Network::rebuild() {
  bus_lookup_.clear();
  dc_bus_lookup_.clear();
  for (std::size_t i = 0; i < buses.size(); ++i) bus_lookup_[buses[i].id] = i;
  for (std::size_t i = 0; i < dc_buses.size(); ++i) dc_bus_lookup_[dc_buses[i].id] = i;
  ybus = build_admittance(*this);
}

AdmittanceMatrix build_admittance(const Network& net) {
  const auto n = static_cast<Eigen::Index>(net.buses.size());
  std::vector<Eigen::Triplet<Complex>> entries;
  entries.reserve(net.branches.size() * 4 + net.shunts.size());
  for (const auto& br : net.branches) {
    const auto f = static_cast<Eigen::Index>(net.bus_index(br.from));
    const auto t = static_cast<Eigen::Index>(net.bus_index(br.to));
    const Complex ys = br.series_admittance();
    const Complex ych(0.0, br.charging / 2.0);
    const double tap = br.transformer ? br.tap : 1.0;
    entries.emplace_back(f, f, (ys + ych) / (tap * tap));
    entries.emplace_back(t, t, ys + ych);
    entries.emplace_back(f, t, -ys / tap);
    entries.emplace_back(t, f, -ys / tap);
  }
  // A compensator injecting q at 1 p.u. is a shunt susceptance of q.
  for (const auto& sh : net.shunts) {
    const auto i = static_cast<Eigen::Index>(net.bus_index(sh.bus));
    entries.emplace_back(i, i, Complex(0.0, sh.q));
  }
  AdmittanceMatrix y(n, n);
  y.setFromTriplets(entries.begin(), entries.end());
  y.makeCompressed();
  return y;
}

bool ac_connected(const Network& net) {
  if (net.buses.empty()) return false;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(net.branches.size());
  for (const auto& br : net.branches) edges.emplace_back(net.bus_index(br.from), net.bus_index(br.to));
  const auto seen = reachable(net.buses.size(), net.slack_index(), edges);
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

bool dc_connected(const Network& net) {
  if (net.dc_buses.empty()) return true;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& br : net.dc_branches) edges.emplace_back(net.dc_bus_index(br.from), net.dc_bus_index(br.to));
  const auto seen = reachable(net.dc_buses.size(), 0, edges);
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

void validate(const Network& net) {
  if (net.base_mva <= 0.0) throw ValidationError("base_mva must be positive");
  if (net.buses.empty()) throw ValidationError("case has no AC buses");

  std::set<int> ids;
  int slacks = 0;
  for (const auto& b : net.buses) {
    if (!ids.insert(b.id).second) throw ValidationError(fmt::format("duplicate AC bus id {}", b.id));
    if (!(b.v_min < b.v_max))
      throw ValidationError(fmt::format("AC bus {}: v_min ({}) must be below v_max ({})", b.id, b.v_min, b.v_max));
    if (!(b.angle_min < b.angle_max))
      throw ValidationError(fmt::format("AC bus {}: angle_min must be below angle_max", b.id));
    if (!(b.v_alarm_min < b.v_secure_min) || !(b.v_secure_max < b.v_alarm_max))
      throw ValidationError(fmt::format("AC bus {}: alarm band must lie strictly outside the security band", b.id));
    if (b.kind == BusKind::Slack) ++slacks;
  }
  if (slacks != 1) throw ValidationError(fmt::format("expected exactly one slack bus, found {}", slacks));

  for (const auto& br : net.branches) {
    if (!ids.contains(br.from) || !ids.contains(br.to))
      throw ValidationError(fmt::format("branch {}: unknown terminal bus", br.label));
    if (br.from == br.to) throw ValidationError(fmt::format("branch {}: both ends on the same bus", br.label));
    if (br.r == 0.0 && br.x == 0.0) throw ValidationError(fmt::format("branch {}: zero impedance", br.label));
    if (!(br.flow_alarm > br.flow_secure && br.flow_secure > 0.0))
      throw ValidationError(fmt::format("branch {}: need flow_alarm > flow_secure > 0", br.label));
    if (!(br.flow_min <= br.flow_max)) throw ValidationError(fmt::format("branch {}: flow_min > flow_max", br.label));
    if (br.transformer) {
      if (!(br.tap_min <= br.tap_max)) throw ValidationError(fmt::format("branch {}: tap_min > tap_max", br.label));
      if (br.tap_min < br.tap_max) {
        if (!(br.tap_step > 0.0)) throw ValidationError(fmt::format("branch {}: tap_step must be positive", br.label));
        if (!on_grid(br.tap_min, br.tap_max, br.tap_step))
          throw ValidationError(fmt::format("branch {}: tap range is not a multiple of tap_step", br.label));
      }
      if (br.tap <= 0.0) throw ValidationError(fmt::format("branch {}: tap must be positive", br.label));
    }
  }

  std::set<int> gen_buses;
  for (const auto& g : net.generators) {
    if (!ids.contains(g.bus)) throw ValidationError(fmt::format("generator {}: unknown bus {}", g.name, g.bus));
    if (!(g.p_min <= g.p_max)) throw ValidationError(fmt::format("generator {}: p_min > p_max", g.name));
    if (!(g.q_min <= g.q_max)) throw ValidationError(fmt::format("generator {}: q_min > q_max", g.name));
    if (!(g.v_set_min <= g.v_set_max)) throw ValidationError(fmt::format("generator {}: v_set_min > v_set_max", g.name));
    if (g.cost_a < 0.0) throw ValidationError(fmt::format("generator {}: quadratic cost must be nonnegative", g.name));
    gen_buses.insert(g.bus);
  }
  for (const auto& b : net.buses) {
    if (b.kind != BusKind::PQ && !gen_buses.contains(b.id))
      throw ValidationError(fmt::format("AC bus {}: voltage-controlled bus without a generator", b.id));
  }

  for (const auto& sh : net.shunts) {
    if (!ids.contains(sh.bus)) throw ValidationError(fmt::format("shunt at unknown bus {}", sh.bus));
    if (!(sh.q_min <= sh.q_max)) throw ValidationError(fmt::format("shunt at bus {}: q_min > q_max", sh.bus));
    if (sh.q_min < sh.q_max) {
      if (!(sh.q_step > 0.0)) throw ValidationError(fmt::format("shunt at bus {}: q_step must be positive", sh.bus));
      if (!on_grid(sh.q_min, sh.q_max, sh.q_step))
        throw ValidationError(fmt::format("shunt at bus {}: range is not a multiple of q_step", sh.bus));
    }
  }

  std::set<int> dc_ids;
  for (const auto& b : net.dc_buses) {
    if (!dc_ids.insert(b.id).second) throw ValidationError(fmt::format("duplicate DC bus id {}", b.id));
    if (!(b.v_min < b.v_max))
      throw ValidationError(fmt::format("DC bus {}: v_min ({}) must be below v_max ({})", b.id, b.v_min, b.v_max));
  }
  for (const auto& br : net.dc_branches) {
    if (!dc_ids.contains(br.from) || !dc_ids.contains(br.to))
      throw ValidationError(fmt::format("DC branch {}: unknown terminal bus", br.label));
    if (!(br.r > 0.0)) throw ValidationError(fmt::format("DC branch {}: resistance must be positive", br.label));
    if (!(br.i_min <= br.i_max)) throw ValidationError(fmt::format("DC branch {}: i_min > i_max", br.label));
    if (!(br.p_min <= br.p_max)) throw ValidationError(fmt::format("DC branch {}: p_min > p_max", br.label));
  }

  std::set<int> converter_dc_buses;
  for (const auto& c : net.converters) {
    if (!ids.contains(c.ac_bus)) throw ValidationError(fmt::format("converter {}: unknown AC bus {}", c.name, c.ac_bus));
    if (!dc_ids.contains(c.dc_bus)) throw ValidationError(fmt::format("converter {}: unknown DC bus {}", c.name, c.dc_bus));
    if (!converter_dc_buses.insert(c.dc_bus).second)
      throw ValidationError(fmt::format("converter {}: DC bus {} already has a converter", c.name, c.dc_bus));
    if (c.r == 0.0 && c.x == 0.0) throw ValidationError(fmt::format("converter {}: zero coupling impedance", c.name));
    if (!(0.0 <= c.cap_r_min && c.cap_r_min < c.cap_r_max))
      throw ValidationError(fmt::format("converter {}: need 0 <= cap_r_min < cap_r_max", c.name));
    if (c.loss_a < 0.0 || c.loss_b < 0.0 || c.loss_c < 0.0)
      throw ValidationError(fmt::format("converter {}: loss coefficients must be nonnegative", c.name));
    if (!(c.p_s_min <= c.p_s_max) || !(c.q_s_min <= c.q_s_max) || !(c.droop_min <= c.droop_max) ||
        !(c.v_dc_ref_min <= c.v_dc_ref_max))
      throw ValidationError(fmt::format("converter {}: control range has min above max", c.name));
  }

  if (!ac_connected(net)) throw ValidationError("AC network is not connected");
  if (!dc_connected(net)) throw ValidationError("DC network is not connected");
}

void enumerate_contingencies(Network& net) {
  net.contingencies.clear();
  net.islanding_outages.clear();
  auto classify = [&](Contingency k) {
    try {
      (void)apply_contingency(net, k);
      net.contingencies.push_back(std::move(k));
    } catch (const IslandingError&) {
      net.islanding_outages.push_back(std::move(k));
    }
  };
  for (std::size_t i = 0; i < net.branches.size(); ++i)
    classify({ContingencyKind::AcLine, i, net.branches[i].label});
  for (std::size_t i = 0; i < net.dc_branches.size(); ++i)
    classify({ContingencyKind::DcLine, i, net.dc_branches[i].label});
}

Network apply_contingency(const Network& net, const Contingency& k) {
  Network out = net;
  out.contingencies.clear();
  out.islanding_outages.clear();
  if (k.kind == ContingencyKind::AcLine) {
    if (k.branch >= out.branches.size()) throw ValidationError(fmt::format("unknown AC branch in {}", k.label));
    out.branches.erase(out.branches.begin() + static_cast<std::ptrdiff_t>(k.branch));
    if (!ac_connected(out)) throw IslandingError(fmt::format("outage {} islands part of the AC grid", k.label));
    out.ybus = build_admittance(out);
  } else {
    if (k.branch >= out.dc_branches.size()) throw ValidationError(fmt::format("unknown DC branch in {}", k.label));
    out.dc_branches.erase(out.dc_branches.begin() + static_cast<std::ptrdiff_t>(k.branch));
    if (!dc_connected(out)) throw IslandingError(fmt::format("outage {} splits the DC grid", k.label));
  }
  return out;
}

}  // namespace acdc
