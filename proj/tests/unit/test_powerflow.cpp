#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "acdc/controls.hpp"
#include "acdc/powerflow.hpp"
#include "support.hpp"

using namespace acdc;
using nlohmann::json;

namespace {

Network dc_only(int buses, std::vector<std::tuple<int, int, double>> lines) {
  json doc = support::two_bus_doc(0.0, 0.0, 0.0, 0.1);
  doc["dc_buses"] = json::array();
  for (int i = 1; i <= buses; ++i) doc["dc_buses"].push_back({{"id", i}});
  doc["dc_branches"] = json::array();
  for (const auto& [f, t, r] : lines) doc["dc_branches"].push_back({{"from", f}, {"to", t}, {"r", r}});
  return parse_case(doc);
}

// Complex power injected at every bus, S = V conj(Y V), from the dense matrix.
Eigen::VectorXcd injections(const Network& net, const AcState& ac) {
  const Eigen::MatrixXcd y(net.ybus);
  Eigen::VectorXcd v(static_cast<Eigen::Index>(net.buses.size()));
  for (std::size_t i = 0; i < net.buses.size(); ++i) v[static_cast<Eigen::Index>(i)] = std::polar(ac.voltage[i], ac.angle[i]);
  return v.cwiseProduct((y * v).conjugate());
}

}  // namespace

TEST_SUITE("powerflow") {
  TEST_CASE("converter link power from the phasor formula") {
    const auto f = converter_injections(1.0, 0.1, 1.0, 0.0, 0.0, -10.0);
    CHECK(f.p_s == doctest::Approx(10.0 * std::sin(0.1)).epsilon(1e-14));
    CHECK(f.p_s == doctest::Approx(0.9983).epsilon(1e-4));
    const auto same = converter_injections(1.03, -0.2, 1.03, -0.2, 0.7, -12.0);
    CHECK(std::abs(same.p_s) < 1e-14);
    CHECK(std::abs(same.q_s) < 1e-14);
  }

  TEST_CASE("link loss equals G |Us - Uc|^2 for random operating points") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
      const double us = support::uniform(rng, 0.9, 1.1), uc = support::uniform(rng, 0.9, 1.1);
      const double ds = support::uniform(rng, -0.5, 0.5), dc = support::uniform(rng, -0.5, 0.5);
      const double g = support::uniform(rng, 0.0, 5.0), b = support::uniform(rng, -20.0, -1.0);
      const auto f = converter_injections(us, ds, uc, dc, g, b);
      const double loss = g * std::norm(std::polar(us, ds) - std::polar(uc, dc));
      CHECK(f.p_s - f.p_c == doctest::Approx(loss).epsilon(1e-10));
      CHECK(f.p_s - f.p_c >= -1e-14);
    }
  }

  TEST_CASE("converter loss polynomial") {
    CHECK(converter_loss(0.5, 0.0, 1.0, 0.011, 0.003, 0.0043) == doctest::Approx(0.013575).epsilon(1e-14));
    CHECK(converter_loss(0.3, -0.4, 1.02, 0.0, 0.0, 0.0) == 0.0);
    CHECK(converter_loss(0.0, 0.0, 0.97, 0.011, 0.003, 0.0043) == doctest::Approx(0.011));
    CHECK_THROWS_AS(converter_loss(0.5, 0.0, 0.0, 0.011, 0.003, 0.0043), std::domain_error);
    CHECK_THROWS_AS(converter_loss(0.5, 0.0, -1.0, 0.011, 0.003, 0.0043), std::domain_error);
  }

  TEST_CASE("capability ring") {
    CHECK(capability_check(0.0, 0.0, 0.0, 0.0, 0.0, 1.0) == Capability::Inside);
    CHECK(capability_check(0.8, 0.6, 0.0, 0.0, 0.0, 1.0) == Capability::Inside);
    CHECK(capability_check(0.9, 0.6, 0.0, 0.0, 0.0, 1.0) == Capability::AboveMax);
    CHECK(capability_check(0.05, 0.0, 0.0, 0.0, 0.1, 1.0) == Capability::BelowMin);
  }

  TEST_CASE("unloaded two-bus network stays flat") {
    const auto net = parse_case(support::two_bus_doc(0.0, 0.0, 0.0, 0.1));
    const auto st = solve_acdc(net);
    REQUIRE(st.converged);
    CHECK(st.ac.voltage[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(st.ac.angle[1]) < 1e-12);
    CHECK(std::abs(st.ac.branch_p_from[0]) < 1e-12);
  }

  TEST_CASE("two-bus network against the closed-form solution") {
    // V^2 (1 - V^2) = (P X)^2 with cos(delta) = V for a purely reactive line
    // feeding a unity power factor load.
    const double p = 0.5, x = 0.1;
    const double v = std::sqrt((1.0 + std::sqrt(1.0 - 4.0 * p * p * x * x)) / 2.0);
    const double delta = -std::acos(v);
    const auto net = parse_case(support::two_bus_doc(p, 0.0, 0.0, x));
    const auto st = solve_acdc(net, {.tol_ac = 1e-12});
    REQUIRE(st.converged);
    CHECK(st.ac.voltage[1] == doctest::Approx(v).epsilon(1e-8));
    CHECK(st.ac.angle[1] == doctest::Approx(delta).epsilon(1e-8));
    CHECK(st.ac.branch_p_from[0] == doctest::Approx(p).epsilon(1e-8));
  }

  TEST_CASE("IEEE 14-bus AC case matches the reference solver") {
    const auto& net = support::ac_case();
    std::ifstream in(support::data_dir() / "ieee14_ac_reference.json");
    const auto ref = json::parse(in);
    const auto st = solve_acdc(net, {.tol_ac = 1e-10});
    REQUIRE(st.converged);
    CHECK(st.ac.max_mismatch <= 1e-6);
    const auto v = ref.at("voltage").get<std::vector<double>>();
    const auto a = ref.at("angle").get<std::vector<double>>();
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(std::abs(st.ac.voltage[i] - v[i]) <= 1e-6);
      CHECK(std::abs(st.ac.angle[i] - a[i]) <= 1e-6);
    }
  }

  TEST_CASE("solved state balances every bus by direct recomputation") {
    const auto& net = support::ac_case();
    const auto st = solve_acdc(net, {.tol_ac = 1e-10});
    REQUIRE(st.converged);
    const auto s = injections(net, st.ac);
    std::vector<Complex> gen(net.buses.size());
    for (std::size_t g = 0; g < net.generators.size(); ++g)
      gen[net.bus_index(net.generators[g].bus)] += Complex(st.ac.gen_p[g], st.ac.gen_q[g]);
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      const Complex expected = gen[i] - Complex(net.buses[i].p_load, net.buses[i].q_load);
      CHECK(std::abs(s[static_cast<Eigen::Index>(i)] - expected) < 1e-8);
    }
  }

  TEST_CASE("DC two-bus hand solution") {
    const auto net = dc_only(2, {{1, 2, 0.1}});
    std::vector<DcBusControl> ctl(2);
    ctl[0] = {DcBusRole::ConstP, 0.101, 1.0, 0.0};
    ctl[1] = {DcBusRole::ConstVdc, 0.0, 1.0, 0.0};
    const auto st = solve_dc(net, ctl, nullptr, {.tol_dc = 1e-12});
    REQUIRE(st.converged());
    CHECK(st.voltage[0] == doctest::Approx(1.01).epsilon(1e-10));
    CHECK(st.current[0] == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(st.power[0] == doctest::Approx(0.101).epsilon(1e-10));
  }

  TEST_CASE("equal droop references with no load keep the DC grid flat") {
    const auto net = dc_only(3, {{1, 2, 0.05}, {2, 3, 0.05}, {1, 3, 0.07}});
    std::vector<DcBusControl> ctl(3, DcBusControl{DcBusRole::Droop, 0.0, 1.02, 0.05});
    const auto st = solve_dc(net, ctl);
    REQUIRE(st.converged());
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(st.voltage[i] == doctest::Approx(1.02).epsilon(1e-12));
      CHECK(std::abs(st.current[i]) < 1e-12);
    }
  }

  TEST_CASE("two equal droop stations share a load step equally") {
    // Symmetric star: the load bus 3 sits at equal distance from both stations.
    const auto net = dc_only(3, {{1, 3, 0.05}, {2, 3, 0.05}});
    std::vector<DcBusControl> ctl(3);
    ctl[0] = {DcBusRole::Droop, 0.1, 1.0, 0.05};
    ctl[1] = {DcBusRole::Droop, 0.1, 1.0, 0.05};
    ctl[2] = {DcBusRole::ConstP, -0.2, 1.0, 0.0};
    const auto before = solve_dc(net, ctl);
    ctl[2].p_ref = -0.5;
    const auto after = solve_dc(net, ctl);
    REQUIRE(before.converged());
    REQUIRE(after.converged());
    const double d1 = after.power[0] - before.power[0];
    const double d2 = after.power[1] - before.power[1];
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-10));
    CHECK(d1 > 0.0);
  }

  TEST_CASE("a DC grid with only constant-power stations is a configuration error") {
    const auto net = dc_only(2, {{1, 2, 0.1}});
    std::vector<DcBusControl> ctl(2, DcBusControl{DcBusRole::ConstP, 0.0, 1.0, 0.0});
    CHECK(solve_dc(net, ctl).status == SolveStatus::ConfigError);
  }

  TEST_CASE("bundled hybrid case converges at its stored controls") {
    const auto& net = support::hybrid_case();
    const auto st = solve_acdc(net);
    REQUIRE(st.converged);
    CHECK(st.ac.max_mismatch < 1e-6);
    CHECK(st.ac.gen_p[net.slack_generator()] == doctest::Approx(2.4455).epsilon(1e-3));
    // Stations exchange what the DC grid carries.
    double dc_sum = 0.0;
    for (const double p : st.dc.power) dc_sum += p;
    double line_loss = 0.0;
    for (std::size_t k = 0; k < net.dc_branches.size(); ++k)
      line_loss += std::pow(st.dc.branch_current[k], 2) * net.dc_branches[k].r;
    CHECK(dc_sum == doctest::Approx(line_loss).epsilon(1e-6));
  }

  TEST_CASE("idle lossless converters leave the AC solution unchanged") {
    json doc = support::ring_with_link_doc(0.6, 0.0);
    for (auto& c : doc["converters"]) {
      c["r"] = 0.0;
      c["q_s"] = 0.0;
    }
    const auto hybrid = parse_case(doc);
    json plain = doc;
    plain.erase("converters");
    plain.erase("dc_buses");
    plain.erase("dc_branches");
    const auto ac = parse_case(plain);
    const auto a = solve_acdc(hybrid, {.tol_ac = 1e-12, .tol_dc = 1e-12, .tol_couple = 1e-12});
    const auto b = solve_acdc(ac, {.tol_ac = 1e-12});
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a.ac.voltage[i] == doctest::Approx(b.ac.voltage[i]).epsilon(1e-10));
      CHECK(a.ac.angle[i] == doctest::Approx(b.ac.angle[i]).epsilon(1e-10));
    }
  }

  TEST_CASE("raising one droop reference pushes that station's DC injection up") {
    const auto& net = support::hybrid_case();
    const auto base = solve_acdc(net);
    REQUIRE(base.converged);
    for (std::size_t c = 0; c < net.converters.size(); ++c) {
      double last = base.converters[c].p_dc;
      for (const double step : {0.002, 0.005, 0.01}) {
        Network moved = net;
        moved.converters[c].v_dc_ref += step;
        const auto st = solve_acdc(moved);
        REQUIRE(st.converged);
        CHECK(st.converters[c].p_dc > last);
        last = st.converters[c].p_dc;
      }
    }
  }

  TEST_CASE("identical inputs give bit-identical states") {
    const auto& net = support::hybrid_case();
    const auto a = solve_acdc(net);
    const auto b = solve_acdc(net);
    CHECK(a.ac.voltage == b.ac.voltage);
    CHECK(a.ac.angle == b.ac.angle);
    CHECK(a.dc.voltage == b.dc.voltage);
  }

  TEST_CASE("trace records every stage when requested") {
    const auto st = solve_acdc(support::hybrid_case(), {.trace = true});
    REQUIRE(st.converged);
    CHECK_FALSE(st.trace.empty());
    std::ostringstream out;
    write_trace_csv(out, st.trace);
    CHECK(out.str().rfind("stage,outer,iteration,residual\n", 0) == 0);
  }
}
