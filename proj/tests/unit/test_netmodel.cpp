#include <doctest.h>

#include <Eigen/Dense>

#include "acdc/case_io.hpp"
#include "acdc/controls.hpp"
#include "support.hpp"

using namespace acdc;
using nlohmann::json;

namespace {

// Dense admittance matrix straight from the pi-model definition, tap on the
// from side.
Eigen::MatrixXcd dense_admittance(const Network& net) {
  const auto n = static_cast<Eigen::Index>(net.buses.size());
  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& br : net.branches) {
    const auto f = static_cast<Eigen::Index>(net.bus_index(br.from));
    const auto t = static_cast<Eigen::Index>(net.bus_index(br.to));
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex half(0.0, br.charging / 2.0);
    const double a = br.transformer ? br.tap : 1.0;
    y(f, f) += (ys + half) / (a * a);
    y(t, t) += ys + half;
    y(f, t) -= ys / a;
    y(t, f) -= ys / a;
  }
  for (const auto& sh : net.shunts) {
    const auto i = static_cast<Eigen::Index>(net.bus_index(sh.bus));
    y(i, i) += Complex(0.0, sh.q);
  }
  return y;
}

}  // namespace

TEST_SUITE("netmodel") {
  TEST_CASE("bundled hybrid case has the expected element counts") {
    const auto& net = support::hybrid_case();
    CHECK(net.buses.size() == 14);
    CHECK(net.generators.size() == 5);
    CHECK(net.branches.size() == 17);
    CHECK(net.dc_branches.size() == 3);
    CHECK(net.converters.size() == 3);
    REQUIRE(net.shunts.size() == 1);
    CHECK(net.shunts[0].bus == 9);
    CHECK(net.contingencies.size() + net.islanding_outages.size() == 20);
    CHECK(net.islanding_outages.empty());
  }

  TEST_CASE("smallest valid case: slack plus one load bus") {
    const auto net = parse_case(support::two_bus_doc(0.5, 0.0, 0.0, 0.1));
    CHECK(net.branches.size() == 1);
    CHECK_FALSE(net.has_dc());
    CHECK(net.contingencies.empty());
    REQUIRE(net.islanding_outages.size() == 1);
  }

  TEST_CASE("inverted voltage limits are rejected with the bus named") {
    auto doc = support::two_bus_doc(0.5, 0.0, 0.0, 0.1);
    doc["ac_buses"][1]["v_min"] = 1.1;
    doc["ac_buses"][1]["v_max"] = 0.9;
    try {
      (void)parse_case(doc);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("AC bus 2") != std::string::npos);
    }
  }

  TEST_CASE("malformed input raises parse errors") {
    CHECK_THROWS_AS(parse_case_text("{\"ac_buses\": [ {\"id\": 1,"), ParseError);
    CHECK_THROWS_AS(parse_case_text("[]"), ParseError);
    auto doc = support::two_bus_doc(0.5, 0.0, 0.0, 0.1);
    doc["ac_buses"][0].erase("type");
    CHECK_THROWS_AS(parse_case(doc), ParseError);
    doc = support::two_bus_doc(0.5, 0.0, 0.0, 0.1);
    doc["schema"] = "acdc-case/99";
    CHECK_THROWS_AS(parse_case(doc), ParseError);
    CHECK_THROWS_AS(load_case(support::data_dir() / "does-not-exist.json"), ParseError);
  }

  TEST_CASE("admittance matrix matches a dense pi-model build") {
    for (const auto* net : {&support::hybrid_case(), &support::ac_case()}) {
      const Eigen::MatrixXcd sparse = Eigen::MatrixXcd(net->ybus);
      const Eigen::MatrixXcd dense = dense_admittance(*net);
      CHECK((sparse - dense).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("admittance rows sum to the shunt elements on random lossless networks") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 3 + static_cast<int>(acdc::uniform_index(rng, 6));
      json doc = support::two_bus_doc(0.1, 0.0, 0.01, 0.1);
      doc["ac_buses"] = json::array();
      doc["ac_branches"] = json::array();
      for (int i = 1; i <= n; ++i) doc["ac_buses"].push_back({{"id", i}, {"type", i == 1 ? "slack" : "PQ"}});
      // Spanning chain plus random chords, no charging, no taps.
      for (int i = 2; i <= n; ++i) {
        const int j = 1 + static_cast<int>(acdc::uniform_index(rng, static_cast<std::size_t>(i - 1)));
        doc["ac_branches"].push_back({{"from", j}, {"to", i}, {"r", support::uniform(rng, 0.0, 0.1)},
                                      {"x", support::uniform(rng, 0.05, 0.5)}});
      }
      double shunt = support::uniform(rng, 0.0, 0.3);
      doc["shunts"] = json::array({json{{"bus", n}, {"q", shunt}}});
      const auto net = parse_case(doc);
      const Eigen::MatrixXcd y(net.ybus);
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const Complex expected = i == y.rows() - 1 ? Complex(0.0, shunt) : Complex(0.0, 0.0);
        CHECK(std::abs(y.row(i).sum() - expected) < 1e-10);
      }
      CHECK((y - y.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("AC outage removes one line") {
    const auto& net = support::hybrid_case();
    const auto it = std::find_if(net.contingencies.begin(), net.contingencies.end(),
                                 [](const Contingency& k) { return k.label == "L4(3-4)"; });
    REQUIRE(it != net.contingencies.end());
    const auto post = apply_contingency(net, *it);
    CHECK(post.branches.size() == 16);
    CHECK(post.dc_branches.size() == 3);
    CHECK(std::none_of(post.branches.begin(), post.branches.end(), [](const AcBranch& b) { return b.label == "L4(3-4)"; }));
  }

  TEST_CASE("DC ring stays connected after one DC outage") {
    const auto& net = support::hybrid_case();
    std::size_t dc_seen = 0;
    for (const auto& k : net.contingencies) {
      if (k.kind != ContingencyKind::DcLine) continue;
      ++dc_seen;
      const auto post = apply_contingency(net, k);
      CHECK(post.dc_branches.size() == 2);
      CHECK(dc_connected(post));
    }
    CHECK(dc_seen == 3);
  }

  TEST_CASE("removing the only feeder of a load bus islands it") {
    const auto net = parse_case(support::two_bus_doc(0.5, 0.0, 0.0, 0.1));
    CHECK_THROWS_AS(apply_contingency(net, net.islanding_outages.at(0)), IslandingError);
  }

  TEST_CASE("case round trip is structurally identical") {
    for (const auto* net : {&support::hybrid_case(), &support::ac_case()}) {
      const auto again = parse_case(case_to_json(*net));
      CHECK(case_to_json(again) == case_to_json(*net));
      CHECK(again.contingencies == net->contingencies);
      const Eigen::MatrixXcd a(again.ybus), b(net->ybus);
      CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  TEST_CASE("contingency list covers every AC and DC line") {
    const auto& net = support::hybrid_case();
    CHECK(net.contingencies.size() == net.branches.size() + net.dc_branches.size());
  }
}

TEST_SUITE("controls") {
  TEST_CASE("control layout of the bundled case") {
    const auto& net = support::hybrid_case();
    const ControlLayout layout(net);
    const std::vector<std::string> expected{
        "PG[G2]",   "PG[G3]",   "PG[G4]",   "PG[G5]",   "UG[G1]",     "UG[G2]",     "UG[G3]",     "UG[G4]",   "UG[G5]",
        "T[L5(4-7)]", "T[L6(4-9)]", "T[L7(5-6)]", "QC[bus9]", "Ps[VSC1]", "Ps[VSC2]", "Ps[VSC3]", "Qs[VSC1]", "Qs[VSC2]",
        "Qs[VSC3]", "Udc0[VSC1]", "Udc0[VSC2]", "Udc0[VSC3]", "R[VSC1]", "R[VSC2]", "R[VSC3]"};
    CHECK(layout.names() == expected);
    const auto u = layout.read(net);
    CHECK(layout.admissible(snap_discrete(layout, u.values).controls));
    CHECK(layout.read(layout.apply(net, u)) == u);
  }

  TEST_CASE("tap snapping picks the nearest grid point") {
    CHECK(snap_to_grid(1.0061, 0.9, 1.1, 0.0125) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(snap_to_grid(1.2, 0.9, 1.1, 0.0125) == doctest::Approx(1.1));
    CHECK(snap_to_grid(0.13, 0.0, 0.5, 0.01) == doctest::Approx(0.13));
  }

  TEST_CASE("snapping is idempotent and leaves grid points alone") {
    const auto& net = support::hybrid_case();
    const ControlLayout layout(net);
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<double> raw(layout.size());
      for (std::size_t j = 0; j < layout.size(); ++j)
        raw[j] = support::uniform(rng, layout[j].lower - 0.2 * layout[j].range(), layout[j].upper + 0.2 * layout[j].range());
      const auto once = snap_discrete(layout, raw);
      const auto twice = snap_discrete(layout, once.controls.values);
      CHECK(twice.controls == once.controls);
      CHECK(twice.clamped.empty());
      CHECK(layout.admissible(once.controls));
      for (const std::size_t j : once.clamped) CHECK((raw[j] < layout[j].lower || raw[j] > layout[j].upper));
    }
  }

  TEST_CASE("out-of-bounds components are clamped and flagged") {
    const auto& net = support::hybrid_case();
    const ControlLayout layout(net);
    auto u = layout.read(net).values;
    u[0] = layout[0].upper + 1.0;
    const auto r = snap_discrete(layout, u);
    REQUIRE(r.clamped.size() == 1);
    CHECK(r.clamped[0] == 0);
    CHECK(r.controls[0] == layout[0].upper);
  }
}
