#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acdc/evo.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace acdc;

namespace {

Individual member(double f1, double f2, std::uint64_t id, double violation = 0.0) {
  Individual m;
  m.objectives = {f1, f2, true};
  m.violation = violation;
  m.id = id;
  return m;
}

Population random_population(std::mt19937_64& rng, std::size_t n) {
  Population pop;
  for (std::size_t i = 0; i < n; ++i)
    pop.push_back(member(support::uniform(rng, 0, 1), support::uniform(rng, 0, 1), i));
  return pop;
}

Network small_grid() { return parse_case(support::ring_with_link_doc(0.5, -0.1)); }

struct SmallRun {
  Network net = small_grid();
  ControlLayout layout{net};
  EvaluationContext ctx;
  SmallRun() {
    ctx.net = &net;
    ctx.layout = &layout;
    ctx.limits = CorrectiveLimits::defaults(net, layout);
  }
};

std::vector<std::uint64_t> removal_order(Population pop, double kappa) {
  std::vector<std::uint64_t> order;
  for (std::size_t s = pop.size() - 1; s >= 2; --s) {
    auto before = pop;
    environmental_selection(pop, s, kappa);
    for (const auto& m : before)
      if (std::none_of(pop.begin(), pop.end(), [&](const Individual& k) { return k.id == m.id; })) order.push_back(m.id);
  }
  return order;
}

}  // namespace

TEST_SUITE("evo") {
  TEST_CASE("epsilon indicator on two singletons") {
    const Point a1{1, 2}, a2{3, 1};
    CHECK(epsilon_indicator(a1, a2) == 1.0);
    CHECK(epsilon_indicator(a2, a1) == 2.0);
    CHECK(epsilon_indicator(a1, a1) == 0.0);
  }

  TEST_CASE("epsilon indicator agrees with a brute-force set evaluation") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 200; ++t) {
      std::vector<Point> a(1 + rng() % 5), b(1 + rng() % 5);
      for (auto& p : a) p = support::random_point(rng, 2, -2, 2);
      for (auto& p : b) p = support::random_point(rng, 2, -2, 2);
      CHECK(epsilon_indicator(a, b) == support::brute_force_indicator(a, b));
    }
    const std::vector<Point> empty, one{{0.0, 0.0}}, three{{0.0, 0.0, 0.0}};
    CHECK_THROWS_AS(epsilon_indicator(empty, one), std::invalid_argument);
    CHECK_THROWS_AS(epsilon_indicator(one, three), std::invalid_argument);
  }

  TEST_CASE("fitness of two members") {
    const std::vector<Point> pts{{1, 2}, {3, 1}};
    const auto fv = ibea_fitness(pts, 0.05);
    CHECK(fv[0] == doctest::Approx(-std::exp(-40.0)).epsilon(1e-12));
    CHECK(fv[1] == doctest::Approx(-std::exp(-20.0)).epsilon(1e-12));
    CHECK(fv[0] > fv[1]);
  }

  TEST_CASE("strict domination implies strictly greater fitness") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 300; ++t) {
      std::vector<Point> pts(2 + rng() % 8);
      for (auto& p : pts) p = support::random_point(rng, 2);
      const auto fv = ibea_fitness(pts, support::uniform(rng, 0.01, 1.0));
      for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j)
          if (dominates(pts[i], pts[j])) CHECK(fv[i] > fv[j]);
    }
  }

  TEST_CASE("constrained domination rules") {
    const auto a = member(1, 1, 0), b = member(2, 2, 1);
    CHECK(constrained_dominates(a, b));
    CHECK_FALSE(constrained_dominates(b, a));
    const auto bad = member(0, 0, 2, 0.5), worse = member(0, 0, 3, 1.5);
    CHECK(constrained_dominates(b, bad));
    CHECK(constrained_dominates(bad, worse));
    CHECK_FALSE(constrained_dominates(member(1, 2, 4), member(2, 1, 5)));
  }

  TEST_CASE("environmental selection removes the dominated member first") {
    Population pop{member(0, 1, 0), member(1, 0, 1), member(0.6, 0.6, 2)};
    pop.push_back(member(0.7, 0.7, 3));
    environmental_selection(pop, 3, 0.05);
    REQUIRE(pop.size() == 3);
    for (const auto& m : pop) CHECK(m.id != 3);
  }

  TEST_CASE("environmental selection at size keeps everyone") {
    std::mt19937_64 rng(1);
    auto pop = random_population(rng, 10);
    environmental_selection(pop, 10, 0.05);
    CHECK(pop.size() == 10);
  }

  TEST_CASE("infeasible members go first, largest violation first") {
    Population pop{member(0, 1, 0), member(1, 0, 1), member(0.1, 0.1, 2, 0.5), member(0.2, 0.2, 3, 2.0)};
    auto copy = pop;
    environmental_selection(copy, 3, 0.05);
    CHECK(std::none_of(copy.begin(), copy.end(), [](const Individual& m) { return m.id == 3; }));
    environmental_selection(pop, 2, 0.05);
    CHECK(std::all_of(pop.begin(), pop.end(), [](const Individual& m) { return m.feasible(); }));
  }

  TEST_CASE("fitness ties go to the lowest id") {
    Population pop{member(0.5, 0.5, 7), member(0.5, 0.5, 3), member(0.0, 1.0, 5), member(1.0, 0.0, 9)};
    environmental_selection(pop, 3, 0.05);
    CHECK(std::none_of(pop.begin(), pop.end(), [](const Individual& m) { return m.id == 3; }));
  }

  TEST_CASE("removal order is invariant to scaling one objective") {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 30; ++t) {
      auto pop = random_population(rng, 12);
      auto scaled = pop;
      const double c = support::uniform(rng, 1e-3, 1e4);
      for (auto& m : scaled) m.objectives.f1 *= c;
      CHECK(removal_order(pop, 0.05) == removal_order(scaled, 0.05));
    }
  }

  TEST_CASE("tournament with a single feasible member") {
    std::mt19937_64 rng(5);
    Population pop{member(0.5, 0.5, 0)};
    for (std::uint64_t i = 1; i < 6; ++i) pop.push_back(member(0, 0, i, 1.0));
    assign_fitness(pop, 0.05);
    // The feasible member wins every tournament it enters, so it appears at
    // least as often as it is drawn; with 600 draws it is picked.
    const auto pool = mating_selection(pop, 600, rng);
    CHECK(pool.size() == 600);
    const auto wins = std::count_if(pool.begin(), pool.end(), [](const Individual& m) { return m.id == 0; });
    // P(entered) = 1 - (5/6)^2 = 11/36 per tournament.
    CHECK(std::abs(static_cast<double>(wins) / 600.0 - 11.0 / 36.0) < 0.08);
  }

  TEST_CASE("tournament between identical members is uniform and seeded") {
    Population pop;
    for (std::uint64_t i = 0; i < 4; ++i) pop.push_back(member(0.5, 0.5, i));
    assign_fitness(pop, 0.05);
    std::mt19937_64 r1(6), r2(6);
    const auto a = mating_selection(pop, 4000, r1);
    const auto b = mating_selection(pop, 4000, r2);
    std::vector<int> hits(4, 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].id == b[i].id);
      ++hits[a[i].id];
    }
    for (int h : hits) CHECK(std::abs(h - 1000) < 150);
  }

  TEST_CASE("variation with zero rates copies the parents") {
    SmallRun r;
    std::mt19937_64 rng(2);
    Population pool;
    for (int i = 0; i < 6; ++i) {
      Individual m;
      std::vector<double> raw(r.layout.size());
      for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = support::uniform(rng, r.layout[k].lower, r.layout[k].upper);
      m.genome = snap_discrete(r.layout, raw).controls;
      pool.push_back(m);
    }
    VariationConfig cfg{.crossover_rate = 0.0, .mutation_rate = 0.0};
    const auto kids = variation(r.layout, pool, cfg, rng);
    REQUIRE(kids.size() == pool.size());
    for (std::size_t i = 0; i < kids.size(); ++i) CHECK(kids[i] == pool[i].genome);
  }

  TEST_CASE("offspring stay within bounds and on the grids") {
    const auto& net = support::hybrid_case();
    const ControlLayout layout(net);
    std::mt19937_64 rng(3);
    Population pool;
    for (int i = 0; i < 40; ++i) {
      Individual m;
      std::vector<double> raw(layout.size());
      for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = support::uniform(rng, layout[k].lower, layout[k].upper);
      m.genome = snap_discrete(layout, raw).controls;
      pool.push_back(m);
    }
    VariationConfig cfg{.crossover_rate = 1.0, .mutation_rate = 0.5, .eta_c = 2.0, .eta_m = 2.0};
    for (int round = 0; round < 20; ++round)
      for (const auto& kid : variation(layout, pool, cfg, rng)) CHECK(layout.admissible(kid));
  }

  TEST_CASE("crossover between opposite bounds is centred on the midpoint") {
    std::mt19937_64 rng(4);
    const int n = 10000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto [c1, c2] = sbx_pair(0.0, 1.0, 0.0, 1.0, 20.0, rng);
      for (const double c : {c1, c2}) {
        REQUIRE(c >= 0.0);
        REQUIRE(c <= 1.0);
        sum += c;
        sq += c * c;
      }
    }
    const double mean = sum / (2.0 * n);
    const double sd = std::sqrt(sq / (2.0 * n) - mean * mean);
    CHECK(std::abs(mean - 0.5) <= 3.0 * sd / std::sqrt(2.0 * n));
  }

  TEST_CASE("mutation stays in range and is unbiased at the centre") {
    std::mt19937_64 rng(7);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double y = polynomial_mutation(0.5, 0.0, 1.0, 20.0, rng);
      REQUIRE(y >= 0.0);
      REQUIRE(y <= 1.0);
      sum += y - 0.5;
    }
    CHECK(std::abs(sum / 20000.0) < 0.003);
  }

  TEST_CASE("two-dimensional hypervolume by hand") {
    CHECK(hypervolume2d({{1, 1}}, {2, 2}) == 1.0);
    CHECK(hypervolume2d({{0, 1}, {1, 0}}, {2, 2}) == 3.0);
    CHECK(hypervolume2d({{0, 1}, {1, 0}, {1, 1}}, {2, 2}) == 3.0);
    CHECK(hypervolume2d({{3, 0}}, {2, 2}) == 0.0);
    CHECK(hypervolume2d({}, {2, 2}) == 0.0);
  }

  TEST_CASE("archive stays non-dominated, bounded, and its hypervolume never falls") {
    std::mt19937_64 rng(15);
    for (int t = 0; t < 20; ++t) {
      ParetoArchive archive(8);
      double hv = 0.0;
      for (std::uint64_t i = 0; i < 300; ++i) {
        archive.offer(member(support::uniform(rng, 0, 1), support::uniform(rng, 0, 1), i));
        CHECK(archive.size() <= 8);
        std::vector<Point> pts;
        for (const auto& m : archive.members()) pts.push_back(m.point());
        for (const auto& a : pts)
          for (const auto& b : pts) CHECK_FALSE(dominates(a, b));
        const double now = hypervolume2d(pts, {2.0, 2.0});
        CHECK(now >= hv - 1e-15);
        hv = now;
      }
    }
  }

  TEST_CASE("archive rejects a dominated or duplicate candidate") {
    ParetoArchive archive(4);
    CHECK(archive.offer(member(0.2, 0.8, 0)));
    CHECK(archive.offer(member(0.8, 0.2, 1)));
    CHECK_FALSE(archive.offer(member(0.9, 0.9, 2)));
    CHECK_FALSE(archive.offer(member(0.2, 0.8, 3)));
    CHECK(archive.size() == 2);
    CHECK(archive.offer(member(0.1, 0.1, 4)));
    CHECK(archive.size() == 1);
  }

  TEST_CASE("archive truncation keeps both extremes") {
    ParetoArchive archive(3);
    for (std::uint64_t i = 0; i < 6; ++i) archive.offer(member(0.2 * i, 1.0 - 0.2 * i, i));
    const auto s = archive.sorted();
    REQUIRE(s.size() == 3);
    CHECK(s.front().id == 0);
    CHECK(s.back().id == 5);
  }

  TEST_CASE("serial and parallel evaluation agree") {
    SmallRun r;
    std::mt19937_64 rng(8);
    Population batch(12);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::vector<double> raw(r.layout.size());
      for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = support::uniform(rng, r.layout[k].lower, r.layout[k].upper);
      batch[i].genome = snap_discrete(r.layout, raw).controls;
      batch[i].id = i;
    }
    auto par = batch;
    evaluate_serial(r.ctx, batch);
    evaluate_parallel(r.ctx, par, 4);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(batch[i].objectives.f1 == par[i].objectives.f1);
      CHECK(batch[i].objectives.f2 == par[i].objectives.f2);
      CHECK(batch[i].violation == par[i].violation);
      CHECK(batch[i].uncorrectable == par[i].uncorrectable);
    }
  }

  TEST_CASE("zero generations leave the non-dominated initial members") {
    SmallRun r;
    EvoConfig cfg;
    cfg.population = 12;
    cfg.generations = 0;
    cfg.seed = 3;
    std::mt19937_64 rng(cfg.seed);
    const auto init = initialize(r.ctx, cfg, rng);
    const auto res = run(r.ctx, cfg);
    CHECK(res.log.size() <= 1);
    Population expected;
    for (const auto& m : init.npc)
      if (std::none_of(init.npc.begin(), init.npc.end(), [&](const Individual& o) { return constrained_dominates(o, m); }))
        expected.push_back(m);
    std::vector<Point> want, got;
    for (const auto& m : expected) want.push_back(m.point());
    for (const auto& m : res.archive.members()) got.push_back(m.point());
    std::sort(want.begin(), want.end());
    want.erase(std::unique(want.begin(), want.end()), want.end());
    std::sort(got.begin(), got.end());
    CHECK(got == want);
  }

  TEST_CASE("a short run is reproducible and sound") {
    SmallRun r;
    EvoConfig cfg;
    cfg.population = 10;
    cfg.generations = 3;
    cfg.seed = 4;
    std::vector<std::vector<Point>> fronts;
    const auto a = run(r.ctx, cfg, [&](int, const Population&, const ParetoArchive& archive) {
      std::vector<Point> pts;
      for (const auto& m : archive.members())
        if (m.feasible()) pts.push_back(m.point());
      fronts.push_back(pts);
    });
    cfg.workers = 3;
    const auto b = run(r.ctx, cfg);
    REQUIRE(a.archive.size() == b.archive.size());
    for (std::size_t i = 0; i < a.archive.size(); ++i) {
      CHECK(a.archive.members()[i].genome == b.archive.members()[i].genome);
      CHECK(a.archive.members()[i].id == b.archive.members()[i].id);
    }
    CHECK(a.archive.size() <= cfg.population);
    CHECK_FALSE(a.infeasible_run);
    CHECK(a.archive.all_feasible());
    Point ref{-1e300, -1e300};
    for (const auto& f : fronts)
      for (const auto& p : f) ref = {std::max(ref[0], p[0] + 1.0), std::max(ref[1], p[1] + 1.0)};
    double hv = 0.0;
    for (const auto& f : fronts) {
      const double now = hypervolume2d(f, ref);
      CHECK(now >= hv);
      hv = now;
    }
  }
}
