#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "acdc/case_io.hpp"
#include "app.hpp"
#include "run_config.hpp"
#include "support.hpp"

using namespace acdc;
using namespace acdc::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("acdcopf-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "acdcopf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_app(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string hybrid() { return (support::data_dir() / "ieee14_acdc.json").string(); }

fs::path ring_file(const fs::path& dir, double rating = 5.0) {
  auto doc = support::ring_with_link_doc(0.5, -0.1);
  for (auto& br : doc["ac_branches"]) br["flow_max"] = rating;
  const auto p = dir / "ring.json";
  write(p, doc.dump());
  return p;
}

Individual member(double f1, double f2, std::uint64_t id, std::size_t dim) {
  Individual m;
  m.objectives = {f1, f2, true};
  m.id = id;
  m.genome.values.assign(dim, 0.25 * static_cast<double>(id));
  m.critical = {"L1(1-2)"};
  return m;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config rejects unknown keys and wrong types") {
    CHECK_THROWS_AS(config_from_json(json{{"sead", 3}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"evo", {{"populaton", 10}}}}), ConfigError);
    CHECK_THROWS(config_from_json(json{{"seed", "three"}}));
    CHECK_THROWS_AS(config_from_json(json{{"schema", "other/1"}}), ConfigError);
    const auto c = config_from_json(json{{"seed", 9}, {"evo", {{"population", 12}, {"eta_c", 15.0}}}});
    CHECK(c.seed == 9);
    CHECK(c.evo.population == 12);
    CHECK(c.evo.variation.eta_c == 15.0);
  }

  TEST_CASE("config hash ignores execution settings") {
    RunConfig a;
    auto b = a;
    b.workers = 8;
    b.output_dir = "elsewhere";
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b.seed = 2;
    CHECK(config_hash(a) != config_hash(b));
    const auto back = config_from_json(config_to_json(a));
    CHECK(config_hash(back) == config_hash(a));
  }

  TEST_CASE("archive JSON round trip") {
    const auto& net = support::hybrid_case();
    const ControlLayout layout(net);
    Population pop{member(4000.5, 0.0071, 3, layout.size()), member(4100.25, 0.0052, 8, layout.size())};
    const auto back = archive_from_json(archive_to_json(pop, layout));
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back[i].id == pop[i].id);
      CHECK(back[i].objectives.f1 == pop[i].objectives.f1);
      CHECK(back[i].objectives.f2 == pop[i].objectives.f2);
      CHECK(back[i].genome == pop[i].genome);
      CHECK(back[i].critical == pop[i].critical);
    }
  }

  TEST_CASE("controls overrides are checked by name and range") {
    const auto& net = support::hybrid_case();
    const ControlLayout layout(net);
    const auto base = snap_discrete(layout, layout.read(net).values).controls;
    const auto name = layout[0].name;
    const auto u = read_controls(json{{name, layout[0].lower}}, layout, base);
    CHECK(u[0] == layout[0].lower);
    for (std::size_t i = 1; i < layout.size(); ++i) CHECK(u[i] == base[i]);
    CHECK_THROWS(read_controls(json{{"nope", 1.0}}, layout, base));
    CHECK_THROWS(read_controls(json{{name, layout[0].upper + 1.0}}, layout, base));
  }

  TEST_CASE("powerflow writes its artifacts and reruns byte for byte") {
    const auto a = scratch("pf-a"), b = scratch("pf-b");
    REQUIRE(run({"powerflow", "--case", hybrid(), "--out", a.string(), "--trace"}) == kOk);
    REQUIRE(run({"powerflow", "--case", hybrid(), "--out", b.string(), "--trace"}) == kOk);
    for (const auto* f : {"powerflow.json", "buses.csv", "branches.csv", "converters.csv", "dc_buses.csv", "trace.csv"}) {
      CHECK(fs::exists(a / f));
      CHECK(slurp(a / f) == slurp(b / f));
    }
    const auto doc = json::parse(slurp(a / "powerflow.json"));
    CHECK(doc.at("meta").at("command") == "powerflow");
    CHECK(doc.at("converged") == true);
  }

  TEST_CASE("exit codes for bad input") {
    const auto dir = scratch("codes");
    write(dir / "broken.json", "{ not json");
    write(dir / "bad_case.json", R"({"schema": "acdc-case/1", "ac_buses": []})");
    CHECK(run({"powerflow", "--case", (dir / "missing.json").string(), "--out", (dir / "o1").string()}) == kIo);
    CHECK(run({"powerflow", "--case", (dir / "broken.json").string(), "--out", (dir / "o2").string()}) == kValidation);
    CHECK(run({"powerflow", "--case", (dir / "bad_case.json").string(), "--out", (dir / "o3").string()}) == kValidation);
    CHECK_FALSE(fs::exists(dir / "o3"));
    CHECK(run({"powerflow", "--out", (dir / "o4").string()}) == kValidation);
    CHECK(run({"frobnicate"}) == kValidation);
    CHECK(run({"train-screen", "--case", hybrid(), "--samples", "0", "--out", (dir / "o5").string()}) == kValidation);
    CHECK(run({"optimize", "--case", hybrid(), "--out", (dir / "o6").string()}) == kValidation);
    CHECK(run({"powerflow", "--case", hybrid(), "--workers", "0", "--out", (dir / "o7").string()}) == kValidation);
  }

  TEST_CASE("a diverging case exits with the solver code") {
    const auto dir = scratch("diverge");
    auto doc = support::ring_with_link_doc(0.5, -60.0);
    doc["converters"][0]["p_s_min"] = -100.0;
    write(dir / "case.json", doc.dump());
    CHECK(run({"powerflow", "--case", (dir / "case.json").string(), "--out", (dir / "o").string()}) == kDiverged);
  }

  TEST_CASE("an optimization with no feasible member exits as infeasible") {
    const auto dir = scratch("infeasible");
    const auto c = ring_file(dir, 1e-3);
    CHECK(run({"optimize", "--case", c.string(), "--no-screening", "--population", "6", "--generations", "1",
               "--out", (dir / "o").string()}) == kInfeasible);
    const auto doc = json::parse(slurp(dir / "o" / "archive.json"));
    CHECK(doc.at("infeasible_run") == true);
  }

  TEST_CASE("optimize and decide agree and do not depend on the worker count") {
    const auto dir = scratch("opt");
    const auto c = ring_file(dir);
    const std::vector<std::string> common{"optimize", "--case", c.string(), "--no-screening", "--population", "8",
                                          "--generations", "3", "--seed", "5"};
    auto one = common, four = common;
    one.insert(one.end(), {"--workers", "1", "--out", (dir / "w1").string()});
    four.insert(four.end(), {"--workers", "4", "--out", (dir / "w4").string()});
    REQUIRE(run(one) == kOk);
    REQUIRE(run(four) == kOk);
    CHECK(slurp(dir / "w1" / "archive.json") == slurp(dir / "w4" / "archive.json"));
    CHECK(slurp(dir / "w1" / "bcs.json") == slurp(dir / "w4" / "bcs.json"));
    REQUIRE(run({"decide", "--archive", (dir / "w1" / "archive.json").string(), "--seed", "5", "--out",
                 (dir / "d").string()}) == kOk);
    const auto a = json::parse(slurp(dir / "w1" / "bcs.json"));
    const auto b = json::parse(slurp(dir / "d" / "bcs.json"));
    CHECK(a.at("bcs") == b.at("bcs"));
  }
}
