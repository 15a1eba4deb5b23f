#include "run_config.hpp"

#include <set>

#include <fmt/format.h>

namespace acdc::cli {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{}: expected an object", where));
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
}

template <class T>
void read(const json& obj, const char* key, T& into, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    into = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}: '{}' has the wrong type", where, key));
  }
}

}  // namespace

RunConfig config_from_json(const json& doc) {
  RunConfig c;
  check_keys(doc, "config", {"schema", "case", "controls", "model", "seed", "workers", "output_dir", "clusters", "evo",
                             "screening", "corrective", "solver"});
  if (doc.contains("schema") && doc["schema"] != kConfigSchema)
    throw ConfigError(fmt::format("config: unsupported schema {}", doc["schema"].dump()));
  read(doc, "case", c.case_path, "config");
  read(doc, "controls", c.controls_path, "config");
  read(doc, "model", c.model_path, "config");
  read(doc, "seed", c.seed, "config");
  read(doc, "workers", c.workers, "config");
  read(doc, "output_dir", c.output_dir, "config");
  read(doc, "clusters", c.clusters, "config");

  if (const auto it = doc.find("evo"); it != doc.end()) {
    const auto& e = *it;
    check_keys(e, "evo", {"population", "generations", "kappa", "crossover_rate", "mutation_rate", "eta_c", "eta_m",
                          "explore", "screen_refresh"});
    read(e, "population", c.evo.population, "evo");
    read(e, "generations", c.evo.generations, "evo");
    read(e, "kappa", c.evo.kappa, "evo");
    read(e, "crossover_rate", c.evo.variation.crossover_rate, "evo");
    read(e, "mutation_rate", c.evo.variation.mutation_rate, "evo");
    read(e, "eta_c", c.evo.variation.eta_c, "evo");
    read(e, "eta_m", c.evo.variation.eta_m, "evo");
    read(e, "explore", c.evo.explore, "evo");
    read(e, "screen_refresh", c.evo.screen_refresh, "evo");
  }
  if (const auto it = doc.find("screening"); it != doc.end()) {
    const auto& s = *it;
    check_keys(s, "screening", {"samples", "radius", "kind_radius", "min_samples", "folds", "grid_points",
                                "grid_ratio", "tol", "lambda"});
    read(s, "samples", c.screen.sampler.samples, "screening");
    read(s, "radius", c.screen.sampler.radius, "screening");
    read(s, "kind_radius", c.screen.sampler.kind_radius, "screening");
    read(s, "min_samples", c.screen.min_samples, "screening");
    read(s, "folds", c.screen.lasso.folds, "screening");
    read(s, "grid_points", c.screen.lasso.grid_points, "screening");
    read(s, "grid_ratio", c.screen.lasso.grid_ratio, "screening");
    read(s, "tol", c.screen.lasso.tol, "screening");
    if (s.contains("lambda")) {
      double l = 0.0;
      read(s, "lambda", l, "screening");
      c.screen.lasso.lambda = l;
    }
  }
  if (const auto it = doc.find("corrective"); it != doc.end()) {
    check_keys(*it, "corrective", {"max_probes", "tol_feas", "include_discrete"});
    read(*it, "max_probes", c.corrective.max_probes, "corrective");
    read(*it, "tol_feas", c.corrective.tol_feas, "corrective");
    read(*it, "include_discrete", c.corrective.include_discrete, "corrective");
  }
  if (const auto it = doc.find("solver"); it != doc.end()) {
    check_keys(*it, "solver", {"tol_ac", "max_ac", "tol_dc", "max_dc", "tol_couple", "max_outer"});
    read(*it, "tol_ac", c.solver.tol_ac, "solver");
    read(*it, "max_ac", c.solver.max_ac_iterations, "solver");
    read(*it, "tol_dc", c.solver.tol_dc, "solver");
    read(*it, "max_dc", c.solver.max_dc_iterations, "solver");
    read(*it, "tol_couple", c.solver.tol_couple, "solver");
    read(*it, "max_outer", c.solver.max_outer_iterations, "solver");
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["schema"] = kConfigSchema;
  j["case"] = c.case_path;
  j["controls"] = c.controls_path;
  j["model"] = c.model_path;
  j["seed"] = c.seed;
  j["clusters"] = c.clusters;
  j["evo"] = {{"population", c.evo.population},
              {"generations", c.evo.generations},
              {"kappa", c.evo.kappa},
              {"crossover_rate", c.evo.variation.crossover_rate},
              {"mutation_rate", c.evo.variation.mutation_rate},
              {"eta_c", c.evo.variation.eta_c},
              {"eta_m", c.evo.variation.eta_m},
              {"explore", c.evo.explore},
              {"screen_refresh", c.evo.screen_refresh}};
  j["screening"] = {{"samples", c.screen.sampler.samples},
                    {"radius", c.screen.sampler.radius},
                    {"kind_radius", c.screen.sampler.kind_radius},
                    {"min_samples", c.screen.min_samples},
                    {"folds", c.screen.lasso.folds},
                    {"grid_points", c.screen.lasso.grid_points},
                    {"grid_ratio", c.screen.lasso.grid_ratio},
                    {"tol", c.screen.lasso.tol}};
  if (c.screen.lasso.lambda) j["screening"]["lambda"] = *c.screen.lasso.lambda;
  j["corrective"] = {{"max_probes", c.corrective.max_probes},
                     {"tol_feas", c.corrective.tol_feas},
                     {"include_discrete", c.corrective.include_discrete}};
  j["solver"] = {{"tol_ac", c.solver.tol_ac},   {"max_ac", c.solver.max_ac_iterations},         {"tol_dc", c.solver.tol_dc},
                 {"max_dc", c.solver.max_dc_iterations},   {"tol_couple", c.solver.tol_couple}, {"max_outer", c.solver.max_outer_iterations}};
  return j;
}

std::string config_hash(const RunConfig& cfg) { return fmt::format("{:016x}", fnv1a(config_to_json(cfg).dump())); }

}  // namespace acdc::cli
