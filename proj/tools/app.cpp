#include "app.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "acdc/case_io.hpp"
#include "acdc/decide.hpp"
#include "acdc/opf.hpp"
#include "acdc/powerflow.hpp"
#include "acdc/screen.hpp"
#include "run_config.hpp"

namespace acdc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {} '{}'", what, path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{} '{}' is not valid JSON ({})", what, path.string(), e.what()));
  }
}

std::string num(double v) { return fmt::format("{:.12g}", v); }

// Writes every artifact of one command into the output directory. Each file
// carries the command, config hash and seed.
class Output {
 public:
  Output(fs::path dir, std::string command, std::string hash, std::uint64_t seed)
      : dir_(std::move(dir)), command_(std::move(command)), hash_(std::move(hash)), seed_(seed) {}

  [[nodiscard]] json meta() const {
    return {{"tool", "acdcopf"}, {"command", command_}, {"config_hash", hash_}, {"seed", seed_}};
  }

  void json_file(const std::string& name, json body) {
    body["meta"] = meta();
    text_file(name, body.dump(2) + "\n");
  }

  void csv_file(const std::string& name, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
    std::string s = fmt::format("# acdcopf {} config_hash={} seed={}\n", command_, hash_, seed_);
    s += fmt::format("{}\n", fmt::join(header, ","));
    for (const auto& r : rows) s += fmt::format("{}\n", fmt::join(r, ","));
    text_file(name, s);
  }

  void text_file(const std::string& name, const std::string& content) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError(fmt::format("cannot create output directory '{}': {}", dir_.string(), ec.message()));
    const auto path = dir_ / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
    written_.push_back(path.string());
  }

  [[nodiscard]] const std::vector<std::string>& written() const { return written_; }

 private:
  fs::path dir_;
  std::string command_, hash_;
  std::uint64_t seed_;
  std::vector<std::string> written_;
};

struct Loaded {
  Network net;
  ControlLayout layout;
  ControlVector base;      // operating point stored in the case
  ControlVector controls;  // after --controls overrides
};

Loaded load(const RunConfig& cfg) {
  if (cfg.case_path.empty()) throw ConfigError("no case file given (--case or \"case\" in the config)");
  if (!fs::exists(cfg.case_path)) throw IoError(fmt::format("case file '{}' does not exist", cfg.case_path));
  Loaded l{load_case(cfg.case_path), {}, {}, {}};
  l.layout = ControlLayout(l.net);
  l.base = snap_discrete(l.layout, l.layout.read(l.net).values).controls;
  l.controls = l.base;
  if (!cfg.controls_path.empty())
    l.controls = read_controls(read_json_file(cfg.controls_path, "controls file"), l.layout, l.base);
  return l;
}

ScreeningModel load_model(const std::string& path, const Network& net, const ControlLayout& layout) {
  auto model = model_from_json(read_json_file(path, "screening model"));
  const auto expected = FeatureLayout::from(net, layout).hash();
  if (model.layout_hash != expected)
    throw ConfigError(fmt::format("screening model '{}' was trained for a different case (layout {:016x}, case {:016x})",
                                  path, model.layout_hash, expected));
  return model;
}

// ---- powerflow ------------------------------------------------------------

std::string bus_kind(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "PV";
    case BusKind::PQ: return "PQ";
  }
  return "?";
}

std::string converter_mode(ConverterMode m) {
  switch (m) {
    case ConverterMode::Droop: return "droop";
    case ConverterMode::ConstP: return "const_p";
    case ConverterMode::ConstVdc: return "const_vdc";
  }
  return "?";
}

json violations_json(const ConstraintReport& r) {
  json v = json::array();
  for (const auto& x : r.violations) v.push_back({{"group", to_string(x.group)}, {"element", x.element}, {"amount", x.amount}});
  return v;
}

int cmd_powerflow(const RunConfig& cfg, bool trace) {
  const auto l = load(cfg);
  const Network net = l.layout.apply(l.net, l.controls);
  SolverOptions opts = cfg.solver;
  opts.trace = trace;
  const auto e = evaluate(net, opts);
  const auto& st = e.state;

  Output out(cfg.output_dir, "powerflow", config_hash(cfg), cfg.seed);
  std::vector<std::vector<std::string>> buses, branches, convs, dcb;
  std::vector<double> pg(net.buses.size(), 0.0), qg(net.buses.size(), 0.0);
  if (st.converged) {
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
      pg[net.bus_index(net.generators[g].bus)] += st.ac.gen_p[g];
      qg[net.bus_index(net.generators[g].bus)] += st.ac.gen_q[g];
    }
    for (std::size_t i = 0; i < net.buses.size(); ++i) {
      const auto& b = net.buses[i];
      buses.push_back({std::to_string(b.id), bus_kind(b.kind), num(st.ac.voltage[i]),
                       num(st.ac.angle[i] * 180.0 / std::numbers::pi), num(pg[i]), num(qg[i]), num(b.p_load),
                       num(b.q_load)});
    }
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
      const auto& br = net.branches[k];
      branches.push_back({br.label, std::to_string(br.from), std::to_string(br.to), num(st.ac.branch_p_from[k]),
                          num(st.ac.branch_q_from[k]), num(st.ac.branch_p_to[k]), num(br.flow_max),
                          num(std::abs(st.ac.branch_p_from[k]) / br.flow_max)});
    }
    for (std::size_t c = 0; c < net.converters.size(); ++c) {
      const auto& cv = net.converters[c];
      const auto& s = st.converters[c];
      convs.push_back({cv.name, std::to_string(cv.ac_bus), std::to_string(cv.dc_bus), converter_mode(cv.mode),
                       num(cv.p_s), num(cv.q_s), num(s.p_s), num(s.q_s), num(s.p_c), num(s.q_c), num(s.p_dc), num(s.p_loss), num(s.u_c),
                       num(st.dc.voltage[net.dc_bus_index(cv.dc_bus)]), num(cv.v_dc_ref), num(cv.droop)});
    }
    for (std::size_t i = 0; i < net.dc_buses.size(); ++i)
      dcb.push_back({std::to_string(net.dc_buses[i].id), num(st.dc.voltage[i]), num(st.dc.power[i])});
  }
  json body;
  body["schema"] = "acdcopf-powerflow/1";
  body["case"] = net.name;
  body["converged"] = st.converged;
  body["failed_stage"] = to_string(st.failed_stage);
  body["failure"] = to_string(st.failure);
  body["outer_iterations"] = st.outer_iterations;
  body["coupling_residual"] = st.coupling_residual;
  body["controls"] = json::object();
  for (std::size_t i = 0; i < l.layout.size(); ++i) body["controls"][l.layout[i].name] = l.controls[i];
  if (st.converged) {
    body["objectives"] = {{"generation_cost", e.objectives.f1}, {"voltage_deviation", e.objectives.f2}};
    body["ac_max_mismatch"] = st.ac.max_mismatch;
  }
  body["violations"] = violations_json(e.report);
  body["violation_total"] = e.report.total;
  out.json_file("powerflow.json", body);
  out.csv_file("buses.csv", {"bus", "type", "voltage", "angle_deg", "p_gen", "q_gen", "p_load", "q_load"}, buses);
  out.csv_file("branches.csv", {"branch", "from", "to", "p_from", "q_from", "p_to", "flow_max", "loading"}, branches);
  out.csv_file("converters.csv",
               {"converter", "ac_bus", "dc_bus", "mode", "p_s_set", "q_s_set", "p_s", "q_s", "p_c", "q_c", "p_dc", "loss", "u_c", "u_dc",
                "u_dc0", "droop"},
               convs);
  out.csv_file("dc_buses.csv", {"dc_bus", "voltage", "power"}, dcb);
  if (trace) {
    std::ostringstream s;
    write_trace_csv(s, st.trace);
    out.text_file("trace.csv", s.str());
  }
  if (!st.converged) {
    fmt::print(stderr, "power flow did not converge ({} stage: {})\n", to_string(st.failed_stage), to_string(st.failure));
    return kDiverged;
  }
  fmt::print("converged in {} outer iteration(s); cost {:.2f} $/h, voltage deviation {:.6f}\n", st.outer_iterations,
             e.objectives.f1, e.objectives.f2);
  return kOk;
}

// ---- train-screen ---------------------------------------------------------

ScreeningFit train(const RunConfig& cfg, const Loaded& l) {
  if (cfg.screen.sampler.samples < std::max<std::size_t>(cfg.screen.min_samples, 1))
    throw ConfigError(fmt::format("insufficient samples: {} requested, at least {} needed", cfg.screen.sampler.samples,
                                  std::max<std::size_t>(cfg.screen.min_samples, 1)));
  SamplerConfig sampler = cfg.screen.sampler;
  sampler.seed = cfg.seed;
  return fit_screening(l.net, l.layout, l.controls, sampler, cfg.screen.lasso, cfg.workers, cfg.solver);
}

void write_validation(Output& out, const ValidationReport& rep) {
  std::vector<std::vector<std::string>> rows;
  json table = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({r.label, num(r.predicted), num(r.exact), r.error_pct ? num(*r.error_pct) : "",
                    to_string(classify(r.exact))});
    table.push_back({{"branch", r.label},
                     {"predicted", r.predicted},
                     {"exact", r.exact},
                     {"error_pct", r.error_pct ? json(*r.error_pct) : json(nullptr)}});
  }
  out.csv_file("screen_validation.csv", {"branch", "predicted", "exact", "error_pct", "exact_severity"}, rows);
  out.json_file("screen_validation.json", {{"schema", "acdcopf-screen-validation/1"},
                                           {"rows", table},
                                           {"max_abs_error_pct", rep.max_abs_error_pct},
                                           {"checked", rep.checked},
                                           {"spearman", rep.spearman}});
}

int cmd_train_screen(const RunConfig& cfg) {
  const auto l = load(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto fit = train(cfg, l);
  const auto rep = validate_screening(l.net, l.layout, fit.model, fit.held_out, 0.05, cfg.solver);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Output out(cfg.output_dir, "train-screen", config_hash(cfg), cfg.seed);
  auto model = model_to_json(fit.model);
  out.json_file("screen_model.json", model);
  write_validation(out, rep);
  fmt::print("{} training rows ({} diverged), lambda {:.4g}, held-out max |Err| {:.3f}% over {} outages, Spearman {:.4f}, "
             "{:.1f} s\n",
             fit.data.x.rows(), fit.data.diverged, fit.model.lambda, rep.max_abs_error_pct, rep.checked, rep.spearman,
             secs);
  return kOk;
}

// ---- rank -----------------------------------------------------------------

int cmd_rank(const RunConfig& cfg, bool exact) {
  const auto l = load(cfg);
  if (cfg.model_path.empty()) throw ConfigError("rank needs a screening model (--model)");
  const auto model = load_model(cfg.model_path, l.net, l.layout);
  const auto ranked = rank_contingencies(model, l.controls, l.net);
  const auto critical = filter_contingencies(model, l.controls, l.net);

  std::vector<std::vector<std::string>> rows;
  json list = json::array();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    std::vector<std::string> row{std::to_string(i + 1), r.contingency.label, num(r.predicted), to_string(r.severity)};
    json item{{"rank", i + 1}, {"branch", r.contingency.label}, {"predicted", r.predicted},
              {"severity", to_string(r.severity)}};
    if (exact) {
      const double x = exact_index(l.net, l.layout, l.controls, r.contingency, 2, cfg.solver);
      const auto err = prediction_error(r.predicted, x);
      row.push_back(num(x));
      row.push_back(err ? num(*err) : "");
      item["exact"] = x;
      item["error_pct"] = err ? json(*err) : json(nullptr);
    }
    rows.push_back(std::move(row));
    list.push_back(std::move(item));
  }
  std::vector<std::string> header{"rank", "branch", "predicted", "severity"};
  if (exact) {
    header.push_back("exact");
    header.push_back("error_pct");
  }
  json crit = json::array();
  for (const auto& k : critical) crit.push_back(k.label);

  Output out(cfg.output_dir, "rank", config_hash(cfg), cfg.seed);
  out.csv_file("ranking.csv", header, rows);
  out.json_file("ranking.json", {{"schema", "acdcopf-ranking/1"}, {"ranking", list}, {"critical", crit}});
  fmt::print("critical set: {}\n", fmt::join(crit, " "));
  return kOk;
}

// ---- optimize / decide ----------------------------------------------------

json bcs_json(const Decision& d, const std::vector<std::string>& names) {
  json picks = json::array();
  for (const auto& p : d.picks) {
    json controls = json::object();
    for (std::size_t i = 0; i < names.size() && i < p.solution.genome.size(); ++i)
      controls[names[i]] = p.solution.genome[i];
    picks.push_back({{"cluster", p.cluster},
                     {"id", p.solution.id},
                     {"f1", p.solution.objectives.f1},
                     {"f2", p.solution.objectives.f2},
                     {"d", p.d},
                     {"membership", p.membership},
                     {"critical", p.solution.critical},
                     {"controls", controls}});
  }
  json centers = json::array();
  for (const auto& c : d.fcm.centers) centers.push_back(c);
  json body{{"schema", "acdcopf-bcs/1"},
            {"clusters", d.fcm.centers.size()},
            {"centers_normalized", centers},
            {"fcm_loss", d.fcm.loss},
            {"fcm_iterations", d.fcm.iterations},
            {"bcs", picks}};
  if (!d.warning.empty()) body["warning"] = d.warning;
  return body;
}

int cmd_optimize(const RunConfig& cfg, bool train_first, bool no_screening) {
  const auto l = load(cfg);
  Output out(cfg.output_dir, "optimize", config_hash(cfg), cfg.seed);

  std::optional<ScreeningModel> model;
  if (!no_screening) {
    if (!cfg.model_path.empty()) {
      model = load_model(cfg.model_path, l.net, l.layout);
    } else if (train_first) {
      auto fit = train(cfg, l);
      const auto rep = validate_screening(l.net, l.layout, fit.model, fit.held_out, 0.05, cfg.solver);
      out.json_file("screen_model.json", model_to_json(fit.model));
      write_validation(out, rep);
      model = std::move(fit.model);
    } else {
      throw ConfigError("optimize needs --model, --train-first or --no-screening");
    }
  }

  EvaluationContext ctx;
  ctx.net = &l.net;
  ctx.layout = &l.layout;
  ctx.model = model ? &*model : nullptr;
  ctx.limits = CorrectiveLimits::defaults(l.net, l.layout);
  ctx.corrective = cfg.corrective;
  ctx.corrective.solver = cfg.solver;
  ctx.solver = cfg.solver;
  EvoConfig evo = cfg.evo;
  evo.seed = cfg.seed;
  evo.workers = cfg.workers;

  const auto t0 = std::chrono::steady_clock::now();
  const auto res = run(ctx, evo, [&](int g, const Population& pop, const ParetoArchive& a) {
    const auto feasible = std::count_if(pop.begin(), pop.end(), [](const auto& m) { return m.feasible(); });
    fmt::print(stderr, "generation {:3d}: archive {:3d}, feasible {:3d}/{:d}, {:.1f} s\n", g, a.size(), feasible,
               pop.size(), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  });

  const auto base = evaluate_individual(ctx, l.base, 0);
  const auto members = res.archive.sorted();

  std::vector<std::vector<std::string>> log_rows;
  for (const auto& g : res.log)
    log_rows.push_back({std::to_string(g.generation), num(g.best_f1), num(g.best_f2), std::to_string(g.archive_size),
                        num(g.feasible_fraction), std::to_string(g.evaluations)});
  out.csv_file("generations.csv",
               {"generation", "best_f1", "best_f2", "archive_size", "feasible_fraction", "evaluations"}, log_rows);

  std::vector<std::string> header{"id", "f1", "f2", "violation", "critical"};
  for (const auto& n : l.layout.names()) header.push_back(n);
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : members) {
    std::vector<std::string> row{std::to_string(m.id), num(m.objectives.f1), num(m.objectives.f2), num(m.violation),
                                 fmt::format("{}", fmt::join(m.critical, " "))};
    for (const double v : m.genome.values) row.push_back(num(v));
    rows.push_back(std::move(row));
  }
  out.csv_file("archive.csv", header, rows);
  auto archive = archive_to_json(members, l.layout);
  archive["infeasible_run"] = res.infeasible_run;
  archive["evaluations"] = res.evaluations;
  out.json_file("archive.json", archive);
  if (res.refreshed_model) out.json_file("screen_model_refreshed.json", model_to_json(*res.refreshed_model));

  if (res.infeasible_run) {
    fmt::print(stderr, "no feasible operating point found; the archive holds the least-violating one(s)\n");
    for (const auto& m : members)
      fmt::print(stderr, "  id {}: base violation {:.4g}, uncorrectable: {}\n", m.id, m.base_violation,
                 fmt::join(m.uncorrectable, " "));
    return kInfeasible;
  }

  const auto decision = select_bcs(members, cfg.clusters, {}, cfg.seed);
  if (!decision.warning.empty()) fmt::print(stderr, "warning: {}\n", decision.warning);
  out.json_file("bcs.json", bcs_json(decision, l.layout.names()));

  auto change = [](double now, double before) { return num(100.0 * (now - before) / before); };
  std::vector<std::vector<std::string>> summary;
  summary.push_back({"base", num(base.objectives.f1), num(base.objectives.f2), "0", "0", num(base.violation)});
  for (const auto& p : decision.picks) {
    const auto& o = p.solution.objectives;
    summary.push_back({fmt::format("BCS{}", p.cluster + 1), num(o.f1), num(o.f2), change(o.f1, base.objectives.f1),
                       change(o.f2, base.objectives.f2), num(p.solution.violation)});
  }
  out.csv_file("summary.csv", {"solution", "f1", "f2", "f1_change_pct", "f2_change_pct", "violation"}, summary);

  fmt::print("archive: {} points after {} evaluations\n", members.size(), res.evaluations);
  fmt::print("base: f1 {:.2f} f2 {:.5f}\n", base.objectives.f1, base.objectives.f2);
  for (const auto& p : decision.picks)
    fmt::print("BCS{}: f1 {:.2f} f2 {:.5f} d {:.4f}\n", p.cluster + 1, p.solution.objectives.f1,
               p.solution.objectives.f2, p.d);
  return kOk;
}

int cmd_decide(const RunConfig& cfg, const std::string& archive_path) {
  const auto doc = read_json_file(archive_path, "archive");
  const auto members = archive_from_json(doc);
  if (members.empty()) throw ConfigError("archive is empty");
  const auto decision = select_bcs(members, cfg.clusters, {}, cfg.seed);
  if (!decision.warning.empty()) fmt::print(stderr, "warning: {}\n", decision.warning);

  const auto names = doc.value("control_names", std::vector<std::string>{});
  Output out(cfg.output_dir, "decide", config_hash(cfg), cfg.seed);
  out.json_file("bcs.json", bcs_json(decision, names));
  for (const auto& p : decision.picks)
    fmt::print("BCS{}: id {} f1 {:.2f} f2 {:.5f} d {:.4f}\n", p.cluster + 1, p.solution.id, p.solution.objectives.f1,
               p.solution.objectives.f2, p.d);
  return kOk;
}

}  // namespace

json archive_to_json(const Population& archive, const ControlLayout& layout) {
  json members = json::array();
  for (const auto& m : archive) {
    members.push_back({{"id", m.id},
                       {"f1", m.objectives.f1},
                       {"f2", m.objectives.f2},
                       {"valid", m.objectives.valid},
                       {"violation", m.violation},
                       {"base_violation", m.base_violation},
                       {"critical", m.critical},
                       {"uncorrectable", m.uncorrectable},
                       {"controls", m.genome.values}});
  }
  return {{"schema", "acdcopf-archive/1"}, {"control_names", layout.names()}, {"members", members}};
}

Population archive_from_json(const json& doc) {
  try {
    if (doc.at("schema") != "acdcopf-archive/1") throw ConfigError("unsupported archive schema");
    Population out;
    for (const auto& m : doc.at("members")) {
      Individual ind;
      ind.id = m.at("id").get<std::uint64_t>();
      ind.objectives.f1 = m.at("f1").get<double>();
      ind.objectives.f2 = m.at("f2").get<double>();
      ind.objectives.valid = m.value("valid", true);
      ind.violation = m.at("violation").get<double>();
      ind.base_violation = m.value("base_violation", 0.0);
      ind.critical = m.value("critical", std::vector<std::string>{});
      ind.uncorrectable = m.value("uncorrectable", std::vector<std::string>{});
      ind.genome.values = m.at("controls").get<std::vector<double>>();
      out.push_back(std::move(ind));
    }
    return out;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("malformed archive ({})", e.what()));
  }
}

ControlVector read_controls(const json& doc, const ControlLayout& layout, const ControlVector& base) {
  if (!doc.is_object()) throw ConfigError("controls file must map control names to values");
  ControlVector u = base;
  const auto names = layout.names();
  for (const auto& [key, value] : doc.items()) {
    if (key == "meta") continue;
    const auto it = std::find(names.begin(), names.end(), key);
    if (it == names.end()) throw ConfigError(fmt::format("controls file: unknown control '{}'", key));
    if (!value.is_number()) throw ConfigError(fmt::format("controls file: '{}' must be a number", key));
    u[static_cast<std::size_t>(it - names.begin())] = value.get<double>();
  }
  const auto snapped = snap_discrete(layout, u.values);
  if (!snapped.clamped.empty())
    throw ConfigError(fmt::format("controls file: '{}' is outside its bounds", layout[snapped.clamped.front()].name));
  return snapped.controls;
}

int run_app(int argc, const char* const* argv) {
  CLI::App app{"Security-constrained two-objective OPF for hybrid AC/VSC-MTDC grids"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir, case_path, controls_path, model_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "Output directory (env ACDCOPF_OUTPUT_DIR)");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--workers", workers, "Evaluation threads (env ACDCOPF_WORKERS)");

  auto* pf = app.add_subcommand("powerflow", "Solve the AC/DC power flow of a case");
  bool trace = false;
  pf->add_option("--case", case_path, "Case file");
  pf->add_option("--controls", controls_path, "Control overrides {name: value}");
  pf->add_flag("--trace", trace, "Write the per-iteration trace");

  auto* ts = app.add_subcommand("train-screen", "Fit the contingency screening model");
  std::optional<std::size_t> samples, min_samples;
  std::optional<double> radius;
  ts->add_option("--case", case_path, "Case file");
  ts->add_option("--controls", controls_path, "Sampling centre overrides {name: value}");
  ts->add_option("--samples", samples, "Control samples in the design");
  ts->add_option("--min-samples", min_samples, "Smallest acceptable design");
  ts->add_option("--radius", radius, "Sampling half-width as a fraction of each range");

  auto* rk = app.add_subcommand("rank", "Rank AC outages by predicted severity");
  bool exact = false;
  rk->add_option("--case", case_path, "Case file");
  rk->add_option("--model", model_path, "Screening model");
  rk->add_option("--controls", controls_path, "Control overrides {name: value}");
  rk->add_flag("--exact", exact, "Also solve every outage and report the prediction error");

  auto* op = app.add_subcommand("optimize", "Run the optimizer and pick compromise solutions");
  bool train_first = false, no_screening = false, no_explore = false;
  std::optional<std::size_t> population;
  std::optional<int> generations, refresh;
  std::optional<double> kappa;
  op->add_option("--case", case_path, "Case file");
  op->add_option("--model", model_path, "Screening model");
  op->add_flag("--train-first", train_first, "Fit a screening model before optimizing");
  op->add_flag("--no-screening", no_screening, "Check every contingency (slow)");
  op->add_option("--population", population, "Population and archive size");
  op->add_option("--generations", generations, "Generations");
  op->add_option("--kappa", kappa, "Indicator scaling factor");
  op->add_option("--refresh", refresh, "Refit the screening model every N generations (0: never)");
  op->add_flag("--no-explore", no_explore, "Skip exploration probes");

  auto* dc = app.add_subcommand("decide", "Pick compromise solutions from an existing archive");
  std::string archive_path;
  std::optional<std::size_t> clusters;
  dc->add_option("--archive", archive_path, "archive.json from optimize")->required();
  dc->add_option("--clusters", clusters, "Number of clusters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = config_from_json(read_json_file(config_path, "config"));
    if (const char* env = std::getenv("ACDCOPF_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
    if (const char* env = std::getenv("ACDCOPF_WORKERS"); env && *env) {
      try {
        cfg.workers = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("ACDCOPF_WORKERS='{}' is not a number", env));
      }
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (workers) cfg.workers = *workers;
    if (seed) cfg.seed = *seed;
    if (!case_path.empty()) cfg.case_path = case_path;
    if (!controls_path.empty()) cfg.controls_path = controls_path;
    if (!model_path.empty()) cfg.model_path = model_path;
    if (samples) cfg.screen.sampler.samples = *samples;
    if (min_samples) cfg.screen.min_samples = *min_samples;
    if (radius) cfg.screen.sampler.radius = *radius;
    if (population) cfg.evo.population = *population;
    if (generations) cfg.evo.generations = *generations;
    if (kappa) cfg.evo.kappa = *kappa;
    if (refresh) cfg.evo.screen_refresh = *refresh;
    if (no_explore) cfg.evo.explore = false;
    if (clusters) cfg.clusters = *clusters;
    if (cfg.workers < 1) throw ConfigError("workers must be at least 1");

    if (pf->parsed()) return cmd_powerflow(cfg, trace);
    if (ts->parsed()) return cmd_train_screen(cfg);
    if (rk->parsed()) return cmd_rank(cfg, exact);
    if (op->parsed()) return cmd_optimize(cfg, train_first, no_screening);
    if (dc->parsed()) return cmd_decide(cfg, archive_path);
    return kValidation;
  } catch (const IoError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kIo;
  } catch (const ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kValidation;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kValidation;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kValidation;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kFailure;
  }
}

}  // namespace acdc::cli
