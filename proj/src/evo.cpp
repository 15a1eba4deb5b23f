#include "acdc/evo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>

#include "acdc/random.hpp"

namespace acdc {

namespace {

constexpr double kLowest = std::numeric_limits<double>::lowest();

// Lower violation first, then higher fitness.
bool tournament_better(const Individual& a, const Individual& b) {
  if (a.violation != b.violation) return a.violation < b.violation;
  return a.fitness > b.fitness;
}

double removal_violation(const Individual& ind) {
  return ind.objectives.valid ? ind.violation : std::numeric_limits<double>::infinity();
}

bool same_entry(const Individual& a, const Individual& b) {
  if (a.feasible() != b.feasible()) return false;
  if (!a.feasible()) return a.violation == b.violation;
  return a.objectives.f1 == b.objectives.f1 && a.objectives.f2 == b.objectives.f2;
}

void evaluate_batch(const EvaluationContext& ctx, std::span<Individual> batch, int workers) {
  if (workers > 1)
    evaluate_parallel(ctx, batch, workers);
  else
    evaluate_serial(ctx, batch);
}

Population make_batch(std::vector<ControlVector> genomes, std::uint64_t& next_id) {
  Population batch(genomes.size());
  for (std::size_t i = 0; i < genomes.size(); ++i) {
    batch[i].genome = std::move(genomes[i]);
    batch[i].id = next_id++;
  }
  return batch;
}

}  // namespace

double epsilon_indicator(const Point& a, const Point& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("epsilon indicator: dimension mismatch");
  double e = a[0] - b[0];
  for (std::size_t i = 1; i < a.size(); ++i) e = std::max(e, a[i] - b[i]);
  return e;
}

double epsilon_indicator(std::span<const Point> a, std::span<const Point> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("epsilon indicator: empty set");
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& y : b) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : a) best = std::min(best, epsilon_indicator(x, y));
    worst = std::max(worst, best);
  }
  return worst;
}

std::vector<double> ibea_fitness(std::span<const Point> points, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  std::vector<double> fv(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < points.size(); ++j)
      if (i != j) fv[i] -= std::exp(-epsilon_indicator(points[j], points[i]) / kappa);
  return fv;
}

bool dominates(const Point& a, const Point& b) {
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strict = true;
  }
  return strict;
}

bool constrained_dominates(const Individual& a, const Individual& b) {
  const bool fa = a.feasible();
  const bool fb = b.feasible();
  if (fa != fb) return fa;
  if (!fa) return removal_violation(a) < removal_violation(b);
  return dominates(a.point(), b.point());
}

std::vector<Point> normalized_objectives(const Population& pop) {
  const bool any_feasible = std::any_of(pop.begin(), pop.end(), [](const auto& m) { return m.feasible(); });
  Point lo(2, std::numeric_limits<double>::infinity());
  Point hi(2, -std::numeric_limits<double>::infinity());
  for (const auto& m : pop) {
    if (!m.objectives.valid || (any_feasible && !m.feasible())) continue;
    const auto p = m.point();
    for (int k = 0; k < 2; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  std::vector<Point> out;
  out.reserve(pop.size());
  for (const auto& m : pop) {
    if (!m.objectives.valid) {
      out.push_back({1.0, 1.0});
      continue;
    }
    auto p = m.point();
    for (int k = 0; k < 2; ++k) {
      const double span = hi[k] - lo[k];
      p[k] = span > 0.0 ? (p[k] - lo[k]) / span : 0.0;
    }
    out.push_back(std::move(p));
  }
  return out;
}

void assign_fitness(Population& pop, double kappa) {
  const auto norm = normalized_objectives(pop);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!pop[i].objectives.valid) {
      pop[i].fitness = kLowest;
      continue;
    }
    double fv = 0.0;
    for (std::size_t j = 0; j < pop.size(); ++j)
      if (j != i && pop[j].objectives.valid) fv -= std::exp(-epsilon_indicator(norm[j], norm[i]) / kappa);
    pop[i].fitness = fv;
  }
}

void environmental_selection(Population& pop, std::size_t s, double kappa) {
  assign_fitness(pop, kappa);
  if (pop.size() <= s) return;
  const auto norm = normalized_objectives(pop);
  std::vector<bool> alive(pop.size(), true);
  std::size_t count = pop.size();
  while (count > s) {
    std::size_t victim = pop.size();
    bool infeasible_left = false;
    for (std::size_t i = 0; i < pop.size(); ++i)
      if (alive[i] && !pop[i].feasible()) infeasible_left = true;
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (!alive[i]) continue;
      if (victim == pop.size()) {
        if (!infeasible_left || !pop[i].feasible()) victim = i;
        continue;
      }
      const auto& a = pop[i];
      const auto& v = pop[victim];
      bool worse;
      if (infeasible_left) {
        if (a.feasible()) continue;
        worse = removal_violation(a) > removal_violation(v) ||
                (removal_violation(a) == removal_violation(v) && a.id < v.id);
      } else {
        worse = a.fitness < v.fitness || (a.fitness == v.fitness && a.id < v.id);
      }
      if (worse) victim = i;
    }
    alive[victim] = false;
    --count;
    if (pop[victim].objectives.valid) {
      for (std::size_t j = 0; j < pop.size(); ++j)
        if (alive[j] && pop[j].objectives.valid)
          pop[j].fitness += std::exp(-epsilon_indicator(norm[victim], norm[j]) / kappa);
    }
  }
  Population kept;
  kept.reserve(s);
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (alive[i]) kept.push_back(std::move(pop[i]));
  pop = std::move(kept);
}

Population mating_selection(const Population& pop, std::size_t count, std::mt19937_64& rng) {
  if (pop.empty()) throw std::invalid_argument("mating selection on an empty population");
  Population pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& a = pop[uniform_index(rng, pop.size())];
    const auto& b = pop[uniform_index(rng, pop.size())];
    pool.push_back(tournament_better(b, a) ? b : a);
  }
  return pool;
}

std::pair<double, double> sbx_pair(double x1, double x2, double lo, double hi, double eta, std::mt19937_64& rng) {
  const double y1 = std::min(x1, x2);
  const double y2 = std::max(x1, x2);
  const double gap = y2 - y1;
  const double r = uniform01(rng);
  if (gap < 1e-14) return {x1, x2};
  auto spread = [&](double beta) {
    const double alpha = 2.0 - std::pow(beta, -(eta + 1.0));
    return r <= 1.0 / alpha ? std::pow(r * alpha, 1.0 / (eta + 1.0))
                            : std::pow(1.0 / (2.0 - r * alpha), 1.0 / (eta + 1.0));
  };
  double c1 = 0.5 * (y1 + y2 - spread(1.0 + 2.0 * (y1 - lo) / gap) * gap);
  double c2 = 0.5 * (y1 + y2 + spread(1.0 + 2.0 * (hi - y2) / gap) * gap);
  c1 = std::clamp(c1, lo, hi);
  c2 = std::clamp(c2, lo, hi);
  if (uniform01(rng) < 0.5) std::swap(c1, c2);
  return {c1, c2};
}

double polynomial_mutation(double x, double lo, double hi, double eta, std::mt19937_64& rng) {
  const double span = hi - lo;
  const double r = uniform01(rng);
  if (!(span > 0.0)) return x;
  const double d1 = (x - lo) / span;
  const double d2 = (hi - x) / span;
  const double p = 1.0 / (eta + 1.0);
  double dq;
  if (r < 0.5) {
    const double val = 2.0 * r + (1.0 - 2.0 * r) * std::pow(1.0 - d1, eta + 1.0);
    dq = std::pow(val, p) - 1.0;
  } else {
    const double val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * std::pow(1.0 - d2, eta + 1.0);
    dq = 1.0 - std::pow(val, p);
  }
  return std::clamp(x + dq * span, lo, hi);
}

std::vector<ControlVector> variation(const ControlLayout& layout, const Population& pool, const VariationConfig& cfg,
                                     std::mt19937_64& rng) {
  const std::size_t d = layout.size();
  const double pm = cfg.mutation_rate < 0.0 ? 1.0 / static_cast<double>(std::max<std::size_t>(d, 1)) : cfg.mutation_rate;
  std::vector<ControlVector> out;
  out.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); i += 2) {
    const auto& p1 = pool[i].genome.values;
    const auto& p2 = pool[i + 1 < pool.size() ? i + 1 : 0].genome.values;
    std::vector<double> c1 = p1;
    std::vector<double> c2 = p2;
    if (uniform01(rng) < cfg.crossover_rate) {
      for (std::size_t j = 0; j < d; ++j) {
        if (uniform01(rng) < 0.5) std::tie(c1[j], c2[j]) = sbx_pair(p1[j], p2[j], layout[j].lower, layout[j].upper, cfg.eta_c, rng);
      }
    }
    for (auto* c : {&c1, &c2}) {
      for (std::size_t j = 0; j < d; ++j)
        if (uniform01(rng) < pm) (*c)[j] = polynomial_mutation((*c)[j], layout[j].lower, layout[j].upper, cfg.eta_m, rng);
    }
    out.push_back(snap_discrete(layout, c1).controls);
    if (out.size() < pool.size()) out.push_back(snap_discrete(layout, c2).controls);
  }
  return out;
}

double hypervolume2d(std::vector<Point> points, const Point& ref) {
  std::erase_if(points, [&](const Point& p) { return !(p[0] < ref[0] && p[1] < ref[1]); });
  std::sort(points.begin(), points.end());
  double hv = 0.0;
  double floor = ref[1];
  for (const auto& p : points) {
    if (p[1] < floor) {
      hv += (ref[0] - p[0]) * (floor - p[1]);
      floor = p[1];
    }
  }
  return hv;
}

bool ParetoArchive::offer(const Individual& ind) {
  for (const auto& m : members_)
    if (constrained_dominates(m, ind) || same_entry(m, ind)) return false;
  std::erase_if(members_, [&](const Individual& m) { return constrained_dominates(ind, m); });
  members_.push_back(ind);
  if (members_.size() > capacity_) truncate();
  return true;
}

void ParetoArchive::truncate() {
  while (members_.size() > capacity_) {
    // Mutually non-dominated feasible points: f1 rises while f2 falls.
    auto order = sorted();
    std::size_t victim = 1;
    double smallest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < order.size(); ++i) {
      const double area = (order[i + 1].objectives.f1 - order[i].objectives.f1) *
                          (order[i - 1].objectives.f2 - order[i].objectives.f2);
      if (area < smallest || (area == smallest && order[i].id < order[victim].id)) {
        smallest = area;
        victim = i;
      }
    }
    const auto id = order[victim].id;
    std::erase_if(members_, [&](const Individual& m) { return m.id == id; });
  }
}

bool ParetoArchive::all_feasible() const {
  return std::all_of(members_.begin(), members_.end(), [](const auto& m) { return m.feasible(); });
}

Population ParetoArchive::sorted() const {
  Population out = members_;
  std::sort(out.begin(), out.end(), [](const Individual& a, const Individual& b) {
    if (a.objectives.f1 != b.objectives.f1) return a.objectives.f1 < b.objectives.f1;
    return a.id < b.id;
  });
  return out;
}

Individual evaluate_individual(const EvaluationContext& ctx, const ControlVector& genome, std::uint64_t id) {
  Individual ind;
  ind.genome = genome;
  ind.id = id;
  const Network applied = ctx.layout->apply(*ctx.net, genome);
  const auto e = evaluate(applied, ctx.solver);
  ind.objectives = e.objectives;
  ind.base_violation = e.report.total;
  ind.violation = ind.base_violation;
  if (!e.state.converged) return ind;
  // Corrective checks only matter once the base case holds; until then every
  // contingency counts as uncorrectable, which keeps the ordering by
  // violation and skips the costly searches.
  if (ind.base_violation > 0.0) {
    ind.violation += static_cast<double>(ctx.net->contingencies.size());
    return ind;
  }

  const auto critical = ctx.model ? filter_contingencies(*ctx.model, genome, *ctx.net) : ctx.net->contingencies;
  for (const auto& k : critical) {
    ind.critical.push_back(k.label);
    const auto r = corrective_search(apply_contingency(applied, k), *ctx.layout, genome, ctx.limits, ctx.corrective);
    if (!r.feasible) {
      ind.uncorrectable.push_back(k.label);
      ind.violation += 1.0;
    }
  }
  return ind;
}

void evaluate_serial(const EvaluationContext& ctx, std::span<Individual> batch) {
  for (auto& ind : batch) ind = evaluate_individual(ctx, ind.genome, ind.id);
}

void evaluate_parallel(const EvaluationContext& ctx, std::span<Individual> batch, int workers) {
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(workers, 1))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      auto& ind = batch[static_cast<std::size_t>(i)];
      ind = evaluate_individual(ctx, ind.genome, ind.id);
    } catch (...) {
#pragma omp critical(acdc_evaluate_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

EvoState initialize(const EvaluationContext& ctx, const EvoConfig& cfg, std::mt19937_64& rng) {
  if (cfg.population < 2) throw std::invalid_argument("population size must be at least 2");
  if (!(cfg.kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  const auto& layout = *ctx.layout;
  std::vector<ControlVector> genomes;
  genomes.push_back(snap_discrete(layout, layout.read(*ctx.net).values).controls);
  while (genomes.size() < cfg.population) {
    std::vector<double> raw(layout.size());
    for (std::size_t j = 0; j < layout.size(); ++j) raw[j] = layout[j].lower + uniform01(rng) * layout[j].range();
    genomes.push_back(snap_discrete(layout, raw).controls);
  }
  EvoState st;
  st.pc = ParetoArchive(cfg.population);
  st.npc = make_batch(std::move(genomes), st.next_id);
  evaluate_batch(ctx, st.npc, cfg.workers);
  st.evaluations += st.npc.size();
  for (const auto& ind : st.npc) st.pc.offer(ind);
  assign_fitness(st.npc, cfg.kappa);
  return st;
}

void bce_step(const EvaluationContext& ctx, const EvoConfig& cfg, EvoState& st, std::mt19937_64& rng) {
  const std::size_t s = cfg.population;

  // Population side: tournament, variation, evaluation, indicator selection.
  const auto pool = mating_selection(st.npc, s, rng);
  auto offspring = make_batch(variation(*ctx.layout, pool, cfg.variation, rng), st.next_id);
  evaluate_batch(ctx, offspring, cfg.workers);
  st.evaluations += offspring.size();

  // Archive side.
  for (const auto& ind : offspring) st.pc.offer(ind);
  st.npc.insert(st.npc.end(), offspring.begin(), offspring.end());
  environmental_selection(st.npc, s, cfg.kappa);
  if (!cfg.explore) return;

  // Exploration around archive members that the population does not cover.
  Population both = st.pc.members();
  both.insert(both.end(), st.npc.begin(), st.npc.end());
  const auto norm = normalized_objectives(both);
  const double radius = 1.0 / static_cast<double>(s);
  const std::size_t na = st.pc.size();
  std::vector<std::size_t> lonely;
  for (std::size_t i = 0; i < na; ++i) {
    if (!both[i].objectives.valid) continue;
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = na; j < both.size(); ++j) {
      if (!both[j].objectives.valid) continue;
      nearest = std::min(nearest, std::hypot(norm[i][0] - norm[j][0], norm[i][1] - norm[j][1]));
    }
    if (nearest > radius) lonely.push_back(i);
  }
  std::sort(lonely.begin(), lonely.end(), [&](std::size_t a, std::size_t b) { return both[a].id < both[b].id; });

  const auto& layout = *ctx.layout;
  const double pm = cfg.variation.mutation_rate < 0.0 ? 1.0 / static_cast<double>(layout.size())
                                                      : cfg.variation.mutation_rate;
  std::vector<ControlVector> genomes;
  for (const std::size_t i : lonely) {
    auto raw = both[i].genome.values;
    const std::size_t forced = uniform_index(rng, layout.size());
    for (std::size_t j = 0; j < layout.size(); ++j) {
      if (j == forced || uniform01(rng) < pm)
        raw[j] = polynomial_mutation(raw[j], layout[j].lower, layout[j].upper, cfg.variation.eta_m, rng);
    }
    genomes.push_back(snap_discrete(layout, raw).controls);
  }
  if (genomes.empty()) return;
  auto probes = make_batch(std::move(genomes), st.next_id);
  evaluate_batch(ctx, probes, cfg.workers);
  st.evaluations += probes.size();
  for (const auto& ind : probes) st.pc.offer(ind);
  st.npc.insert(st.npc.end(), probes.begin(), probes.end());
  environmental_selection(st.npc, s, cfg.kappa);
}

namespace {

GenerationLog summarize(int generation, const EvoState& st) {
  GenerationLog g;
  g.generation = generation;
  g.archive_size = st.pc.size();
  g.evaluations = st.evaluations;
  for (const auto& m : st.pc.members()) {
    if (!m.feasible()) continue;
    g.best_f1 = std::fmin(g.best_f1, m.objectives.f1);  // fmin skips the initial NaN
    g.best_f2 = std::fmin(g.best_f2, m.objectives.f2);
  }
  const auto feasible = std::count_if(st.npc.begin(), st.npc.end(), [](const auto& m) { return m.feasible(); });
  g.feasible_fraction = st.npc.empty() ? 0.0 : static_cast<double>(feasible) / static_cast<double>(st.npc.size());
  return g;
}

}  // namespace

EvoResult run(const EvaluationContext& ctx_in, const EvoConfig& cfg, const GenerationObserver& observer) {
  EvaluationContext ctx = ctx_in;
  std::mt19937_64 rng(cfg.seed);
  EvoState st = initialize(ctx, cfg, rng);
  EvoResult res;
  res.log.push_back(summarize(0, st));
  if (observer) observer(0, st.npc, st.pc);
  TrainingSet history;
  for (int g = 1; g <= cfg.generations; ++g) {
    if (cfg.screen_refresh > 0 && ctx.model && (g - 1) > 0 && (g - 1) % cfg.screen_refresh == 0) {
      std::vector<ControlVector> genomes;
      for (const auto& m : st.npc) genomes.push_back(m.genome);
      append_training_rows(history, build_training_set(*ctx.net, *ctx.layout, genomes, cfg.workers, ctx.solver));
      res.refreshed_model = train_screening_model(history, ctx.model->features, cfg.lasso);
      ctx.model = &*res.refreshed_model;
    }
    bce_step(ctx, cfg, st, rng);
    res.log.push_back(summarize(g, st));
    if (observer) observer(g, st.npc, st.pc);
  }
  res.infeasible_run = st.pc.size() == 0 || !st.pc.all_feasible();
  res.archive = std::move(st.pc);
  res.population = std::move(st.npc);
  res.evaluations = st.evaluations;
  return res;
}

}  // namespace acdc
