#pragma once

// Bi-criterion evolution: an IBEA population evolves next to a Pareto
// archive, with batch evaluation of individuals on a thread pool.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "acdc/controls.hpp"
#include "acdc/netmodel.hpp"
#include "acdc/opf.hpp"
#include "acdc/screen.hpp"

namespace acdc {

using Point = std::vector<double>;

/// Smallest e such that every b in B is weakly dominated by some a - e, a in A.
/// Throws std::invalid_argument on an empty set or mismatched dimensions.
double epsilon_indicator(std::span<const Point> a, std::span<const Point> b);

/// Indicator between two single points.
double epsilon_indicator(const Point& a, const Point& b);

/// FV(x) = sum over y != x of -exp(-I(y, x) / kappa).
std::vector<double> ibea_fitness(std::span<const Point> points, double kappa);

struct Individual {
  ControlVector genome;
  ObjectivePair objectives;
  // Base-case total plus one per uncorrectable contingency; every contingency
  // counts while the base case itself is violated.
  double violation = 0.0;
  double base_violation = 0.0;  // operating limits without outages
  std::vector<std::string> critical;       // screened contingency set
  std::vector<std::string> uncorrectable;  // members of `critical` with no corrective fix
  double fitness = 0.0;
  std::uint64_t id = 0;

  [[nodiscard]] bool feasible() const { return objectives.valid && violation <= 0.0; }
  [[nodiscard]] Point point() const { return {objectives.f1, objectives.f2}; }
};

using Population = std::vector<Individual>;

/// Constrained domination: feasible beats infeasible, two infeasible compare
/// by violation, two feasible by Pareto dominance.
bool constrained_dominates(const Individual& a, const Individual& b);

/// Pareto dominance for minimization.
bool dominates(const Point& a, const Point& b);

/// Objectives scaled to [0, 1] per component, using the range over the
/// feasible members (all valid members when none is feasible). Members
/// without valid objectives map to a point of 1s.
std::vector<Point> normalized_objectives(const Population& pop);

/// Recomputes `fitness` of every member on normalized objectives. Members
/// without valid objectives get the lowest double.
void assign_fitness(Population& pop, double kappa);

/// Shrinks `pop` to `s`: infeasible members go first (largest violation),
/// then the smallest fitness, with the sums updated after each removal.
/// Ties go to the lowest id.
void environmental_selection(Population& pop, std::size_t s, double kappa);

/// `count` binary tournaments with replacement on (violation asc, fitness desc).
Population mating_selection(const Population& pop, std::size_t count, std::mt19937_64& rng);

struct VariationConfig {
  double crossover_rate = 0.9;
  double mutation_rate = -1.0;  // per component; negative means 1/dimension
  double eta_c = 20.0;
  double eta_m = 20.0;
};

/// Simulated binary crossover between two values in [lo, hi].
std::pair<double, double> sbx_pair(double x1, double x2, double lo, double hi, double eta, std::mt19937_64& rng);

/// Polynomial mutation of one value in [lo, hi].
double polynomial_mutation(double x, double lo, double hi, double eta, std::mt19937_64& rng);

/// Pairs consecutive pool members, applies crossover and mutation and snaps
/// the stepped components. Returns genomes only (one per pool member).
std::vector<ControlVector> variation(const ControlLayout& layout, const Population& pool, const VariationConfig& cfg,
                                     std::mt19937_64& rng);

/// Exact 2-objective hypervolume against `ref`; points not strictly better
/// than `ref` in both objectives contribute nothing.
double hypervolume2d(std::vector<Point> points, const Point& ref);

/// Archive of mutually non-dominated individuals with a capacity. When full,
/// the member with the smallest exclusive area to its neighbours goes; the two
/// extremes are kept. Offering one point at a time this way never lowers the
/// hypervolume for a reference point beyond the archive's nadir.
class ParetoArchive {
 public:
  explicit ParetoArchive(std::size_t capacity = 100) : capacity_(capacity) {}

  /// True when `ind` entered the archive.
  bool offer(const Individual& ind);

  [[nodiscard]] const Population& members() const { return members_; }
  [[nodiscard]] std::size_t size() const { return members_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] bool all_feasible() const;

  /// Members sorted by ascending f1 (ties by id).
  [[nodiscard]] Population sorted() const;

 private:
  void truncate();

  std::size_t capacity_;
  Population members_;
};

struct EvoConfig {
  std::size_t population = 100;
  int generations = 50;
  double kappa = 0.05;
  VariationConfig variation;
  bool explore = true;
  int workers = 1;
  std::uint64_t seed = 1;
  // Every this many generations the screening model is refitted on all
  // population genomes seen at refresh points so far (0 keeps it fixed).
  int screen_refresh = 0;
  LassoConfig lasso;
};

/// Everything an evaluation needs; shared read-only by the workers.
struct EvaluationContext {
  const Network* net = nullptr;
  const ControlLayout* layout = nullptr;
  const ScreeningModel* model = nullptr;  // null: every contingency is checked
  CorrectiveLimits limits;
  CorrectiveOptions corrective;
  SolverOptions solver;
};

/// Objectives, base limits, screening and corrective checks for one genome.
Individual evaluate_individual(const EvaluationContext& ctx, const ControlVector& genome, std::uint64_t id);

/// Evaluates batch[i].genome in place, one after another.
void evaluate_serial(const EvaluationContext& ctx, std::span<Individual> batch);

/// Same results as evaluate_serial, spread over `workers` OpenMP threads.
void evaluate_parallel(const EvaluationContext& ctx, std::span<Individual> batch, int workers);

struct GenerationLog {
  int generation = 0;
  double best_f1 = std::numeric_limits<double>::quiet_NaN();  // over the feasible archive members
  double best_f2 = std::numeric_limits<double>::quiet_NaN();
  std::size_t archive_size = 0;
  double feasible_fraction = 0.0;  // of the population
  std::size_t evaluations = 0;     // cumulative
};

struct EvoResult {
  ParetoArchive archive;
  std::optional<ScreeningModel> refreshed_model;  // last refit, if any
  Population population;
  std::vector<GenerationLog> log;
  bool infeasible_run = false;
  std::size_t evaluations = 0;
};

using GenerationObserver = std::function<void(int generation, const Population& pop, const ParetoArchive& archive)>;

struct EvoState {
  Population npc;
  ParetoArchive pc;
  std::uint64_t next_id = 0;
  std::size_t evaluations = 0;
};

/// Initial population: the case's own operating point followed by uniform
/// random admissible genomes; evaluated and offered to the archive.
EvoState initialize(const EvaluationContext& ctx, const EvoConfig& cfg, std::mt19937_64& rng);

/// One generation: population evolution, archive update, and exploration
/// probes around archive members with no population member nearby.
void bce_step(const EvaluationContext& ctx, const EvoConfig& cfg, EvoState& state, std::mt19937_64& rng);

EvoResult run(const EvaluationContext& ctx, const EvoConfig& cfg, const GenerationObserver& observer = {});

}  // namespace acdc
