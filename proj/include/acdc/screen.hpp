#pragma once

// N-1 screening: composite security index, Lasso severity predictor and the
// critical-contingency filter.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "acdc/controls.hpp"
#include "acdc/netmodel.hpp"
#include "acdc/powerflow.hpp"

namespace acdc {

/// Index assigned to a post-contingency state whose power flow diverged.
inline constexpr double kPiMax = 10.0;
inline constexpr const char* kModelSchema = "acdc-screen/1";

enum class Severity { Secure, Alarm, Insecure };
std::string to_string(Severity s);
Severity classify(double pi);

/// Voltage and active-flow limit crossings between the security and alarm
/// bands, combined by a 2n-norm. kPiMax for a non-converged state.
double composite_index(const Network& net, const SystemState& state, int n = 2);

/// Post-contingency index at controls `u` (no corrective action).
double exact_index(const Network& net, const ControlLayout& layout, const ControlVector& u, const Contingency& k,
                   int n = 2, const SolverOptions& opts = {});

/// Outage one-hot block followed by the control vector.
struct FeatureLayout {
  std::vector<std::string> outages;  // AC-line contingency labels
  std::vector<std::string> controls;

  static FeatureLayout from(const Network& net, const ControlLayout& layout);
  [[nodiscard]] std::size_t size() const { return outages.size() + controls.size(); }
  [[nodiscard]] std::uint64_t hash() const;
  [[nodiscard]] std::optional<std::size_t> outage_index(const std::string& label) const;
};

/// AC-line contingencies of `net`, in contingency-list order.
std::vector<Contingency> ac_outages(const Network& net);

struct SamplerConfig {
  std::size_t samples = 60;  // control vectors; rows = samples x AC outages
  double radius = 0.02;      // half-width of the sampling box, fraction of each range
  // Per control kind ("R", "Udc0", ...). Droop converters turn a small change
  // of U_dc0 or R into a large power shift, so their boxes are much narrower.
  std::map<std::string, double> kind_radius{{"R", 1e-4}, {"Udc0", 1e-3}};
  std::uint64_t seed = 1;

  /// Absolute half-width of the sampling box per control component.
  [[nodiscard]] std::vector<double> half_widths(const ControlLayout& layout) const;
};

/// Latin hypercube over the box center +- half_width, snapped to the discrete
/// grids. Boxes crossing a bound are shifted inside; see sampling_center.
/// Midpoint of the sampling box actually used around `center`.
ControlVector sampling_center(const ControlLayout& layout, const ControlVector& center,
                              std::span<const double> half_width);

std::vector<ControlVector> latin_hypercube(const ControlLayout& layout, const ControlVector& center,
                                           std::span<const double> half_width, std::size_t n, std::mt19937_64& rng);

struct TrainingSet {
  Eigen::MatrixXd x;
  Eigen::VectorXd pi;
  std::vector<std::size_t> sample_of_row;
  std::vector<std::size_t> outage_of_row;
  std::size_t diverged = 0;
};

/// Appends the rows of `more`, renumbering its samples after those of `into`.
void append_training_rows(TrainingSet& into, const TrainingSet& more);

Eigen::RowVectorXd feature_row(const FeatureLayout& features, std::size_t outage, const ControlVector& u);

/// Exact index for every (sample, AC outage) pair. `workers` > 1 fans the
/// solves out over OpenMP threads; the result does not depend on it.
TrainingSet build_training_set(const Network& net, const ControlLayout& layout, std::span<const ControlVector> samples,
                               int workers = 1, const SolverOptions& opts = {});

/// (1/N)||L - X s||^2 + lambda ||s||_1
double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& l, const Eigen::VectorXd& sigma, double lambda);

/// Smallest lambda with an all-zero solution.
double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& l);

struct LassoStats {
  int sweeps = 0;
  std::vector<double> objective_trace;  // after each sweep, when requested
};

/// Cyclic coordinate descent on the raw columns of `x`. Stops when no
/// coordinate moves by more than `tol`.
Eigen::VectorXd lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& l, double lambda, double tol = 1e-7,
                          int max_sweeps = 100000, LassoStats* stats = nullptr, const Eigen::VectorXd* warm = nullptr);

struct LassoConfig {
  int folds = 5;
  int grid_points = 30;
  double grid_ratio = 1e-4;  // smallest lambda / lambda_max
  double tol = 1e-7;
  std::optional<double> lambda;  // skip cross-validation
};

struct ScreeningModel {
  FeatureLayout features;
  std::uint64_t layout_hash = 0;
  std::vector<double> mean;   // per feature
  std::vector<double> scale;  // 0 marks a dropped (constant) column
  std::vector<double> sigma;  // standardized coefficients
  double intercept = 0.0;
  double lambda = 0.0;
  std::size_t samples = 0;  // training rows
  double cv_error = 0.0;
  std::vector<double> lambda_grid;
  std::vector<double> cv_curve;

  [[nodiscard]] double predict_row(const Eigen::RowVectorXd& row) const;
};

ScreeningModel train_screening_model(const TrainingSet& data, const FeatureLayout& features,
                                     const LassoConfig& cfg = {});

/// Predicted index of AC-line outage `k`, clamped at 0. Throws
/// std::out_of_range for an outage the model does not know.
double lasso_predict(const ScreeningModel& model, const ControlVector& u, const Contingency& k);

/// Relative error in percent; empty when the exact value is 0.
std::optional<double> prediction_error(double predicted, double exact);

struct RankedContingency {
  Contingency contingency;
  double predicted;
  Severity severity;
};

/// AC outages by descending predicted index (ties keep list order).
std::vector<RankedContingency> rank_contingencies(const ScreeningModel& model, const ControlVector& u,
                                                  const Network& net);

/// Critical set: AC outages predicted insecure plus every DC-line outage.
std::vector<Contingency> filter_contingencies(const ScreeningModel& model, const ControlVector& u, const Network& net);

struct ScreeningFit {
  ScreeningModel model;
  TrainingSet data;
  ControlVector held_out;  // midpoint of the sampling box, not a training sample
};

/// Latin-hypercube design around `center` (seeded by `sampler.seed`), exact
/// indices for every AC outage, and a cross-validated Lasso fit.
ScreeningFit fit_screening(const Network& net, const ControlLayout& layout, const ControlVector& center,
                           const SamplerConfig& sampler, const LassoConfig& lasso = {}, int workers = 1,
                           const SolverOptions& opts = {});

struct ValidationRow {
  std::string label;
  double predicted = 0.0;
  double exact = 0.0;
  std::optional<double> error_pct;
};

struct ValidationReport {
  std::vector<ValidationRow> rows;  // by descending prediction
  double max_abs_error_pct = 0.0;   // over rows with exact >= min_exact
  std::size_t checked = 0;
  double spearman = 0.0;            // predicted vs exact over all rows
};

/// Predicted against exact index for every AC outage at `u`.
ValidationReport validate_screening(const Network& net, const ControlLayout& layout, const ScreeningModel& model,
                                    const ControlVector& u, double min_exact = 0.05, const SolverOptions& opts = {});

/// Spearman rank correlation with average ranks for ties. 1 when both
/// inputs are constant, 0 when only one is.
double rank_correlation(std::span<const double> a, std::span<const double> b);

nlohmann::json model_to_json(const ScreeningModel& model);
ScreeningModel model_from_json(const nlohmann::json& doc);

/// FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace acdc
