#include "acdc/screen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "acdc/random.hpp"

namespace acdc {

namespace {

double excess(double value, double secure, double alarm) { return (value - secure) / (alarm - secure); }

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// Coordinate descent on the normal equations: g = X'X/N, c = X'L/N.
Eigen::VectorXd descend(const Eigen::MatrixXd& g, const Eigen::VectorXd& c, double lambda, double tol, int max_sweeps,
                        Eigen::VectorXd sigma, LassoStats* stats, double ll_over_n) {
  const Eigen::Index p = g.rows();
  // gs = g * sigma, kept up to date incrementally.
  Eigen::VectorXd gs = g * sigma;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double largest = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double gjj = g(j, j);
      if (!(gjj > 0.0)) {
        sigma[j] = 0.0;
        continue;
      }
      const double rho = c[j] - (gs[j] - gjj * sigma[j]);
      const double next = soft_threshold(rho, lambda / 2.0) / gjj;
      const double delta = next - sigma[j];
      if (delta != 0.0) {
        gs += g.col(j) * delta;
        sigma[j] = next;
        largest = std::max(largest, std::abs(delta));
      }
    }
    if (stats) stats->objective_trace.push_back(ll_over_n - 2.0 * c.dot(sigma) + sigma.dot(gs) + lambda * sigma.lpNorm<1>());
    if (largest <= tol) {
      ++sweep;
      break;
    }
  }
  if (stats) stats->sweeps = sweep;
  return sigma;
}

struct Standardized {
  Eigen::MatrixXd z;
  std::vector<double> mean, scale;
};

Standardized standardize(const Eigen::MatrixXd& x) {
  Standardized s;
  const auto n = static_cast<double>(x.rows());
  s.z = x;
  s.mean.resize(static_cast<std::size_t>(x.cols()));
  s.scale.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).mean();
    const double var = (x.col(j).array() - m).square().sum() / n;
    const double sd = std::sqrt(var);
    const auto jj = static_cast<std::size_t>(j);
    s.mean[jj] = m;
    if (sd > 1e-12 * std::max(1.0, std::abs(m))) {
      s.scale[jj] = sd;
      s.z.col(j) = (x.col(j).array() - m) / sd;
    } else {
      s.scale[jj] = 0.0;
      s.z.col(j).setZero();
    }
  }
  return s;
}

}  // namespace

std::string to_string(Severity s) {
  switch (s) {
    case Severity::Secure: return "secure";
    case Severity::Alarm: return "alarm";
    case Severity::Insecure: return "insecure";
  }
  return "?";
}

Severity classify(double pi) {
  if (pi > 1.0) return Severity::Insecure;
  if (pi > 0.0) return Severity::Alarm;
  return Severity::Secure;
}

double composite_index(const Network& net, const SystemState& state, int n) {
  if (n < 1) throw std::invalid_argument("composite index exponent must be >= 1");
  if (!state.converged) return kPiMax;
  const int p = 2 * n;
  double sum = 0.0;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& b = net.buses[i];
    const double v = state.ac.voltage[i];
    if (v > b.v_secure_max) sum += std::pow(excess(v, b.v_secure_max, b.v_alarm_max), p);
    if (v < b.v_secure_min) sum += std::pow(excess(-v, -b.v_secure_min, -b.v_alarm_min), p);
  }
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    const double flow = std::abs(state.ac.branch_p_from[k]);
    if (flow > br.flow_secure) sum += std::pow(excess(flow, br.flow_secure, br.flow_alarm), p);
  }
  return std::pow(sum, 1.0 / p);
}

double exact_index(const Network& net, const ControlLayout& layout, const ControlVector& u, const Contingency& k,
                   int n, const SolverOptions& opts) {
  const Network post = apply_contingency(layout.apply(net, u), k);
  return composite_index(post, solve_acdc(post, opts), n);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

FeatureLayout FeatureLayout::from(const Network& net, const ControlLayout& layout) {
  FeatureLayout f;
  for (const auto& k : ac_outages(net)) f.outages.push_back(k.label);
  f.controls = layout.names();
  return f;
}

std::uint64_t FeatureLayout::hash() const {
  std::string text;
  for (const auto& s : outages) text += "o:" + s + "\n";
  for (const auto& s : controls) text += "u:" + s + "\n";
  return fnv1a(text);
}

std::optional<std::size_t> FeatureLayout::outage_index(const std::string& label) const {
  const auto it = std::find(outages.begin(), outages.end(), label);
  if (it == outages.end()) return std::nullopt;
  return static_cast<std::size_t>(it - outages.begin());
}

std::vector<Contingency> ac_outages(const Network& net) {
  std::vector<Contingency> out;
  for (const auto& k : net.contingencies)
    if (k.kind == ContingencyKind::AcLine) out.push_back(k);
  return out;
}

std::vector<double> SamplerConfig::half_widths(const ControlLayout& layout) const {
  std::vector<double> out(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto it = kind_radius.find(to_string(layout[i].kind));
    out[i] = (it != kind_radius.end() ? it->second : radius) * layout[i].range();
  }
  return out;
}

ControlVector sampling_center(const ControlLayout& layout, const ControlVector& center,
                              std::span<const double> half_width) {
  ControlVector mid{std::vector<double>(layout.size())};
  for (std::size_t j = 0; j < layout.size(); ++j) {
    const double w = std::min(half_width[j], 0.5 * layout[j].range());
    mid[j] = std::clamp(center[j], layout[j].lower + w, layout[j].upper - w);
  }
  return mid;
}

std::vector<ControlVector> latin_hypercube(const ControlLayout& layout, const ControlVector& center,
                                           std::span<const double> half_width, std::size_t n, std::mt19937_64& rng) {
  const std::size_t d = layout.size();
  if (half_width.size() != d) throw std::invalid_argument("sampler: one half-width per control component expected");
  std::vector<std::vector<double>> raw(n, std::vector<double>(d));
  for (std::size_t j = 0; j < d; ++j) {
    const auto& s = layout[j];
    // A box that pokes out of the bounds is slid back inside rather than
    // clipped, so the samples stay balanced around an interior point.
    const double w = std::min(half_width[j], 0.5 * s.range());
    const double mid = std::clamp(center[j], s.lower + w, s.upper - w);
    const double lo = mid - w;
    const double hi = mid + w;
    const auto strata = random_permutation(rng, n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = (static_cast<double>(strata[i]) + uniform01(rng)) / static_cast<double>(n);
      raw[i][j] = lo + t * (hi - lo);
    }
  }
  std::vector<ControlVector> out;
  out.reserve(n);
  for (const auto& r : raw) out.push_back(snap_discrete(layout, r).controls);
  return out;
}

void append_training_rows(TrainingSet& into, const TrainingSet& more) {
  if (into.x.rows() == 0) {
    into = more;
    return;
  }
  if (into.x.cols() != more.x.cols()) throw std::invalid_argument("training sets with different feature layouts");
  const std::size_t offset = *std::max_element(into.sample_of_row.begin(), into.sample_of_row.end()) + 1;
  const Eigen::Index n0 = into.x.rows();
  into.x.conservativeResize(n0 + more.x.rows(), Eigen::NoChange);
  into.x.bottomRows(more.x.rows()) = more.x;
  into.pi.conservativeResize(n0 + more.pi.size());
  into.pi.tail(more.pi.size()) = more.pi;
  for (const auto s : more.sample_of_row) into.sample_of_row.push_back(s + offset);
  into.outage_of_row.insert(into.outage_of_row.end(), more.outage_of_row.begin(), more.outage_of_row.end());
  into.diverged += more.diverged;
}

Eigen::RowVectorXd feature_row(const FeatureLayout& features, std::size_t outage, const ControlVector& u) {
  const auto no = static_cast<Eigen::Index>(features.outages.size());
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(features.size()));
  row[static_cast<Eigen::Index>(outage)] = 1.0;
  for (std::size_t j = 0; j < u.size(); ++j) row[no + static_cast<Eigen::Index>(j)] = u[j];
  return row;
}

TrainingSet build_training_set(const Network& net, const ControlLayout& layout, std::span<const ControlVector> samples,
                               int workers, const SolverOptions& opts) {
  const auto features = FeatureLayout::from(net, layout);
  const auto outages = ac_outages(net);
  const std::size_t no = outages.size();
  const std::size_t rows = samples.size() * no;

  TrainingSet t;
  t.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(features.size()));
  t.pi.resize(static_cast<Eigen::Index>(rows));
  t.sample_of_row.resize(rows);
  t.outage_of_row.resize(rows);

  std::vector<Network> adjusted;
  adjusted.reserve(samples.size());
  for (const auto& u : samples) adjusted.push_back(layout.apply(net, u));

  std::vector<double> pi(rows, kPiMax);
  std::vector<char> diverged(rows, 0);
  const auto total = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
  for (std::ptrdiff_t r = 0; r < total; ++r) {
    const auto s = static_cast<std::size_t>(r) / no;
    const auto k = static_cast<std::size_t>(r) % no;
    try {
      const Network post = apply_contingency(adjusted[s], outages[k]);
      const auto state = solve_acdc(post, opts);
      diverged[static_cast<std::size_t>(r)] = state.converged ? 0 : 1;
      pi[static_cast<std::size_t>(r)] = composite_index(post, state);
    } catch (const std::exception&) {
      diverged[static_cast<std::size_t>(r)] = 1;
    }
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const auto s = r / no, k = r % no;
    t.x.row(static_cast<Eigen::Index>(r)) = feature_row(features, k, samples[s]);
    t.pi[static_cast<Eigen::Index>(r)] = pi[r];
    t.sample_of_row[r] = s;
    t.outage_of_row[r] = k;
    t.diverged += static_cast<std::size_t>(diverged[r]);
  }
  return t;
}

double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& l, const Eigen::VectorXd& sigma, double lambda) {
  return (l - x * sigma).squaredNorm() / static_cast<double>(x.rows()) + lambda * sigma.lpNorm<1>();
}

double lasso_lambda_max(const Eigen::MatrixXd& x, const Eigen::VectorXd& l) {
  return 2.0 / static_cast<double>(x.rows()) * (x.transpose() * l).cwiseAbs().maxCoeff();
}

Eigen::VectorXd lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& l, double lambda, double tol, int max_sweeps,
                          LassoStats* stats, const Eigen::VectorXd* warm) {
  if (x.rows() != l.size())
    throw std::invalid_argument(fmt::format("lasso: {} rows but {} responses", x.rows(), l.size()));
  if (lambda < 0.0) throw std::invalid_argument("lasso: negative lambda");
  if (warm && warm->size() != x.cols()) throw std::invalid_argument("lasso: warm start has the wrong length");
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd g = x.transpose() * x / n;
  const Eigen::VectorXd c = x.transpose() * l / n;
  Eigen::VectorXd start = warm ? *warm : Eigen::VectorXd::Zero(x.cols());
  return descend(g, c, lambda, tol, max_sweeps, std::move(start), stats, l.squaredNorm() / n);
}

double ScreeningModel::predict_row(const Eigen::RowVectorXd& row) const {
  double y = intercept;
  for (std::size_t j = 0; j < sigma.size(); ++j) {
    if (scale[j] == 0.0 || sigma[j] == 0.0) continue;
    y += sigma[j] * (row[static_cast<Eigen::Index>(j)] - mean[j]) / scale[j];
  }
  return y;
}

ScreeningModel train_screening_model(const TrainingSet& data, const FeatureLayout& features, const LassoConfig& cfg) {
  const auto rows = data.x.rows();
  if (rows == 0) throw std::invalid_argument("screening model: empty training set");
  if (data.x.cols() != static_cast<Eigen::Index>(features.size()))
    throw std::invalid_argument("screening model: feature layout does not match the training matrix");

  ScreeningModel m;
  m.features = features;
  m.layout_hash = features.hash();
  m.samples = static_cast<std::size_t>(rows);
  const auto st = standardize(data.x);
  m.mean = st.mean;
  m.scale = st.scale;
  m.intercept = data.pi.mean();
  const Eigen::VectorXd centered = data.pi.array() - m.intercept;

  const double n = static_cast<double>(rows);
  const Eigen::MatrixXd g_all = st.z.transpose() * st.z / n;
  const Eigen::VectorXd c_all = st.z.transpose() * centered / n;
  const double lmax = lasso_lambda_max(st.z, centered);

  if (cfg.lambda) {
    m.lambda = *cfg.lambda;
  } else if (!(lmax > 0.0)) {
    m.lambda = 0.0;
  } else {
    const int k = std::max(2, cfg.grid_points);
    for (int i = 0; i < k; ++i)
      m.lambda_grid.push_back(lmax * std::pow(cfg.grid_ratio, static_cast<double>(i) / (k - 1)));
    m.cv_curve.assign(m.lambda_grid.size(), 0.0);

    std::size_t n_samples = 0;
    for (const auto s : data.sample_of_row) n_samples = std::max(n_samples, s + 1);
    const int folds = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(2, cfg.folds)), n_samples));
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> test;
      for (Eigen::Index r = 0; r < rows; ++r)
        if (static_cast<int>(data.sample_of_row[static_cast<std::size_t>(r)] % static_cast<std::size_t>(folds)) == f)
          test.push_back(r);
      if (test.empty() || static_cast<Eigen::Index>(test.size()) == rows) continue;
      Eigen::MatrixXd zt(static_cast<Eigen::Index>(test.size()), st.z.cols());
      Eigen::VectorXd lt(static_cast<Eigen::Index>(test.size()));
      for (std::size_t i = 0; i < test.size(); ++i) {
        zt.row(static_cast<Eigen::Index>(i)) = st.z.row(test[i]);
        lt[static_cast<Eigen::Index>(i)] = centered[test[i]];
      }
      const double n_train = n - static_cast<double>(test.size());
      const Eigen::MatrixXd g = (g_all * n - zt.transpose() * zt) / n_train;
      const Eigen::VectorXd c = (c_all * n - zt.transpose() * lt) / n_train;
      Eigen::VectorXd sigma = Eigen::VectorXd::Zero(st.z.cols());
      for (std::size_t i = 0; i < m.lambda_grid.size(); ++i) {
        sigma = descend(g, c, m.lambda_grid[i], cfg.tol, 100000, sigma, nullptr, 0.0);
        m.cv_curve[i] += (lt - zt * sigma).squaredNorm() / n;
      }
    }
    const auto best = std::min_element(m.cv_curve.begin(), m.cv_curve.end()) - m.cv_curve.begin();
    m.lambda = m.lambda_grid[static_cast<std::size_t>(best)];
    m.cv_error = m.cv_curve[static_cast<std::size_t>(best)];
  }

  const Eigen::VectorXd sigma = descend(g_all, c_all, m.lambda, cfg.tol, 100000, Eigen::VectorXd::Zero(st.z.cols()),
                                        nullptr, 0.0);
  m.sigma.assign(sigma.begin(), sigma.end());
  return m;
}

double lasso_predict(const ScreeningModel& model, const ControlVector& u, const Contingency& k) {
  const auto idx = model.features.outage_index(k.label);
  if (!idx) throw std::out_of_range(fmt::format("screening model has no outage '{}'", k.label));
  if (u.size() != model.features.controls.size())
    throw std::invalid_argument(fmt::format("screening model expects {} controls, got {}",
                                            model.features.controls.size(), u.size()));
  return std::max(0.0, model.predict_row(feature_row(model.features, *idx, u)));
}

std::optional<double> prediction_error(double predicted, double exact) {
  if (exact == 0.0) return std::nullopt;
  return (predicted - exact) / exact * 100.0;
}

std::vector<RankedContingency> rank_contingencies(const ScreeningModel& model, const ControlVector& u,
                                                  const Network& net) {
  std::vector<RankedContingency> out;
  for (const auto& k : ac_outages(net)) {
    const double p = lasso_predict(model, u, k);
    out.push_back({k, p, classify(p)});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedContingency& a, const RankedContingency& b) { return a.predicted > b.predicted; });
  return out;
}

std::vector<Contingency> filter_contingencies(const ScreeningModel& model, const ControlVector& u, const Network& net) {
  std::vector<Contingency> out;
  for (const auto& k : net.contingencies) {
    if (k.kind == ContingencyKind::DcLine || lasso_predict(model, u, k) > 1.0) out.push_back(k);
  }
  return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double rank_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rank correlation needs two equal, non-empty samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 && sbb == 0.0) return 1.0;
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

ScreeningFit fit_screening(const Network& net, const ControlLayout& layout, const ControlVector& center,
                           const SamplerConfig& sampler, const LassoConfig& lasso, int workers,
                           const SolverOptions& opts) {
  const auto hw = sampler.half_widths(layout);
  std::mt19937_64 rng(sampler.seed);
  const auto samples = latin_hypercube(layout, center, hw, sampler.samples, rng);
  ScreeningFit fit;
  fit.held_out = snap_discrete(layout, sampling_center(layout, center, hw).values).controls;
  fit.data = build_training_set(net, layout, samples, workers, opts);
  fit.model = train_screening_model(fit.data, FeatureLayout::from(net, layout), lasso);
  return fit;
}

ValidationReport validate_screening(const Network& net, const ControlLayout& layout, const ScreeningModel& model,
                                    const ControlVector& u, double min_exact, const SolverOptions& opts) {
  ValidationReport rep;
  std::vector<double> pred, exact;
  for (const auto& k : ac_outages(net)) {
    ValidationRow row;
    row.label = k.label;
    row.predicted = lasso_predict(model, u, k);
    row.exact = exact_index(net, layout, u, k, 2, opts);
    row.error_pct = prediction_error(row.predicted, row.exact);
    if (row.exact >= min_exact && row.error_pct) {
      ++rep.checked;
      rep.max_abs_error_pct = std::max(rep.max_abs_error_pct, std::abs(*row.error_pct));
    }
    pred.push_back(row.predicted);
    exact.push_back(row.exact);
    rep.rows.push_back(std::move(row));
  }
  if (!pred.empty()) rep.spearman = rank_correlation(pred, exact);
  std::stable_sort(rep.rows.begin(), rep.rows.end(),
                   [](const ValidationRow& a, const ValidationRow& b) { return a.predicted > b.predicted; });
  return rep;
}

nlohmann::json model_to_json(const ScreeningModel& m) {
  nlohmann::json j;
  j["schema"] = kModelSchema;
  j["layout_hash"] = fmt::format("{:016x}", m.layout_hash);
  j["outages"] = m.features.outages;
  j["controls"] = m.features.controls;
  j["mean"] = m.mean;
  j["scale"] = m.scale;
  j["sigma"] = m.sigma;
  j["intercept"] = m.intercept;
  j["lambda"] = m.lambda;
  j["samples"] = m.samples;
  j["cv_error"] = m.cv_error;
  j["lambda_grid"] = m.lambda_grid;
  j["cv_curve"] = m.cv_curve;
  return j;
}

ScreeningModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != kModelSchema)
      throw std::invalid_argument(fmt::format("unsupported model schema '{}'", j.at("schema").get<std::string>()));
    ScreeningModel m;
    m.features.outages = j.at("outages").get<std::vector<std::string>>();
    m.features.controls = j.at("controls").get<std::vector<std::string>>();
    m.layout_hash = std::stoull(j.at("layout_hash").get<std::string>(), nullptr, 16);
    if (m.layout_hash != m.features.hash()) throw std::invalid_argument("model layout hash does not match its features");
    m.mean = j.at("mean").get<std::vector<double>>();
    m.scale = j.at("scale").get<std::vector<double>>();
    m.sigma = j.at("sigma").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.samples = j.at("samples").get<std::size_t>();
    m.cv_error = j.value("cv_error", 0.0);
    m.lambda_grid = j.value("lambda_grid", std::vector<double>{});
    m.cv_curve = j.value("cv_curve", std::vector<double>{});
    const auto q = m.features.size();
    if (m.mean.size() != q || m.scale.size() != q || m.sigma.size() != q)
      throw std::invalid_argument("model vectors do not match the feature layout");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(fmt::format("malformed screening model ({})", e.what()));
  }
}

}  // namespace acdc
