#include "acdc/decide.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "acdc/random.hpp"

namespace acdc {

namespace {

double dist2(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

std::vector<Point> kmeanspp(std::span<const Point> pts, std::size_t c, std::mt19937_64& rng) {
  std::vector<Point> centers{pts[uniform_index(rng, pts.size())]};
  while (centers.size() < c) {
    std::vector<double> w(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      w[i] = std::numeric_limits<double>::infinity();
      for (const auto& v : centers) w[i] = std::min(w[i], dist2(pts[i], v));
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::size_t pick = pts.size() - 1;
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (r < w[i]) {
          pick = i;
          break;
        }
        r -= w[i];
      }
    } else {
      pick = uniform_index(rng, pts.size());
    }
    centers.push_back(pts[pick]);
  }
  return centers;
}

Eigen::MatrixXd memberships(std::span<const Point> pts, const std::vector<Point>& centers, double m) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  const auto c = static_cast<Eigen::Index>(centers.size());
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, c);
  const double power = 1.0 / (m - 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> d(static_cast<std::size_t>(c));
    Eigen::Index hit = -1;
    for (Eigen::Index j = 0; j < c; ++j) {
      d[static_cast<std::size_t>(j)] = dist2(pts[static_cast<std::size_t>(i)], centers[static_cast<std::size_t>(j)]);
      if (d[static_cast<std::size_t>(j)] == 0.0 && hit < 0) hit = j;
    }
    if (hit >= 0) {
      u(i, hit) = 1.0;
      continue;
    }
    // u_ij = 1 / sum_k (d_ij / d_ik)^(1/(m-1)) on squared distances.
    for (Eigen::Index j = 0; j < c; ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < c; ++k)
        s += std::pow(d[static_cast<std::size_t>(j)] / d[static_cast<std::size_t>(k)], power);
      u(i, j) = 1.0 / s;
    }
    u.row(i) /= u.row(i).sum();
  }
  return u;
}

std::vector<Point> update_centers(std::span<const Point> pts, const Eigen::MatrixXd& u, double m,
                                  const std::vector<Point>& previous) {
  std::vector<Point> centers = previous;
  const std::size_t dim = pts.front().size();
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Point num(dim, 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double w = std::pow(u(static_cast<Eigen::Index>(i), j), m);
      den += w;
      for (std::size_t k = 0; k < dim; ++k) num[k] += w * pts[i][k];
    }
    if (den > 0.0) {
      for (auto& x : num) x /= den;
      centers[static_cast<std::size_t>(j)] = num;
    }
  }
  return centers;
}

double fcm_loss(std::span<const Point> pts, const Eigen::MatrixXd& u, const std::vector<Point>& centers, double m) {
  double j = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t c = 0; c < centers.size(); ++c)
      j += std::pow(u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)), m) * dist2(pts[i], centers[c]);
  return j;
}

}  // namespace

FcmResult fcm_cluster(std::span<const Point> points, std::size_t clusters, double m, std::uint64_t seed, double tol,
                      int max_iter) {
  if (clusters == 0 || points.size() < clusters)
    throw std::invalid_argument(fmt::format("fuzzy c-means: {} points for {} clusters", points.size(), clusters));
  if (!(m > 1.0)) throw std::invalid_argument("fuzzy c-means: fuzziness must exceed 1");

  std::mt19937_64 rng(seed);
  FcmResult r;
  r.m = m;
  std::vector<Point> centers = kmeanspp(points, clusters, rng);
  Eigen::MatrixXd u;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    u = memberships(points, centers, m);
    centers = update_centers(points, u, m, centers);
    const double j = fcm_loss(points, u, centers, m);
    r.loss_trace.push_back(j);
    r.iterations = it + 1;
    if (std::abs(prev - j) <= tol) break;
    prev = j;
  }
  r.loss = r.loss_trace.back();

  // Relabel clusters by ascending first coordinate of the center.
  std::vector<std::size_t> order(clusters);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return centers[a] < centers[b]; });
  r.membership.resize(u.rows(), u.cols());
  for (std::size_t j = 0; j < clusters; ++j) {
    r.membership.col(static_cast<Eigen::Index>(j)) = u.col(static_cast<Eigen::Index>(order[j]));
    r.centers.push_back(centers[order[j]]);
  }
  return r;
}

GrpRanking grp_rank(std::span<const Point> points, std::span<const double> weights, double rho) {
  if (points.empty()) throw std::invalid_argument("grey relational projection of an empty group");
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  if (weights.size() != dim) throw std::invalid_argument("grey relational projection: one weight per objective");
  for (const double w : weights)
    if (!(w > 0.0)) throw std::invalid_argument("grey relational projection: weights must be positive");

  // Min-max scaling; a constant objective keeps a unit denominator.
  std::vector<Point> x(n, Point(dim));
  Point best(dim), worst(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    double lo = points[0][k], hi = points[0][k];
    for (const auto& p : points) {
      lo = std::min(lo, p[k]);
      hi = std::max(hi, p[k]);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t l = 0; l < n; ++l) x[l][k] = (points[l][k] - lo) / span;
    best[k] = 0.0;
    worst[k] = (hi - lo) / span;
  }

  auto coefficients = [&](const Point& ideal) {
    std::vector<Point> delta(n, Point(dim));
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (std::size_t l = 0; l < n; ++l)
      for (std::size_t k = 0; k < dim; ++k) {
        delta[l][k] = std::abs(x[l][k] - ideal[k]);
        dmin = std::min(dmin, delta[l][k]);
        dmax = std::max(dmax, delta[l][k]);
      }
    for (auto& row : delta)
      for (auto& v : row) v = dmax > 0.0 ? (dmin + rho * dmax) / (v + rho * dmax) : 1.0;
    return delta;
  };

  GrpRanking g;
  g.rho = rho;
  g.weights.assign(weights.begin(), weights.end());
  g.gamma_plus = coefficients(best);
  g.gamma_minus = coefficients(worst);
  double norm = 0.0;
  for (const double w : weights) norm += w * w;
  norm = std::sqrt(norm);
  auto project = [&](const Point& gamma) {
    double v = 0.0;
    for (std::size_t k = 0; k < dim; ++k) v += gamma[k] * weights[k] * weights[k] / norm;
    return v;
  };
  g.v0 = project(Point(dim, 1.0));
  for (std::size_t l = 0; l < n; ++l) {
    const double vp = project(g.gamma_plus[l]);
    const double vm = project(g.gamma_minus[l]);
    g.v_plus.push_back(vp);
    g.v_minus.push_back(vm);
    const double a = (g.v0 - vm) * (g.v0 - vm);
    const double b = (g.v0 - vp) * (g.v0 - vp);
    g.d.push_back(a + b > 0.0 ? a / (a + b) : 0.5);
  }
  return g;
}

Decision select_bcs(const Population& archive, std::size_t clusters, std::span<const double> weights,
                    std::uint64_t seed) {
  if (archive.empty()) throw std::invalid_argument("decision analysis of an empty archive");
  Decision out;
  if (archive.size() < clusters) {
    out.warning = fmt::format("archive has {} member(s), fewer than {} clusters; using one cluster", archive.size(),
                              clusters);
    clusters = 1;
  }
  const std::vector<double> equal(2, 0.5);
  if (weights.empty()) weights = equal;

  // Objectives scaled to [0, 1] over the whole archive.
  std::vector<Point> raw, pts;
  for (const auto& m : archive) raw.push_back(m.point());
  pts = raw;
  for (std::size_t k = 0; k < 2; ++k) {
    double lo = raw[0][k], hi = raw[0][k];
    for (const auto& p : raw) {
      lo = std::min(lo, p[k]);
      hi = std::max(hi, p[k]);
    }
    for (auto& p : pts) p[k] = hi > lo ? (p[k] - lo) / (hi - lo) : 0.0;
  }

  out.fcm = fcm_cluster(pts, clusters, 2.0, seed);
  out.cluster_of.resize(archive.size());
  for (std::size_t i = 0; i < archive.size(); ++i) {
    Eigen::Index j;
    out.fcm.membership.row(static_cast<Eigen::Index>(i)).maxCoeff(&j);
    out.cluster_of[i] = static_cast<std::size_t>(j);
  }

  out.d.assign(archive.size(), 0.0);
  for (std::size_t c = 0; c < clusters; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < archive.size(); ++i)
      if (out.cluster_of[i] == c) idx.push_back(i);
    if (idx.empty()) continue;
    std::vector<Point> group;
    for (const auto i : idx) group.push_back(raw[i]);
    const auto g = grp_rank(group, weights);
    std::size_t best = 0;
    for (std::size_t l = 0; l < idx.size(); ++l) {
      out.d[idx[l]] = g.d[l];
      const auto& a = archive[idx[l]];
      const auto& b = archive[idx[best]];
      const bool better = g.d[l] > g.d[best] ||
                          (g.d[l] == g.d[best] && (a.objectives.f1 < b.objectives.f1 ||
                                                   (a.objectives.f1 == b.objectives.f1 && a.id < b.id)));
      if (better) best = l;
    }
    CompromiseSolution pick;
    pick.cluster = c;
    pick.solution = archive[idx[best]];
    pick.d = g.d[best];
    for (Eigen::Index j = 0; j < out.fcm.membership.cols(); ++j)
      pick.membership.push_back(out.fcm.membership(static_cast<Eigen::Index>(idx[best]), j));
    out.picks.push_back(std::move(pick));
  }
  return out;
}

}  // namespace acdc
