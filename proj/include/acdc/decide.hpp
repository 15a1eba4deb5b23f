#pragma once

// Picks best compromise solutions from a Pareto archive: fuzzy C-means on
// normalized objectives, then grey relational projection inside each cluster.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acdc/evo.hpp"

namespace acdc {

struct FcmResult {
  Eigen::MatrixXd membership;  // points x clusters, rows sum to 1
  std::vector<Point> centers;  // sorted by the first coordinate
  double m = 2.0;
  double loss = 0.0;
  std::vector<double> loss_trace;  // after each full update
  int iterations = 0;
};

/// Alternating membership / center updates from k-means++ seeds until the loss
/// changes by at most `tol` or `max_iter` is reached. A point sitting on a
/// center belongs to it alone. Throws std::invalid_argument when there are
/// fewer points than clusters or m <= 1.
FcmResult fcm_cluster(std::span<const Point> points, std::size_t clusters, double m, std::uint64_t seed,
                      double tol = 1e-9, int max_iter = 300);

struct GrpRanking {
  std::vector<double> d;  // priority membership per solution, in [0, 1]
  std::vector<double> v_plus;
  std::vector<double> v_minus;
  double v0 = 0.0;
  std::vector<Point> gamma_plus;
  std::vector<Point> gamma_minus;
  std::vector<double> weights;
  double rho = 0.5;
};

/// Grey relational projection of minimized objective vectors against the best
/// and worst componentwise values of the group, after min-max scaling.
GrpRanking grp_rank(std::span<const Point> points, std::span<const double> weights, double rho = 0.5);

struct CompromiseSolution {
  std::size_t cluster = 0;
  Individual solution;
  double d = 0.0;
  std::vector<double> membership;  // fuzzy membership of the solution in each cluster
};

struct Decision {
  std::vector<CompromiseSolution> picks;  // one per non-empty cluster, by cluster
  FcmResult fcm;
  std::vector<std::size_t> cluster_of;  // hard assignment per archive member (archive order)
  std::vector<double> d;                // priority membership within its cluster
  std::string warning;
};

/// Cluster 0 leans to the lowest first objective. Ties on d go to the lower
/// first objective, then the lower id.
Decision select_bcs(const Population& archive, std::size_t clusters = 2, std::span<const double> weights = {},
                    std::uint64_t seed = 1);

}  // namespace acdc
