#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace himor {

struct KMeansResult {
  std::vector<int> assignments;  // size N
  Eigen::MatrixXd centers;       // M x d
  double inertia = 0.0;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Deterministic for a fixed seed;
// empty clusters are re-seeded to the point farthest from its center. Throws
// ClusterCountExceedsPoints when M > N.
KMeansResult kmeans(const Eigen::MatrixXd& features, int M, std::uint64_t seed,
                    int max_iter = 100, double tol = 1e-6);

// Greedy farthest-point sampling of `count` row indices; the first pick is
// drawn with the seeded generator, ties break on the lowest index.
std::vector<int> farthest_point_sample(const Eigen::MatrixXd& points, int count,
                                       std::uint64_t seed);

}  // namespace himor
