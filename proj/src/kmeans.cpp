#include "himor/kmeans.hpp"

#include <limits>

#include "himor/errors.hpp"
#include "himor/rng.hpp"

namespace himor {

namespace {

int nearest_center(const Eigen::MatrixXd& centers, const Eigen::RowVectorXd& x, double* dist2) {
  int best = 0;
  double bd = std::numeric_limits<double>::max();
  for (int m = 0; m < centers.rows(); ++m) {
    double d = (centers.row(m) - x).squaredNorm();
    if (d < bd) {
      bd = d;
      best = m;
    }
  }
  if (dist2) *dist2 = bd;
  return best;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& features, int M, std::uint64_t seed, int max_iter,
                    double tol) {
  const int n = static_cast<int>(features.rows());
  if (n < 1 || M < 1) throw Error("kmeans: N and M must be >= 1");
  if (M > n) throw ClusterCountExceedsPoints("kmeans: M exceeds point count");

  Rng rng(seed);
  Eigen::MatrixXd centers(M, features.cols());

  // k-means++ seeding.
  centers.row(0) = features.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::max());
  for (int m = 1; m < M; ++m) {
    for (int i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (features.row(i) - centers.row(m - 1)).squaredNorm());
    double total = d2.sum();
    int pick = 0;
    if (total <= 0.0) {
      pick = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
    } else {
      double r = uniform_real(rng) * total;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
        pick = i;
      }
    }
    centers.row(m) = features.row(pick);
  }

  KMeansResult res;
  res.assignments.assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    for (int i = 0; i < n; ++i)
      res.assignments[static_cast<std::size_t>(i)] = nearest_center(centers, features.row(i), nullptr);

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(M, features.cols());
    std::vector<int> counts(static_cast<std::size_t>(M), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(res.assignments[static_cast<std::size_t>(i)]) += features.row(i);
      ++counts[static_cast<std::size_t>(res.assignments[static_cast<std::size_t>(i)])];
    }

    Eigen::MatrixXd next = centers;
    for (int m = 0; m < M; ++m) {
      if (counts[static_cast<std::size_t>(m)] > 0) {
        next.row(m) = sums.row(m) / counts[static_cast<std::size_t>(m)];
      } else {
        // Re-seed to the point farthest from its current center.
        int far_i = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          double d = (features.row(i) -
                      centers.row(res.assignments[static_cast<std::size_t>(i)]))
                         .squaredNorm();
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        next.row(m) = features.row(far_i);
        res.assignments[static_cast<std::size_t>(far_i)] = m;
      }
    }

    double shift = (next - centers).rowwise().norm().maxCoeff();
    centers = next;
    if (shift < tol) break;
  }

  // Final assignment against the converged centers.
  res.inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    double d;
    res.assignments[static_cast<std::size_t>(i)] = nearest_center(centers, features.row(i), &d);
    res.inertia += d;
  }
  res.centers = centers;
  return res;
}

std::vector<int> farthest_point_sample(const Eigen::MatrixXd& points, int count,
                                       std::uint64_t seed) {
  const int n = static_cast<int>(points.rows());
  if (n == 0 || count < 1) return {};
  count = std::min(count, n);

  Rng rng(seed);
  std::vector<int> picked;
  picked.push_back(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n))));
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::max());
  while (static_cast<int>(picked.size()) < count) {
    for (int i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (points.row(i) - points.row(picked.back())).squaredNorm());
    int far_i = 0;
    double far_d = -1.0;
    for (int i = 0; i < n; ++i)
      if (d2[i] > far_d) {
        far_d = d2[i];
        far_i = i;
      }
    picked.push_back(far_i);
  }
  return picked;
}

}  // namespace himor
