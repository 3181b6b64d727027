#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "himor/tree.hpp"

namespace himor {

// Maximum distance between two equal-length trajectories over time.
double curve_distance(const std::vector<Vec3d>& a, const std::vector<Vec3d>& b);

struct DensifyOptions {
  int points_per_node = 20;  // one new node per this many violation candidates
};

// Add first-level nodes where no nearby node trajectory explains a point's
// deformed trajectory within `threshold`. New nodes are farthest-point
// sampled from the violating points, parented under the root as siblings of
// the nearest first-level node, with that node's coefficients.
MotionTree densify_by_curve_distance(const MotionTree& tree,
                                     const std::vector<OrientedPoint>& points, int K,
                                     double threshold, std::uint64_t seed,
                                     const DensifyOptions& opts = {});

// Count of points whose minimum curve distance to their K nearest node
// trajectories exceeds `threshold` (the densification criterion).
int count_curve_distance_violations(const MotionTree& tree,
                                    const std::vector<OrientedPoint>& points, int K,
                                    double threshold);

// Split leaves whose accumulated coefficient-gradient norm exceeds
// add_thresh; prune leaves below prune_thresh whose removal leaves every
// assigned point with at least one bound node. `grad_stats` must cover every
// leaf.
MotionTree refine_by_gradient(const MotionTree& tree, const std::map<int, double>& grad_stats,
                              double add_thresh, double prune_thresh,
                              const std::vector<OrientedPoint>& points, int K);

}  // namespace himor
