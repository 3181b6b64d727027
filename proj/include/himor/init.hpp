#pragma once

#include <cstdint>
#include <vector>

#include "himor/tracks.hpp"
#include "himor/tree.hpp"

namespace himor {

struct ClusterBases {
  std::vector<MotionBasis> bases;       // surviving clusters, in cluster order
  std::vector<Vec3d> canonical_centers; // member centroid at the canonical frame
  int dropped = 0;                      // clusters lost to DegenerateGeometry
};

// Per cluster and frame, the Procrustes (Kabsch) transform from member
// canonical positions to their frame-t positions, using tracks visible at
// both frames. The canonical frame is identity by construction; frames with
// fewer than 3 co-visible members copy the nearest solved frame. Assignment
// -1 excludes a track from every cluster.
ClusterBases bases_from_clusters(const TrackSet& tracks, const std::vector<int>& assignments,
                                 int num_clusters, int canonical);

struct InitOptions {
  double min_visible_fraction = 0.9;  // track eligibility for K-Means features
  double idw_epsilon = 1e-8;
};

// Build the one-level tree: canonical frame selection, K-Means over
// concatenated track positions, Procrustes bases, farthest-point-sampled node
// positions, inverse-distance-weighted coefficients, 3-NN median radii.
MotionTree init_first_level(const TrackSet& tracks, int num_bases, int node_count,
                            std::uint64_t seed, const InitOptions& opts = {});

struct SpawnOptions {
  double radius_multiplier = 3.0;  // membership radius, in units of node radius
  int skin_knn = 4;
};

// Grow one level: each leaf clusters the relative motions of nearby points
// into child bases and spawns subsampled children. Leaves with fewer than
// child_basis_count member points stay leaves.
MotionTree spawn_children(const MotionTree& tree, const std::vector<OrientedPoint>& points,
                          int per_node_children, int child_basis_count, std::uint64_t seed,
                          const SpawnOptions& opts = {});

// Median distance from `position` to the 3 nearest of `others` (fallback when
// fewer than 3 are available). Used for node radii.
double median_knn_distance(const Vec3d& position, const std::vector<Vec3d>& others,
                           double fallback = 1.0);

}  // namespace himor
