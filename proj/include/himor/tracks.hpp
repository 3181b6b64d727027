#pragma once

#include <vector>

#include "himor/se3.hpp"

namespace himor {

// N observed 3D trajectories over T frames with per-frame visibility.
struct TrackSet {
  int frame_count = 0;
  std::vector<std::vector<Vec3d>> positions;  // [N][T]
  std::vector<std::vector<bool>> visibility;  // [N][T]

  int num_tracks() const { return static_cast<int>(positions.size()); }
  void check_shapes() const;

  // Axis-aligned bounding-box diagonal of all visible positions.
  double bbox_diagonal() const;
};

struct PinholeCamera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  std::vector<SE3d> world_from_camera;  // one per frame
};

// Back-project 2D pixel tracks with per-entry depth to world-space 3D tracks.
// Invisible entries copy the temporally nearest visible frame's position and
// stay invisible. A visible entry with nonpositive depth raises InvalidDepth.
TrackSet unproject_tracks(const std::vector<std::vector<Eigen::Vector2d>>& tracks2d,
                          const std::vector<std::vector<double>>& depth,
                          const std::vector<std::vector<bool>>& visibility,
                          const PinholeCamera& cam);

// Frame with the most visible tracks; ties resolve to the smallest index.
int select_canonical_frame(const TrackSet& tracks);

}  // namespace himor
