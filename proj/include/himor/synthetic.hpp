#pragma once

#include <cstdint>
#include <vector>

#include "himor/tracks.hpp"

namespace himor {

// One rigid link of a kinematic tree. The joint rotates about `axis` through
// `pivot` (both in the parent frame) by an angle profile given as uniformly
// spaced Catmull-Rom keys over [0, T-1]; `translation_keys` add a translation
// profile the same way. Points are sampled on the surface of an axis-aligned
// box in the link's local frame.
struct LinkSpec {
  int parent = -1;  // -1 for the root
  Vec3d axis = Vec3d::UnitZ();
  Vec3d pivot = Vec3d::Zero();
  std::vector<double> angle_keys;        // empty -> constant 0
  std::vector<Vec3d> translation_keys;   // empty -> constant 0
  Vec3d box_center = Vec3d::Zero();
  Vec3d box_size = Vec3d::Ones();
  int points = 0;
};

struct SceneSpec {
  int frames = 0;
  std::vector<LinkSpec> links;  // parents precede children

  void check() const;  // throws SpecError
};

struct SyntheticScene {
  TrackSet tracks;                      // all points, fully visible
  std::vector<int> labels;              // link index per point
  std::vector<std::vector<Vec3d>> coarse;  // with every non-root joint zeroed
};

// Exact forward-kinematics trajectories; deterministic per (spec, seed).
SyntheticScene gen_synthetic(const SceneSpec& spec, std::uint64_t seed);

// Uniformly spaced clamped Catmull-Rom interpolation of `keys` over
// [0, T-1], evaluated at frame t. One key means a constant profile.
double spline_at(const std::vector<double>& keys, int t, int T);

// The link's joint transform in its parent's frame at frame t.
SE3d link_joint_transform(const LinkSpec& link, int t, int T);

}  // namespace himor
