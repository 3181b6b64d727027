#include "himor/tracks.hpp"

#include <algorithm>
#include <limits>

#include "himor/errors.hpp"

namespace himor {

void TrackSet::check_shapes() const {
  if (positions.size() != visibility.size())
    throw ShapeMismatch("track positions and visibility differ in track count");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (static_cast<int>(positions[i].size()) != frame_count ||
        static_cast<int>(visibility[i].size()) != frame_count)
      throw ShapeMismatch("track " + std::to_string(i) + " has wrong frame count");
    if (std::none_of(visibility[i].begin(), visibility[i].end(), [](bool v) { return v; }))
      throw ShapeMismatch("track " + std::to_string(i) + " is never visible");
  }
}

double TrackSet::bbox_diagonal() const {
  Vec3d lo = Vec3d::Constant(std::numeric_limits<double>::max());
  Vec3d hi = Vec3d::Constant(std::numeric_limits<double>::lowest());
  bool any = false;
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (int t = 0; t < frame_count; ++t)
      if (visibility[i][static_cast<std::size_t>(t)]) {
        lo = lo.cwiseMin(positions[i][static_cast<std::size_t>(t)]);
        hi = hi.cwiseMax(positions[i][static_cast<std::size_t>(t)]);
        any = true;
      }
  return any ? (hi - lo).norm() : 0.0;
}

TrackSet unproject_tracks(const std::vector<std::vector<Eigen::Vector2d>>& tracks2d,
                          const std::vector<std::vector<double>>& depth,
                          const std::vector<std::vector<bool>>& visibility,
                          const PinholeCamera& cam) {
  if (cam.fx <= 0.0 || cam.fy <= 0.0) throw Error("camera focal lengths must be positive");
  const std::size_t n = tracks2d.size();
  if (depth.size() != n || visibility.size() != n)
    throw ShapeMismatch("unproject_tracks: input arrays differ in track count");
  const int T = static_cast<int>(cam.world_from_camera.size());

  TrackSet out;
  out.frame_count = T;
  out.positions.assign(n, std::vector<Vec3d>(static_cast<std::size_t>(T), Vec3d::Zero()));
  out.visibility.assign(n, std::vector<bool>(static_cast<std::size_t>(T), false));

  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<int>(tracks2d[i].size()) != T || static_cast<int>(depth[i].size()) != T ||
        static_cast<int>(visibility[i].size()) != T)
      throw ShapeMismatch("unproject_tracks: track " + std::to_string(i) + " has wrong length");
    for (int t = 0; t < T; ++t) {
      auto ts = static_cast<std::size_t>(t);
      if (!visibility[i][ts]) continue;
      const double d = depth[i][ts];
      if (d <= 0.0)
        throw InvalidDepth("nonpositive depth for visible track " + std::to_string(i) +
                           " at frame " + std::to_string(t));
      Vec3d pc((tracks2d[i][ts].x() - cam.cx) / cam.fx * d,
               (tracks2d[i][ts].y() - cam.cy) / cam.fy * d, d);
      out.positions[i][ts] = apply(cam.world_from_camera[ts], pc);
      out.visibility[i][ts] = true;
    }
    // Fill invisible entries from the temporally nearest visible frame
    // (earlier frame wins ties); visibility stays false.
    for (int t = 0; t < T; ++t) {
      auto ts = static_cast<std::size_t>(t);
      if (out.visibility[i][ts]) continue;
      int best = -1;
      for (int s = 0; s < T; ++s)
        if (out.visibility[i][static_cast<std::size_t>(s)] &&
            (best < 0 || std::abs(s - t) < std::abs(best - t)))
          best = s;
      if (best < 0)
        throw ShapeMismatch("unproject_tracks: track " + std::to_string(i) + " is never visible");
      out.positions[i][ts] = out.positions[i][static_cast<std::size_t>(best)];
    }
  }
  return out;
}

int select_canonical_frame(const TrackSet& tracks) {
  if (tracks.num_tracks() == 0 || tracks.frame_count == 0)
    throw Error("select_canonical_frame: empty track set");
  int best = 0, best_count = -1;
  for (int t = 0; t < tracks.frame_count; ++t) {
    int count = 0;
    for (const auto& vis : tracks.visibility)
      if (vis[static_cast<std::size_t>(t)]) ++count;
    if (count > best_count) {
      best_count = count;
      best = t;
    }
  }
  return best;
}

}  // namespace himor
