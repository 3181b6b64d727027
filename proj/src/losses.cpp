#include "himor/losses.hpp"

#include <algorithm>

#include "himor/densify.hpp"

namespace himor {

std::vector<PointBinding> bind_tracks_to_leaves(const MotionTree& tree, const TrackSet& tracks,
                                                int K) {
  std::vector<PointBinding> out;
  out.reserve(static_cast<std::size_t>(tracks.num_tracks()));
  for (int i = 0; i < tracks.num_tracks(); ++i) {
    PointBinding b;
    b.track = i;
    b.position = tracks.positions[static_cast<std::size_t>(i)]
                                 [static_cast<std::size_t>(tree.canonical_frame)];
    b.leaf_ids = knn_leaves(tree, b.position, K);
    out.push_back(std::move(b));
  }
  return out;
}

RigidityGraph build_rigidity_graph(const MotionTree& tree, int knn) {
  RigidityGraph g;
  ModelParams<double> params = extract_params(tree);
  MotionEvaluator<double> eval(tree, params);

  const int levels = tree.max_level();
  for (int level = 1; level <= levels; ++level) {
    std::vector<int> ids;
    for (const auto& n : tree.nodes)
      if (n.level == level) ids.push_back(n.id);
    if (ids.size() < 2) continue;

    std::vector<std::vector<Vec3d>> traj(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const int idx = tree.node_index(ids[k]);
      traj[k].reserve(static_cast<std::size_t>(tree.frame_count));
      for (int t = 0; t < tree.frame_count; ++t)
        traj[k].push_back(apply(eval.global(idx, t), tree.nodes[static_cast<std::size_t>(idx)].position));
    }

    const std::size_t k_eff = std::min<std::size_t>(static_cast<std::size_t>(std::max(knn, 1)),
                                                    ids.size() - 1);
    for (std::size_t a = 0; a < ids.size(); ++a) {
      std::vector<std::pair<double, int>> by_dist;
      for (std::size_t b = 0; b < ids.size(); ++b) {
        if (a == b) continue;
        by_dist.emplace_back(curve_distance(traj[a], traj[b]), ids[b]);
      }
      std::sort(by_dist.begin(), by_dist.end());
      for (std::size_t k = 0; k < k_eff; ++k)
        g.edges.push_back({ids[a], by_dist[k].second, level});
    }
  }
  return g;
}

FrameBatch make_frame_batch(std::vector<int> frames, int max_delta) {
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());

  FrameBatch batch;
  batch.frames = frames;
  for (std::size_t a = 0; a < frames.size(); ++a)
    for (std::size_t b = a + 1; b < frames.size(); ++b) {
      const int delta = frames[b] - frames[a];
      if (delta >= 1 && delta <= max_delta) batch.rigidity_pairs.emplace_back(frames[a], frames[b]);
    }
  for (std::size_t a = 0; a + 2 < frames.size(); ++a)
    if (frames[a + 1] - frames[a] == 1 && frames[a + 2] - frames[a + 1] == 1)
      batch.accel_triples.push_back({frames[a], frames[a + 1], frames[a + 2]});
  return batch;
}

}  // namespace himor
