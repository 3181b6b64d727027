#pragma once

#include <array>
#include <utility>
#include <vector>

#include "himor/eval.hpp"
#include "himor/tracks.hpp"

// Loss terms, templated on the scalar so the gradient path reuses the exact
// forward evaluation. Reductions run in a fixed ascending order.

namespace himor {

struct LossWeights {
  double track = 2.0;
  double track_depth = 0.1;  // kept for config compatibility; unused with 3D supervision
  double rigid_level1_pre = 0.5;
  double rigid_level1_post = 2.5;  // once second-level nodes are active
  double rigid_deeper = 0.5;
  double accel_bases = 0.1;
  double accel_tracks = 2.0;
  double radius_reg = 0.0001;
  bool second_level_active = false;

  double rigid_weight(int level) const {
    if (level <= 0) return 0.0;
    if (level == 1) return second_level_active ? rigid_level1_post : rigid_level1_pre;
    return rigid_deeper;
  }
};

// A supervised point: one per track, living at the track's canonical-frame
// position, skinned to a frozen set of nearest leaves.
struct PointBinding {
  int track = -1;
  Vec3d position = Vec3d::Zero();
  std::vector<int> leaf_ids;
};

std::vector<PointBinding> bind_tracks_to_leaves(const MotionTree& tree, const TrackSet& tracks,
                                                int K);

// Same-level node pairs (i, j) with j among i's curve-distance KNN, frozen
// for a whole fitting stage.
struct RigidityGraph {
  struct Edge {
    int i, j, level;
  };
  std::vector<Edge> edges;
};

RigidityGraph build_rigidity_graph(const MotionTree& tree, int knn);

struct FrameBatch {
  std::vector<int> frames;                        // ascending
  std::vector<std::pair<int, int>> rigidity_pairs;  // (t, t+delta), delta <= max_delta
  std::vector<std::array<int, 3>> accel_triples;    // equally spaced, step 1
};

FrameBatch make_frame_batch(std::vector<int> frames, int max_delta = 4);

template <class S>
struct LossTerms {
  S track{0};
  S rigidity{0};  // already carries the per-level weights
  S accel_bases{0};
  S accel_tracks{0};
  S radius{0};
  S total{0};
};

namespace detail {
template <class S>
S safe_norm3(const Vec3<S>& v) {
  using std::sqrt;
  return sqrt(v.dot(v) + S(1e-30));
}

// Value-preserving Charbonnier magnitudes, sqrt(x^2 + eps^2) - eps: exact to
// within eps, but the gradient stays defined (and ~x/eps, i.e. negligible)
// at exactly rigid configurations where |x| is pure floating-point residue.
inline constexpr double kRigidEps = 1e-9;

template <class S>
S smooth_abs(const S& x) {
  using std::sqrt;
  return sqrt(x * x + S(kRigidEps * kRigidEps)) - S(kRigidEps);
}

template <class S>
S smooth_norm3(const Vec3<S>& v) {
  using std::sqrt;
  return sqrt(v.dot(v) + S(kRigidEps * kRigidEps)) - S(kRigidEps);
}
}  // namespace detail

// Mean squared 3D error between deformed point positions and observations
// over visible (track, frame) pairs in the batch.
template <class S>
S loss_track(const MotionTree& tree, const ModelParams<S>& params, MotionEvaluator<S>& eval,
             const TrackSet& tracks, const std::vector<PointBinding>& bindings,
             const std::vector<int>& frames) {
  S sum{0};
  long count = 0;
  for (const auto& b : bindings) {
    if (b.track < 0 || b.track >= tracks.num_tracks())
      throw InvalidBinding("loss_track: binding references missing track");
    Vec3<S> p;
    p << S(b.position[0]), S(b.position[1]), S(b.position[2]);
    std::vector<S> w = gaussian_skin_weights(tree, params, p, b.leaf_ids);
    for (int t : frames) {
      if (!tracks.visibility[static_cast<std::size_t>(b.track)][static_cast<std::size_t>(t)])
        continue;
      SE3<S> T = skinned_motion(tree, eval, b.leaf_ids, w, t);
      const Vec3d& obs = tracks.positions[static_cast<std::size_t>(b.track)][static_cast<std::size_t>(t)];
      Vec3<S> err = apply(T, p);
      err[0] -= obs[0];
      err[1] -= obs[1];
      err[2] -= obs[2];
      sum += err.dot(err);
      ++count;
    }
  }
  if (count == 0) return S{0};
  return sum / S(static_cast<double>(count));
}

// Appendix rigidity penalty: per same-level KNN pair, the change of pairwise
// node distance plus the change of the relative position in the neighbor's
// frame, across each (t, t+delta) pair; level sums carry the per-level
// weights, then the mean over frame pairs is taken.
template <class S>
S loss_rigidity(const MotionTree& tree, const ModelParams<S>& params, MotionEvaluator<S>& eval,
                const RigidityGraph& graph, const std::vector<std::pair<int, int>>& frame_pairs,
                const LossWeights& weights) {
  if (frame_pairs.empty() || graph.edges.empty()) return S{0};

  // Node world positions and inverse globals, once per (node, frame).
  std::vector<int> frames;
  std::vector<int> slot(static_cast<std::size_t>(tree.frame_count), -1);
  for (const auto& [t0, t1] : frame_pairs)
    for (int t : {t0, t1})
      if (slot[static_cast<std::size_t>(t)] < 0) {
        slot[static_cast<std::size_t>(t)] = static_cast<int>(frames.size());
        frames.push_back(t);
      }
  const std::size_t n = tree.nodes.size();
  std::vector<Vec3<S>> world(frames.size() * n);
  std::vector<SE3<S>> inv_global(frames.size() * n);
  std::vector<char> used(n, 0);
  for (const auto& e : graph.edges) {
    if (weights.rigid_weight(e.level) == 0.0) continue;
    used[static_cast<std::size_t>(tree.node_index(e.i))] = 1;
    used[static_cast<std::size_t>(tree.node_index(e.j))] = 1;
  }
  for (std::size_t f = 0; f < frames.size(); ++f)
    for (std::size_t i = 0; i < n; ++i) {
      if (!used[i]) continue;
      const SE3<S>& g = eval.global(static_cast<int>(i), frames[f]);
      world[f * n + i] = apply(g, params.nodes[i].position);
      inv_global[f * n + i] = inverse(g);
    }

  // Per edge and distinct frame: the pair distance and the relative position
  // in the neighbor's frame, shared by every frame pair touching the frame.
  const std::size_t ne = graph.edges.size();
  std::vector<S> dist(frames.size() * ne, S{0});
  std::vector<Vec3<S>> rel(frames.size() * ne);
  for (std::size_t k = 0; k < ne; ++k) {
    const auto& e = graph.edges[k];
    if (weights.rigid_weight(e.level) == 0.0) continue;
    const auto ii = static_cast<std::size_t>(tree.node_index(e.i));
    const auto ji = static_cast<std::size_t>(tree.node_index(e.j));
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const Vec3<S>& xi = world[f * n + ii];
      dist[f * ne + k] = detail::safe_norm3<S>(xi - world[f * n + ji]);
      rel[f * ne + k] = apply(inv_global[f * n + ji], xi);
    }
  }

  S sum{0};
  for (const auto& [t0, t1] : frame_pairs) {
    const std::size_t f0 = static_cast<std::size_t>(slot[static_cast<std::size_t>(t0)]);
    const std::size_t f1 = static_cast<std::size_t>(slot[static_cast<std::size_t>(t1)]);
    for (std::size_t k = 0; k < ne; ++k) {
      const double w = weights.rigid_weight(graph.edges[k].level);
      if (w == 0.0) continue;
      S iso = detail::smooth_abs<S>(dist[f0 * ne + k] - dist[f1 * ne + k]);
      sum += S(w) * (iso + detail::smooth_norm3<S>(rel[f0 * ne + k] - rel[f1 * ne + k]));
    }
  }
  return sum / S(static_cast<double>(frame_pairs.size()));
}

// Mean squared second difference of [translation, hemisphere-aligned
// quaternion] over every basis and interior frame.
template <class S>
S reg_basis_acceleration(const MotionTree& tree, const ModelParams<S>& params) {
  const int T = tree.frame_count;
  if (T < 3) return S{0};
  S sum{0};
  long count = 0;
  for (const auto& set : params.bases) {
    for (const auto& basis : set) {
      // Sign chain aligning each frame's quaternion to its predecessor.
      std::vector<double> sign(basis.size(), 1.0);
      for (std::size_t t = 1; t < basis.size(); ++t) {
        double d = ad::value(basis[t].q.dot(basis[t - 1].q));
        sign[t] = d < 0.0 ? -sign[t - 1] : sign[t - 1];
      }
      for (int t = 1; t + 1 < T; ++t) {
        auto ts = static_cast<std::size_t>(t);
        Vec3<S> dt = basis[ts + 1].t - S(2) * basis[ts].t + basis[ts - 1].t;
        Vec4<S> dq = S(sign[ts + 1]) * basis[ts + 1].q.coeffs() -
                     S(2.0 * sign[ts]) * basis[ts].q.coeffs() +
                     S(sign[ts - 1]) * basis[ts - 1].q.coeffs();
        sum += dt.dot(dt) + dq.dot(dq);
        ++count;
      }
    }
  }
  if (count == 0) return S{0};
  return sum / S(static_cast<double>(count));
}

// Same second-difference penalty on deformed point trajectories.
template <class S>
S reg_track_acceleration(const MotionTree& tree, const ModelParams<S>& params,
                         MotionEvaluator<S>& eval, const std::vector<PointBinding>& bindings,
                         const std::vector<std::array<int, 3>>& triples) {
  if (triples.empty() || bindings.empty()) return S{0};
  S sum{0};
  long count = 0;
  for (const auto& b : bindings) {
    Vec3<S> p;
    p << S(b.position[0]), S(b.position[1]), S(b.position[2]);
    std::vector<S> w = gaussian_skin_weights(tree, params, p, b.leaf_ids);
    for (const auto& tr : triples) {
      Vec3<S> a = apply(skinned_motion(tree, eval, b.leaf_ids, w, tr[0]), p);
      Vec3<S> m = apply(skinned_motion(tree, eval, b.leaf_ids, w, tr[1]), p);
      Vec3<S> c = apply(skinned_motion(tree, eval, b.leaf_ids, w, tr[2]), p);
      Vec3<S> dd = a - S(2) * m + c;
      sum += dd.dot(dd);
      ++count;
    }
  }
  return sum / S(static_cast<double>(count));
}

// Hinge keeping each node's radius at or below the average distance to its
// three nearest same-level nodes; levels with fewer than 4 nodes contribute 0.
template <class S>
S reg_radius(const MotionTree& tree, const ModelParams<S>& params) {
  using std::sqrt;
  S sum{0};
  long count = 0;
  const int levels = tree.max_level();
  for (int level = 0; level <= levels; ++level) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i)
      if (tree.nodes[i].level == level) idx.push_back(static_cast<int>(i));
    if (idx.size() < 4) continue;
    for (int i : idx) {
      // Three nearest by current value, summed in that order.
      std::vector<std::pair<double, int>> by_dist;
      for (int j : idx) {
        if (j == i) continue;
        Vec3<S> d = params.nodes[static_cast<std::size_t>(i)].position -
                    params.nodes[static_cast<std::size_t>(j)].position;
        by_dist.emplace_back(ad::value(d.dot(d)), j);
      }
      std::sort(by_dist.begin(), by_dist.end());
      S avg{0};
      for (int k = 0; k < 3; ++k) {
        Vec3<S> d = params.nodes[static_cast<std::size_t>(i)].position -
                    params.nodes[static_cast<std::size_t>(by_dist[static_cast<std::size_t>(k)].second)]
                        .position;
        avg += detail::safe_norm3<S>(d);
      }
      avg = avg / S(3);
      S excess = params.nodes[static_cast<std::size_t>(i)].radius - avg;
      if (ad::value(excess) > 0.0) sum += excess * excess;
      ++count;
    }
  }
  if (count == 0) return S{0};
  return sum / S(static_cast<double>(count));
}

namespace detail {

// Leaf global motions as dual quaternions, computed once per (leaf, frame)
// and shared across every binding that skins to the leaf.
template <class S>
class LeafDqCache {
 public:
  LeafDqCache(const MotionTree& tree, MotionEvaluator<S>& eval)
      : tree_(tree), eval_(eval), slot_(static_cast<std::size_t>(tree.frame_count), -1) {}

  const DualQuat<S>& get(int node_idx, int t) {
    int s = slot_[static_cast<std::size_t>(t)];
    if (s < 0) {
      s = static_cast<int>(frames_.size());
      slot_[static_cast<std::size_t>(t)] = s;
      frames_.emplace_back(tree_.nodes.size());
    }
    auto& cell = frames_[static_cast<std::size_t>(s)][static_cast<std::size_t>(node_idx)];
    if (!cell.second) {
      cell.first = to_dual_quat(eval_.global(node_idx, t));
      cell.second = true;
    }
    return cell.first;
  }

 private:
  const MotionTree& tree_;
  MotionEvaluator<S>& eval_;
  std::vector<int> slot_;
  std::vector<std::vector<std::pair<DualQuat<S>, bool>>> frames_;
};

}  // namespace detail

// loss_track and reg_track_acceleration in one pass: skin weights, leaf dual
// quaternions, and deformed positions are computed once per (binding, frame)
// and reused by both terms. Summation order matches the standalone terms.
template <class S>
std::pair<S, S> track_and_accel_losses(const MotionTree& tree, const ModelParams<S>& params,
                                       MotionEvaluator<S>& eval, const TrackSet& tracks,
                                       const std::vector<PointBinding>& bindings,
                                       const FrameBatch& batch) {
  S track_sum{0}, accel_sum{0};
  long track_count = 0, accel_count = 0;
  detail::LeafDqCache<S> leaf_dqs(tree, eval);
  std::vector<int> slot(static_cast<std::size_t>(tree.frame_count), -1);
  for (std::size_t k = 0; k < batch.frames.size(); ++k)
    slot[static_cast<std::size_t>(batch.frames[k])] = static_cast<int>(k);
  std::vector<DualQuat<S>> dqs;
  std::vector<Vec3<S>> deformed(batch.frames.size());
  for (const auto& b : bindings) {
    if (b.track < 0 || b.track >= tracks.num_tracks())
      throw InvalidBinding("loss_track: binding references missing track");
    Vec3<S> p;
    p << S(b.position[0]), S(b.position[1]), S(b.position[2]);
    std::vector<S> w = gaussian_skin_weights(tree, params, p, b.leaf_ids);
    for (std::size_t k = 0; k < batch.frames.size(); ++k) {
      const int t = batch.frames[k];
      dqs.clear();
      for (int id : b.leaf_ids) dqs.push_back(leaf_dqs.get(tree.node_index(id), t));
      deformed[k] = apply(to_se3(dq_blend(w, dqs)), p);
      if (!tracks.visibility[static_cast<std::size_t>(b.track)][static_cast<std::size_t>(t)])
        continue;
      const Vec3d& obs =
          tracks.positions[static_cast<std::size_t>(b.track)][static_cast<std::size_t>(t)];
      Vec3<S> err = deformed[k];
      err[0] -= obs[0];
      err[1] -= obs[1];
      err[2] -= obs[2];
      track_sum += err.dot(err);
      ++track_count;
    }
    for (const auto& tr : batch.accel_triples) {
      const Vec3<S>& a = deformed[static_cast<std::size_t>(slot[static_cast<std::size_t>(tr[0])])];
      const Vec3<S>& m = deformed[static_cast<std::size_t>(slot[static_cast<std::size_t>(tr[1])])];
      const Vec3<S>& c = deformed[static_cast<std::size_t>(slot[static_cast<std::size_t>(tr[2])])];
      Vec3<S> dd = a - S(2) * m + c;
      accel_sum += dd.dot(dd);
      ++accel_count;
    }
  }
  return {track_count == 0 ? S{0} : track_sum / S(static_cast<double>(track_count)),
          accel_count == 0 ? S{0} : accel_sum / S(static_cast<double>(accel_count))};
}

template <class S>
LossTerms<S> total_loss(const MotionTree& tree, const ModelParams<S>& params,
                        const TrackSet& tracks, const std::vector<PointBinding>& bindings,
                        const RigidityGraph& graph, const LossWeights& weights,
                        const FrameBatch& batch) {
  MotionEvaluator<S> eval(tree, params);
  LossTerms<S> terms;
  auto [track, accel_tracks] =
      track_and_accel_losses(tree, params, eval, tracks, bindings, batch);
  terms.track = track;
  terms.rigidity = loss_rigidity(tree, params, eval, graph, batch.rigidity_pairs, weights);
  terms.accel_bases = reg_basis_acceleration(tree, params);
  terms.accel_tracks = accel_tracks;
  terms.radius = reg_radius(tree, params);
  terms.total = S(weights.track) * terms.track + terms.rigidity +
                S(weights.accel_bases) * terms.accel_bases +
                S(weights.accel_tracks) * terms.accel_tracks +
                S(weights.radius_reg) * terms.radius;
  return terms;
}

}  // namespace himor
