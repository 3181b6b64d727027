#pragma once

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "himor/tree.hpp"

// Motion evaluation templated on the scalar type. The MotionTree carries
// topology and double-precision storage; ModelParams<S> mirrors just the
// optimizable values so the same evaluation code can run on ad::Var.

namespace himor {

template <class S>
struct PoseParam {
  Quat<S> q;
  Vec3<S> t = Vec3<S>::Zero();
};

template <class S>
struct NodeParam {
  Vec3<S> position = Vec3<S>::Zero();
  S radius{1};
  std::vector<S> coefficients;
};

template <class S>
struct ModelParams {
  std::vector<NodeParam<S>> nodes;  // aligned with tree.nodes
  // bases[set][m][t], aligned with tree.basis_sets
  std::vector<std::vector<std::vector<PoseParam<S>>>> bases;
};

inline ModelParams<double> extract_params(const MotionTree& tree) {
  ModelParams<double> p;
  p.nodes.reserve(tree.nodes.size());
  for (const auto& n : tree.nodes) p.nodes.push_back({n.position, n.radius, n.coefficients});
  p.bases.reserve(tree.basis_sets.size());
  for (const auto& bs : tree.basis_sets) {
    std::vector<std::vector<PoseParam<double>>> set;
    for (const auto& basis : bs.bases) {
      std::vector<PoseParam<double>> seq;
      seq.reserve(basis.transforms.size());
      for (const auto& T : basis.transforms) seq.push_back({T.rotation, T.translation});
      set.push_back(std::move(seq));
    }
    p.bases.push_back(std::move(set));
  }
  return p;
}

inline void write_back_params(const ModelParams<double>& p, MotionTree& tree) {
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    tree.nodes[i].position = p.nodes[i].position;
    tree.nodes[i].radius = p.nodes[i].radius;
    tree.nodes[i].coefficients = p.nodes[i].coefficients;
  }
  for (std::size_t s = 0; s < tree.basis_sets.size(); ++s)
    for (std::size_t m = 0; m < tree.basis_sets[s].bases.size(); ++m)
      for (std::size_t t = 0; t < tree.basis_sets[s].bases[m].transforms.size(); ++t)
        tree.basis_sets[s].bases[m].transforms[t] = {p.bases[s][m][t].q.normalized(),
                                                     p.bases[s][m][t].t};
}

// Dual quaternion of a possibly unnormalized pose parameter. A non-unit
// quaternion yields a uniformly scaled dual quaternion encoding the same
// rigid transform; the blend normalization absorbs the scale.
template <class S>
DualQuat<S> pose_to_dq(const PoseParam<S>& p) {
  Quat<S> t{S(0), p.t[0], p.t[1], p.t[2]};
  Quat<S> d = t * p.q;
  return {p.q, {d.w / S(2), d.x / S(2), d.y / S(2), d.z / S(2)}};
}

// Local motion of tree.nodes[node_idx] at frame t: the dual-quaternion blend
// of its parent's bases with the node's coefficients. If `active_levels` is
// given and the node's level is not in it, the blend is evaluated at the
// canonical frame instead (level freezing).
template <class S>
SE3<S> eval_local_motion(const MotionTree& tree, const ModelParams<S>& params, int node_idx,
                         int t, const std::set<int>* active_levels = nullptr) {
  const MotionNode& n = tree.nodes[static_cast<std::size_t>(node_idx)];
  if (n.parent < 0) return SE3<S>::identity();
  int eff_t = t;
  if (active_levels && !active_levels->count(n.level)) eff_t = tree.canonical_frame;
  int set_idx = tree.basis_set_index(n.parent);
  const auto& set = params.bases[static_cast<std::size_t>(set_idx)];
  const auto& coeffs = params.nodes[static_cast<std::size_t>(node_idx)].coefficients;
  std::vector<DualQuat<S>> dqs;
  dqs.reserve(set.size());
  for (const auto& basis : set) dqs.push_back(pose_to_dq(basis[static_cast<std::size_t>(eff_t)]));
  return to_se3(dq_blend(coeffs, dqs));
}

// Caches global motions of all nodes at requested frames. Nodes are sorted by
// id and a parent's id precedes its children's, so one ascending pass per
// frame composes the kinematic chain.
template <class S>
class MotionEvaluator {
 public:
  MotionEvaluator(const MotionTree& tree, const ModelParams<S>& params,
                  const std::set<int>* active_levels = nullptr)
      : tree_(tree), params_(params), active_levels_(active_levels),
        frame_slot_(static_cast<std::size_t>(tree.frame_count), -1) {}

  const SE3<S>& global(int node_idx, int t) {
    int slot = frame_slot_[static_cast<std::size_t>(t)];
    if (slot < 0) slot = add_frame(t);
    return cache_[static_cast<std::size_t>(slot) * tree_.nodes.size() +
                  static_cast<std::size_t>(node_idx)];
  }

  SE3<S> local(int node_idx, int t) const {
    return eval_local_motion(tree_, params_, node_idx, t, active_levels_);
  }

 private:
  int add_frame(int t) {
    int slot = static_cast<int>(cache_.size() / std::max<std::size_t>(tree_.nodes.size(), 1));
    frame_slot_[static_cast<std::size_t>(t)] = slot;
    cache_.resize(cache_.size() + tree_.nodes.size());
    SE3<S>* row = cache_.data() + static_cast<std::size_t>(slot) * tree_.nodes.size();
    for (std::size_t i = 0; i < tree_.nodes.size(); ++i) {
      const MotionNode& n = tree_.nodes[i];
      if (n.parent < 0) {
        row[i] = SE3<S>::identity();
      } else {
        int pi = tree_.node_index(n.parent);
        row[i] = compose(row[static_cast<std::size_t>(pi)],
                         eval_local_motion(tree_, params_, static_cast<int>(i), t, active_levels_));
      }
    }
    return slot;
  }

  const MotionTree& tree_;
  const ModelParams<S>& params_;
  const std::set<int>* active_levels_;
  std::vector<int> frame_slot_;
  std::vector<SE3<S>> cache_;
};

// K nearest leaves to p by canonical Euclidean distance, ties broken by
// ascending node id. Returns node ids; K is clamped to the leaf count.
std::vector<int> knn_leaves(const MotionTree& tree, const Vec3d& p, int K);

// Gaussian skinning weights over fixed leaf ids: exp(-d^2 / (2 r_k)),
// normalized to sum 1. If all raw weights underflow, the nearest leaf gets
// weight 1.
template <class S>
std::vector<S> gaussian_skin_weights(const MotionTree& tree, const ModelParams<S>& params,
                                     const Vec3<S>& p, const std::vector<int>& leaf_ids) {
  using std::exp;
  std::vector<S> w;
  w.reserve(leaf_ids.size());
  S total{0};
  for (int id : leaf_ids) {
    const auto& np = params.nodes[static_cast<std::size_t>(tree.node_index(id))];
    Vec3<S> d = p - np.position;
    S raw = exp(-d.dot(d) / (S(2) * np.radius));
    w.push_back(raw);
    total += raw;
  }
  if (ad::value(total) < 1e-300) {
    // Underflow: hand everything to the nearest leaf (tie -> lowest id).
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t k = 0; k < leaf_ids.size(); ++k) {
      const auto& np = params.nodes[static_cast<std::size_t>(tree.node_index(leaf_ids[k]))];
      Vec3<S> d = p - np.position;
      double dist = ad::value(d.dot(d));
      if (best_d < 0.0 || dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = S(k == best ? 1 : 0);
    return w;
  }
  for (auto& v : w) v = v / total;
  return w;
}

// Blend the global motions of the given leaves at frame t.
template <class S>
SE3<S> skinned_motion(const MotionTree& tree, MotionEvaluator<S>& eval,
                      const std::vector<int>& leaf_ids, const std::vector<S>& weights, int t) {
  std::vector<DualQuat<S>> dqs;
  dqs.reserve(leaf_ids.size());
  for (int id : leaf_ids) dqs.push_back(to_dual_quat(eval.global(tree.node_index(id), t)));
  return to_se3(dq_blend(weights, dqs));
}

// --- double-precision convenience API -------------------------------------

SE3d node_local_motion(const MotionTree& tree, int node_id, int t);
SE3d node_global_motion(const MotionTree& tree, int node_id, int t);
SE3d node_global_motion(const FrozenTree& view, int node_id, int t);

// (node id, weight) pairs for the K nearest leaves.
std::vector<std::pair<int, double>> skinning_weights(const Vec3d& point, const MotionTree& tree,
                                                     int K);

OrientedPoint deform_point(const MotionTree& tree, const OrientedPoint& p, int t, int K);
OrientedPoint deform_point(const FrozenTree& view, const OrientedPoint& p, int t, int K);

std::vector<Vec3d> point_trajectory(const MotionTree& tree, const OrientedPoint& p, int K);
std::vector<Vec3d> point_trajectory(const FrozenTree& view, const OrientedPoint& p, int K);

}  // namespace himor
