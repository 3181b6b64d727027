#include "himor/eval.hpp"

namespace himor {

namespace {

OrientedPoint deform_impl(const MotionTree& tree, const ModelParams<double>& params,
                          const std::set<int>* active, const OrientedPoint& p, int t, int K) {
  MotionEvaluator<double> eval(tree, params, active);
  std::vector<int> ids = knn_leaves(tree, p.position, K);
  std::vector<double> w = gaussian_skin_weights(tree, params, p.position, ids);
  SE3d T = skinned_motion(tree, eval, ids, w, t);
  return {apply(T, p.position), (T.rotation * p.orientation).normalized()};
}

std::vector<Vec3d> trajectory_impl(const MotionTree& tree, const std::set<int>* active,
                                   const OrientedPoint& p, int K) {
  ModelParams<double> params = extract_params(tree);
  MotionEvaluator<double> eval(tree, params, active);
  std::vector<int> ids = knn_leaves(tree, p.position, K);
  std::vector<double> w = gaussian_skin_weights(tree, params, p.position, ids);
  std::vector<Vec3d> out;
  out.reserve(static_cast<std::size_t>(tree.frame_count));
  for (int t = 0; t < tree.frame_count; ++t)
    out.push_back(apply(skinned_motion(tree, eval, ids, w, t), p.position));
  return out;
}

}  // namespace

std::vector<int> knn_leaves(const MotionTree& tree, const Vec3d& p, int K) {
  std::vector<int> leaves = tree.leaf_ids();
  if (leaves.empty()) throw Error("tree has no leaves");
  std::vector<std::pair<double, int>> by_dist;
  by_dist.reserve(leaves.size());
  for (int id : leaves) by_dist.emplace_back((tree.node(id).position - p).squaredNorm(), id);
  std::sort(by_dist.begin(), by_dist.end());
  std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(K, 1)), by_dist.size());
  std::vector<int> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = by_dist[i].second;
  return out;
}

SE3d node_local_motion(const MotionTree& tree, int node_id, int t) {
  ModelParams<double> params = extract_params(tree);
  return eval_local_motion(tree, params, tree.node_index(node_id), t);
}

SE3d node_global_motion(const MotionTree& tree, int node_id, int t) {
  ModelParams<double> params = extract_params(tree);
  MotionEvaluator<double> eval(tree, params);
  return eval.global(tree.node_index(node_id), t);
}

SE3d node_global_motion(const FrozenTree& view, int node_id, int t) {
  ModelParams<double> params = extract_params(*view.tree);
  MotionEvaluator<double> eval(*view.tree, params, &view.active_levels);
  return eval.global(view.tree->node_index(node_id), t);
}

std::vector<std::pair<int, double>> skinning_weights(const Vec3d& point, const MotionTree& tree,
                                                     int K) {
  ModelParams<double> params = extract_params(tree);
  std::vector<int> ids = knn_leaves(tree, point, K);
  std::vector<double> w = gaussian_skin_weights(tree, params, point, ids);
  std::vector<std::pair<int, double>> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace_back(ids[i], w[i]);
  return out;
}

OrientedPoint deform_point(const MotionTree& tree, const OrientedPoint& p, int t, int K) {
  ModelParams<double> params = extract_params(tree);
  return deform_impl(tree, params, nullptr, p, t, K);
}

OrientedPoint deform_point(const FrozenTree& view, const OrientedPoint& p, int t, int K) {
  ModelParams<double> params = extract_params(*view.tree);
  return deform_impl(*view.tree, params, &view.active_levels, p, t, K);
}

std::vector<Vec3d> point_trajectory(const MotionTree& tree, const OrientedPoint& p, int K) {
  return trajectory_impl(tree, nullptr, p, K);
}

std::vector<Vec3d> point_trajectory(const FrozenTree& view, const OrientedPoint& p, int K) {
  return trajectory_impl(*view.tree, &view.active_levels, p, K);
}

}  // namespace himor
