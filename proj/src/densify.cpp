#include "himor/densify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "himor/errors.hpp"
#include "himor/eval.hpp"
#include "himor/init.hpp"
#include "himor/kmeans.hpp"
#include "himor/parallel.hpp"

namespace himor {

double curve_distance(const std::vector<Vec3d>& a, const std::vector<Vec3d>& b) {
  if (a.size() != b.size() || a.empty())
    throw ShapeMismatch("curve_distance: sequences must have equal nonzero length");
  double d = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) d = std::max(d, (a[t] - b[t]).norm());
  return d;
}

namespace {

// Min curve distance from each point's deformed trajectory to the
// trajectories of its K nearest leaves (each leaf's canonical position moved
// by its own global motion). Parallel over points, fixed output slots.
std::vector<double> min_node_curve_distance(const MotionTree& tree,
                                            const std::vector<OrientedPoint>& points, int K) {
  ModelParams<double> params = extract_params(tree);
  const int T = tree.frame_count;

  std::vector<int> leaves = tree.leaf_ids();
  std::vector<std::vector<Vec3d>> leaf_traj(leaves.size());
  {
    MotionEvaluator<double> eval(tree, params);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      const int idx = tree.node_index(leaves[k]);
      leaf_traj[k].reserve(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t)
        leaf_traj[k].push_back(apply(eval.global(idx, t), tree.nodes[static_cast<std::size_t>(idx)].position));
    }
  }
  std::vector<std::size_t> leaf_slot(static_cast<std::size_t>(leaves.back()) + 1, 0);
  for (std::size_t k = 0; k < leaves.size(); ++k)
    leaf_slot[static_cast<std::size_t>(leaves[k])] = k;

  std::vector<double> out(points.size(), 0.0);
  parallel_for(points.size(), [&](std::size_t p) {
    MotionEvaluator<double> eval(tree, params);
    std::vector<int> ids = knn_leaves(tree, points[p].position, K);
    std::vector<double> w = gaussian_skin_weights(tree, params, points[p].position, ids);
    std::vector<Vec3d> traj(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
      traj[static_cast<std::size_t>(t)] =
          apply(skinned_motion(tree, eval, ids, w, t), points[p].position);
    double best = std::numeric_limits<double>::max();
    for (int id : ids)
      best = std::min(best, curve_distance(traj, leaf_traj[leaf_slot[static_cast<std::size_t>(id)]]));
    out[p] = best;
  });
  return out;
}

}  // namespace

int count_curve_distance_violations(const MotionTree& tree,
                                    const std::vector<OrientedPoint>& points, int K,
                                    double threshold) {
  std::vector<double> d = min_node_curve_distance(tree, points, K);
  int n = 0;
  for (double v : d)
    if (v > threshold) ++n;
  return n;
}

MotionTree densify_by_curve_distance(const MotionTree& tree,
                                     const std::vector<OrientedPoint>& points, int K,
                                     double threshold, std::uint64_t seed,
                                     const DensifyOptions& opts) {
  if (threshold <= 0.0) throw Error("densify_by_curve_distance: threshold must be positive");
  if (!std::isfinite(threshold) || points.empty()) return tree;

  std::vector<double> dist = min_node_curve_distance(tree, points, K);
  std::vector<int> candidates;
  for (std::size_t p = 0; p < points.size(); ++p)
    if (dist[p] > threshold) candidates.push_back(static_cast<int>(p));
  if (candidates.empty()) return tree;

  Eigen::MatrixXd cand_positions(static_cast<Eigen::Index>(candidates.size()), 3);
  for (std::size_t r = 0; r < candidates.size(); ++r)
    cand_positions.row(static_cast<Eigen::Index>(r)) =
        points[static_cast<std::size_t>(candidates[r])].position.transpose();
  const int new_count = static_cast<int>(
      std::ceil(static_cast<double>(candidates.size()) / opts.points_per_node));
  std::vector<int> picks = farthest_point_sample(cand_positions, new_count, seed);

  std::vector<int> first_level;
  for (const auto& n : tree.nodes)
    if (n.level == 1) first_level.push_back(n.id);

  MotionTree out = tree;
  const int root = tree.root_id();
  if (first_level.empty() && !out.basis_set_for(root)) {
    // Degenerate start: a bare root gets one identity basis to parent against.
    MotionBasis identity;
    identity.transforms.assign(static_cast<std::size_t>(tree.frame_count), SE3d::identity());
    out.add_basis_set({root, {identity}});
  }
  const std::size_t basis_count =
      out.basis_set_for(root) ? out.basis_set_for(root)->bases.size() : 0;

  for (int r : picks) {
    const Vec3d pos = points[static_cast<std::size_t>(candidates[static_cast<std::size_t>(r)])].position;
    MotionNode n;
    n.id = out.next_id();
    n.parent = root;
    n.level = 1;
    n.position = pos;
    if (first_level.empty()) {
      n.coefficients.assign(basis_count, 1.0 / static_cast<double>(basis_count));
    } else {
      int nearest = first_level[0];
      double best = std::numeric_limits<double>::max();
      for (int id : first_level) {
        double d = (tree.node(id).position - pos).norm();
        if (d < best) {
          best = d;
          nearest = id;
        }
      }
      n.coefficients = tree.node(nearest).coefficients;
    }
    std::vector<Vec3d> others;
    for (const auto& existing : out.nodes)
      if (existing.parent >= 0) others.push_back(existing.position);
    n.radius = median_knn_distance(pos, others, threshold);
    out.add_node(std::move(n));
  }

  out.validate();
  return out;
}

MotionTree refine_by_gradient(const MotionTree& tree, const std::map<int, double>& grad_stats,
                              double add_thresh, double prune_thresh,
                              const std::vector<OrientedPoint>& points, int K) {
  std::vector<int> leaves = tree.leaf_ids();
  for (int id : leaves)
    if (!grad_stats.count(id))
      throw Error("refine_by_gradient: missing gradient stats for leaf " + std::to_string(id));

  // Points assigned to each leaf through their canonical KNN binding.
  std::map<int, std::vector<int>> assigned;
  std::vector<std::vector<int>> bindings(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    bindings[p] = knn_leaves(tree, points[p].position, K);
    for (int id : bindings[p]) assigned[id].push_back(static_cast<int>(p));
  }

  MotionTree out = tree;

  for (int id : leaves) {
    if (grad_stats.at(id) <= add_thresh) continue;
    const auto it = assigned.find(id);
    if (it == assigned.end() || it->second.empty()) continue;
    Vec3d mean = Vec3d::Zero();
    for (int p : it->second) mean += points[static_cast<std::size_t>(p)].position;
    mean /= static_cast<double>(it->second.size());

    const MotionNode& split = tree.node(id);
    MotionNode sibling;
    sibling.id = out.next_id();
    sibling.parent = split.parent;
    sibling.level = split.level;
    sibling.position = mean;
    sibling.coefficients = split.coefficients;
    std::vector<Vec3d> others;
    for (const auto& n : out.nodes)
      if (n.parent >= 0 && n.id != sibling.id) others.push_back(n.position);
    sibling.radius = median_knn_distance(mean, others, split.radius);
    out.add_node(std::move(sibling));
  }

  for (int id : leaves) {
    if (grad_stats.at(id) >= prune_thresh) continue;
    if (out.leaf_ids().size() <= 1) break;
    bool safe = true;
    const auto it = assigned.find(id);
    if (it != assigned.end()) {
      for (int p : it->second) {
        int remaining = 0;
        for (int b : bindings[static_cast<std::size_t>(p)])
          if (b != id && out.node_index(b) >= 0) ++remaining;
        if (remaining == 0) {
          safe = false;
          break;
        }
      }
    }
    if (safe && out.is_leaf(id)) out.remove_node(id);
  }

  // A node whose children were all pruned reverts to a plain leaf.
  std::erase_if(out.basis_sets, [&](const BasisSet& bs) { return out.is_leaf(bs.owner); });

  out.validate();
  return out;
}

}  // namespace himor
