#include "himor/init.hpp"

#include <algorithm>
#include <cmath>

#include "himor/eval.hpp"
#include "himor/kmeans.hpp"

namespace himor {

double median_knn_distance(const Vec3d& position, const std::vector<Vec3d>& others,
                           double fallback) {
  std::vector<double> d;
  d.reserve(others.size());
  for (const auto& o : others) d.push_back((o - position).norm());
  std::sort(d.begin(), d.end());
  std::size_t k = std::min<std::size_t>(3, d.size());
  if (k == 0) return fallback;
  std::vector<double> nearest(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k));
  if (k % 2 == 1) return std::max(nearest[k / 2], 1e-12);
  return std::max(0.5 * (nearest[k / 2 - 1] + nearest[k / 2]), 1e-12);
}

ClusterBases bases_from_clusters(const TrackSet& tracks, const std::vector<int>& assignments,
                                 int num_clusters, int canonical) {
  tracks.check_shapes();
  if (assignments.size() != static_cast<std::size_t>(tracks.num_tracks()))
    throw ShapeMismatch("bases_from_clusters: assignment count mismatch");
  const int T = tracks.frame_count;

  ClusterBases out;
  for (int m = 0; m < num_clusters; ++m) {
    std::vector<int> members;
    for (int i = 0; i < tracks.num_tracks(); ++i)
      if (assignments[static_cast<std::size_t>(i)] == m) members.push_back(i);

    MotionBasis basis;
    basis.transforms.assign(static_cast<std::size_t>(T), SE3d::identity());
    std::vector<bool> solved(static_cast<std::size_t>(T), false);
    bool degenerate = false;

    for (int t = 0; t < T && !degenerate; ++t) {
      if (t == canonical) {
        solved[static_cast<std::size_t>(t)] = true;  // identity by construction
        continue;
      }
      std::vector<Vec3d> src, dst;
      for (int i : members) {
        auto iu = static_cast<std::size_t>(i);
        if (tracks.visibility[iu][static_cast<std::size_t>(canonical)] &&
            tracks.visibility[iu][static_cast<std::size_t>(t)]) {
          src.push_back(tracks.positions[iu][static_cast<std::size_t>(canonical)]);
          dst.push_back(tracks.positions[iu][static_cast<std::size_t>(t)]);
        }
      }
      if (src.size() < 3) continue;  // copy from a neighbor frame afterwards
      try {
        basis.transforms[static_cast<std::size_t>(t)] = kabsch_se3(src, dst);
        solved[static_cast<std::size_t>(t)] = true;
      } catch (const DegenerateGeometry&) {
        degenerate = true;
      }
    }
    if (degenerate || members.size() < 3) {
      ++out.dropped;
      continue;
    }

    for (int t = 0; t < T; ++t) {
      if (solved[static_cast<std::size_t>(t)]) continue;
      int best = -1;
      for (int s = 0; s < T; ++s)
        if (solved[static_cast<std::size_t>(s)] &&
            (best < 0 || std::abs(s - t) < std::abs(best - t)))
          best = s;
      basis.transforms[static_cast<std::size_t>(t)] =
          basis.transforms[static_cast<std::size_t>(best)];
    }

    Vec3d centroid = Vec3d::Zero();
    for (int i : members)
      centroid += tracks.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(canonical)];
    centroid /= static_cast<double>(members.size());

    out.bases.push_back(std::move(basis));
    out.canonical_centers.push_back(centroid);
  }
  return out;
}

namespace {

std::vector<double> idw_coefficients(const Vec3d& position, const std::vector<Vec3d>& centers,
                                     double epsilon) {
  std::vector<double> w(centers.size());
  double total = 0.0;
  for (std::size_t m = 0; m < centers.size(); ++m) {
    w[m] = 1.0 / ((centers[m] - position).norm() + epsilon);
    total += w[m];
  }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

MotionTree init_first_level(const TrackSet& tracks, int num_bases, int node_count,
                            std::uint64_t seed, const InitOptions& opts) {
  tracks.check_shapes();
  const int N = tracks.num_tracks();
  const int T = tracks.frame_count;
  if (N == 0) throw Error("init_first_level: empty track set");
  const int canonical = select_canonical_frame(tracks);

  // Tracks visible in at least min_visible_fraction of frames feed K-Means;
  // the rest are covered later by densification.
  std::vector<int> eligible;
  for (int i = 0; i < N; ++i) {
    int visible = 0;
    for (int t = 0; t < T; ++t)
      if (tracks.visibility[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)]) ++visible;
    if (visible >= static_cast<int>(std::ceil(opts.min_visible_fraction * T))) eligible.push_back(i);
  }
  if (static_cast<int>(eligible.size()) < num_bases) {
    eligible.resize(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) eligible[static_cast<std::size_t>(i)] = i;
  }

  Eigen::MatrixXd features(static_cast<Eigen::Index>(eligible.size()), 3 * T);
  for (std::size_t r = 0; r < eligible.size(); ++r)
    for (int t = 0; t < T; ++t)
      features.block<1, 3>(static_cast<Eigen::Index>(r), 3 * t) =
          tracks.positions[static_cast<std::size_t>(eligible[r])][static_cast<std::size_t>(t)]
              .transpose();

  KMeansResult km = kmeans(features, num_bases, seed);
  std::vector<int> assignments(static_cast<std::size_t>(N), -1);
  for (std::size_t r = 0; r < eligible.size(); ++r)
    assignments[static_cast<std::size_t>(eligible[r])] = km.assignments[r];

  ClusterBases cb = bases_from_clusters(tracks, assignments, num_bases, canonical);
  if (cb.bases.empty()) throw DegenerateGeometry("init_first_level: every cluster degenerate");

  MotionTree tree;
  tree.frame_count = T;
  tree.canonical_frame = canonical;
  tree.add_node({0, -1, 0, Vec3d::Zero(), 1.0, {}});
  tree.add_basis_set({0, cb.bases});

  Eigen::MatrixXd canonical_positions(N, 3);
  for (int i = 0; i < N; ++i)
    canonical_positions.row(i) =
        tracks.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(canonical)]
            .transpose();
  std::vector<int> picks = farthest_point_sample(canonical_positions, node_count, seed);

  std::vector<Vec3d> node_positions;
  node_positions.reserve(picks.size());
  for (int i : picks) node_positions.push_back(canonical_positions.row(i).transpose());

  const double fallback_radius = std::max(0.1 * tracks.bbox_diagonal(), 1e-6);
  for (std::size_t k = 0; k < node_positions.size(); ++k) {
    std::vector<Vec3d> others;
    for (std::size_t j = 0; j < node_positions.size(); ++j)
      if (j != k) others.push_back(node_positions[j]);
    MotionNode n;
    n.id = static_cast<int>(k) + 1;
    n.parent = 0;
    n.level = 1;
    n.position = node_positions[k];
    n.radius = median_knn_distance(node_positions[k], others, fallback_radius);
    n.coefficients = idw_coefficients(node_positions[k], cb.canonical_centers, opts.idw_epsilon);
    tree.add_node(std::move(n));
  }

  tree.validate();
  return tree;
}

MotionTree spawn_children(const MotionTree& tree, const std::vector<OrientedPoint>& points,
                          int per_node_children, int child_basis_count, std::uint64_t seed,
                          const SpawnOptions& opts) {
  if (points.empty()) throw Error("spawn_children: no points");
  const int T = tree.frame_count;
  MotionTree out = tree;

  ModelParams<double> params = extract_params(tree);
  MotionEvaluator<double> eval(tree, params);

  // Blended deformation of every point at every frame.
  std::vector<std::vector<SE3d>> point_motion(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<int> ids = knn_leaves(tree, points[p].position, opts.skin_knn);
    std::vector<double> w = gaussian_skin_weights(tree, params, points[p].position, ids);
    point_motion[p].reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) point_motion[p].push_back(skinned_motion(tree, eval, ids, w, t));
  }

  Vec3d lo = points[0].position, hi = points[0].position;
  for (const auto& p : points) {
    lo = lo.cwiseMin(p.position);
    hi = hi.cwiseMax(p.position);
  }
  const double quat_scale = std::max(0.5 * (hi - lo).norm(), 1e-9);

  for (int leaf : tree.leaf_ids()) {
    const MotionNode& n = tree.node(leaf);
    std::vector<int> members;
    for (std::size_t p = 0; p < points.size(); ++p)
      if ((points[p].position - n.position).norm() <= opts.radius_multiplier * n.radius)
        members.push_back(static_cast<int>(p));
    if (static_cast<int>(members.size()) < child_basis_count) continue;

    const int leaf_idx = tree.node_index(leaf);

    // Relative motion of each member w.r.t. this leaf, as per-frame
    // [translation, scaled hemisphere-aligned quaternion] features.
    Eigen::MatrixXd features(static_cast<Eigen::Index>(members.size()), 7 * T);
    for (std::size_t r = 0; r < members.size(); ++r) {
      Quatd prev = Quatd::identity();
      for (int t = 0; t < T; ++t) {
        SE3d rel = compose(inverse(eval.global(leaf_idx, t)),
                           point_motion[static_cast<std::size_t>(members[r])][static_cast<std::size_t>(t)]);
        Quatd q = rel.rotation;
        if (q.dot(prev) < 0.0) q = {-q.w, -q.x, -q.y, -q.z};
        prev = q;
        features.block<1, 3>(static_cast<Eigen::Index>(r), 7 * t) = rel.translation.transpose();
        features.block<1, 4>(static_cast<Eigen::Index>(r), 7 * t + 3) =
            quat_scale * q.coeffs().transpose();
      }
    }

    KMeansResult km = kmeans(features, child_basis_count, seed + static_cast<std::uint64_t>(leaf));

    // Cluster-center sequences renormalize directly into SE(3) bases.
    std::vector<MotionBasis> bases(static_cast<std::size_t>(child_basis_count));
    for (int m = 0; m < child_basis_count; ++m) {
      bases[static_cast<std::size_t>(m)].transforms.resize(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t) {
        Vec4d qc = km.centers.block<1, 4>(m, 7 * t + 3).transpose() / quat_scale;
        bases[static_cast<std::size_t>(m)].transforms[static_cast<std::size_t>(t)] = {
            Quatd::from_coeffs(qc).normalized(),
            Vec3d(km.centers.block<1, 3>(m, 7 * t).transpose())};
      }
    }

    // Canonical centroid of each cluster's member points, for the IDW rule.
    std::vector<Vec3d> cluster_centroids(static_cast<std::size_t>(child_basis_count),
                                         Vec3d::Zero());
    std::vector<int> cluster_counts(static_cast<std::size_t>(child_basis_count), 0);
    for (std::size_t r = 0; r < members.size(); ++r) {
      auto m = static_cast<std::size_t>(km.assignments[r]);
      cluster_centroids[m] += points[static_cast<std::size_t>(members[r])].position;
      ++cluster_counts[m];
    }
    for (std::size_t m = 0; m < cluster_centroids.size(); ++m)
      if (cluster_counts[m] > 0) cluster_centroids[m] /= cluster_counts[m];
      else cluster_centroids[m] = n.position;

    Eigen::MatrixXd member_positions(static_cast<Eigen::Index>(members.size()), 3);
    for (std::size_t r = 0; r < members.size(); ++r)
      member_positions.row(static_cast<Eigen::Index>(r)) =
          points[static_cast<std::size_t>(members[r])].position.transpose();
    std::vector<int> picks = farthest_point_sample(member_positions, per_node_children,
                                                   seed + static_cast<std::uint64_t>(leaf));

    std::vector<Vec3d> child_positions;
    child_positions.reserve(picks.size());
    for (int r : picks)
      child_positions.push_back(points[static_cast<std::size_t>(members[static_cast<std::size_t>(r)])].position);

    out.add_basis_set({leaf, std::move(bases)});
    for (std::size_t c = 0; c < child_positions.size(); ++c) {
      std::vector<Vec3d> siblings;
      for (std::size_t j = 0; j < child_positions.size(); ++j)
        if (j != c) siblings.push_back(child_positions[j]);
      MotionNode child;
      child.id = out.next_id();
      child.parent = leaf;
      child.level = n.level + 1;
      child.position = child_positions[c];
      child.radius = median_knn_distance(child_positions[c], siblings, 0.5 * n.radius);
      child.coefficients = idw_coefficients(child_positions[c], cluster_centroids, 1e-8);
      out.add_node(std::move(child));
    }
  }

  out.validate();
  return out;
}

}  // namespace himor
