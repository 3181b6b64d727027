#include <cmath>

#include "himor/optim.hpp"
#include "himor/rng.hpp"

namespace himor {

namespace {

struct Instance {
  MotionTree tree;
  TrackSet tracks;
  LossWeights weights;
  std::vector<PointBinding> bindings;
  RigidityGraph graph;
  FrameBatch batch;
};

Quatd random_small_rotation(Rng& rng) {
  Vec3d axis(normal_sample(rng), normal_sample(rng), normal_sample(rng));
  double n = axis.norm();
  if (n < 1e-9) axis = Vec3d::UnitZ(); else axis /= n;
  const double angle = (0.2 + 0.3 * uniform_real(rng)) * (uniform_real(rng) < 0.5 ? -1.0 : 1.0);
  const double h = 0.5 * angle;
  return {std::cos(h), std::sin(h) * axis[0], std::sin(h) * axis[1], std::sin(h) * axis[2]};
}

Vec3d random_vec3(Rng& rng, double scale = 1.0) {
  return scale * Vec3d(2.0 * uniform_real(rng) - 1.0, 2.0 * uniform_real(rng) - 1.0,
                       2.0 * uniform_real(rng) - 1.0);
}

BasisSet random_basis_set(Rng& rng, int owner, int M, int T) {
  BasisSet bs;
  bs.owner = owner;
  for (int m = 0; m < M; ++m) {
    MotionBasis basis;
    for (int t = 0; t < T; ++t)
      basis.transforms.push_back({random_small_rotation(rng), random_vec3(rng, 0.5)});
    bs.bases.push_back(std::move(basis));
  }
  return bs;
}

std::vector<double> random_coeffs(Rng& rng, int M) {
  std::vector<double> c(static_cast<std::size_t>(M));
  for (auto& v : c) v = 0.3 + 0.7 * uniform_real(rng);
  return c;
}

Instance draw_instance(Rng& rng) {
  Instance inst;
  const int T = 3 + static_cast<int>(uniform_index(rng, 3));
  const int M = 1 + static_cast<int>(uniform_index(rng, 3));
  const int n1 = 3 + static_cast<int>(uniform_index(rng, 3));
  const bool two_level = uniform_real(rng) < 0.5;

  MotionTree& tree = inst.tree;
  tree.frame_count = T;
  tree.canonical_frame = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(T)));
  tree.nodes.push_back({0, -1, 0, random_vec3(rng), 0.3 + 0.7 * uniform_real(rng), {}});
  tree.basis_sets.push_back(random_basis_set(rng, 0, M, T));
  for (int i = 1; i <= n1; ++i)
    tree.nodes.push_back({i, 0, 1, random_vec3(rng), 0.3 + 0.7 * uniform_real(rng),
                          random_coeffs(rng, M)});
  if (two_level) {
    const int M2 = 1 + static_cast<int>(uniform_index(rng, 2));
    const int n2 = 2 + static_cast<int>(uniform_index(rng, 2));
    tree.basis_sets.push_back(random_basis_set(rng, 1, M2, T));
    for (int i = 0; i < n2; ++i)
      tree.nodes.push_back({n1 + 1 + i, 1, 2, random_vec3(rng), 0.3 + 0.7 * uniform_real(rng),
                            random_coeffs(rng, M2)});
  }
  tree.validate();

  TrackSet& tracks = inst.tracks;
  tracks.frame_count = T;
  const int N = 5 + static_cast<int>(uniform_index(rng, 4));
  tracks.positions.resize(static_cast<std::size_t>(N));
  tracks.visibility.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      tracks.positions[static_cast<std::size_t>(i)].push_back(random_vec3(rng));
      tracks.visibility[static_cast<std::size_t>(i)].push_back(
          t == tree.canonical_frame || uniform_real(rng) < 0.9);
    }
  }

  inst.weights.second_level_active = two_level;
  inst.bindings = bind_tracks_to_leaves(tree, tracks, 3);
  inst.graph = build_rigidity_graph(tree, 2);
  std::vector<int> frames(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) frames[static_cast<std::size_t>(t)] = t;
  inst.batch = make_frame_batch(std::move(frames), 4);
  return inst;
}

// Rejects instances whose loss is within finite-difference reach of a
// non-smooth point: abs() in the rigidity term, the radius hinge and its
// nearest-neighbor selection, hemisphere sign choices, pivot selection and
// the skin-weight underflow branch.
bool has_kink_margin(const Instance& inst) {
  constexpr double kMargin = 1e-3;
  const MotionTree& tree = inst.tree;
  ModelParams<double> params = extract_params(tree);
  MotionEvaluator<double> eval(tree, params);

  // Rigidity abs() terms.
  for (const auto& [t0, t1] : inst.batch.rigidity_pairs)
    for (const auto& e : inst.graph.edges) {
      const int ii = tree.node_index(e.i), ji = tree.node_index(e.j);
      Vec3d xi0 = apply(eval.global(ii, t0), tree.nodes[static_cast<std::size_t>(ii)].position);
      Vec3d xi1 = apply(eval.global(ii, t1), tree.nodes[static_cast<std::size_t>(ii)].position);
      Vec3d xj0 = apply(eval.global(ji, t0), tree.nodes[static_cast<std::size_t>(ji)].position);
      Vec3d xj1 = apply(eval.global(ji, t1), tree.nodes[static_cast<std::size_t>(ji)].position);
      if (std::abs((xi0 - xj0).norm() - (xi1 - xj1).norm()) < kMargin) return false;
    }

  // Radius hinge and its 3-NN selection.
  for (int level = 0; level <= tree.max_level(); ++level) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i)
      if (tree.nodes[i].level == level) idx.push_back(static_cast<int>(i));
    if (idx.size() < 4) continue;
    for (int i : idx) {
      std::vector<double> d;
      for (int j : idx)
        if (j != i)
          d.push_back((tree.nodes[static_cast<std::size_t>(i)].position -
                       tree.nodes[static_cast<std::size_t>(j)].position).norm());
      std::sort(d.begin(), d.end());
      if (d.size() > 3 && d[3] - d[2] < kMargin) return false;
      const double avg = (d[0] + d[1] + d[2]) / 3.0;
      if (std::abs(tree.nodes[static_cast<std::size_t>(i)].radius - avg) < kMargin) return false;
    }
  }

  // Hemisphere sign chain of the basis-acceleration term.
  for (const auto& bs : tree.basis_sets)
    for (const auto& basis : bs.bases)
      for (std::size_t t = 1; t < basis.transforms.size(); ++t)
        if (std::abs(basis.transforms[t].rotation.dot(basis.transforms[t - 1].rotation)) < kMargin)
          return false;

  // Blends: require clearly positive pairwise real-part dots (so the pivot
  // choice and sign flips are stable) and non-degenerate skin weights.
  auto dots_safe = [&](const std::vector<DualQuatd>& dqs) {
    for (std::size_t a = 0; a < dqs.size(); ++a)
      for (std::size_t b = a + 1; b < dqs.size(); ++b)
        if (dqs[a].real.dot(dqs[b].real) < kMargin) return false;
    return true;
  };
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const MotionNode& n = tree.nodes[i];
    if (n.parent < 0) continue;
    const auto& set = params.bases[static_cast<std::size_t>(tree.basis_set_index(n.parent))];
    for (int t = 0; t < tree.frame_count; ++t) {
      std::vector<DualQuatd> dqs;
      for (const auto& basis : set) dqs.push_back(pose_to_dq(basis[static_cast<std::size_t>(t)]));
      if (!dots_safe(dqs)) return false;
    }
  }
  for (const auto& b : inst.bindings) {
    std::vector<double> w =
        gaussian_skin_weights<double>(tree, params, b.position, b.leaf_ids);
    double total = 0.0;
    for (int id : b.leaf_ids) {
      const auto& np = params.nodes[static_cast<std::size_t>(tree.node_index(id))];
      total += std::exp(-(b.position - np.position).squaredNorm() / (2.0 * np.radius));
    }
    if (total < 1e-6) return false;
    for (int t = 0; t < tree.frame_count; ++t) {
      std::vector<DualQuatd> dqs;
      for (int id : b.leaf_ids) dqs.push_back(to_dual_quat(eval.global(tree.node_index(id), t)));
      if (!dots_safe(dqs)) return false;
    }
  }
  return true;
}

}  // namespace

GradCheckReport gradcheck(std::uint64_t seed, int trials) {
  GradCheckReport report;
  Rng rng(seed);
  constexpr double h = 1e-5;
  constexpr double rel_tol = 1e-4;
  constexpr double abs_floor = 1e-8;

  for (int trial = 0; trial < trials; ++trial) {
    Instance inst = draw_instance(rng);
    for (int redraw = 0; redraw < 200 && !has_kink_margin(inst); ++redraw)
      inst = draw_instance(rng);

    Eigen::VectorXd x = gather_params(inst.tree);
    GradResult g = compute_gradients(inst.tree, x, inst.tracks, inst.bindings, inst.graph,
                                     inst.weights, inst.batch);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fp = eval_total_loss(inst.tree, xp, inst.tracks, inst.bindings, inst.graph,
                                        inst.weights, inst.batch).total;
      const double fm = eval_total_loss(inst.tree, xm, inst.tracks, inst.bindings, inst.graph,
                                        inst.weights, inst.batch).total;
      const double fd = (fp - fm) / (2.0 * h);
      const double analytic = g.gradient[i];
      const double diff = std::abs(analytic - fd);
      const double scale = std::max(std::abs(analytic), std::abs(fd));
      ++report.params_checked;
      if (diff > abs_floor && diff > rel_tol * scale)
        report.failures.push_back({trial, static_cast<int>(i), analytic, fd,
                                   scale > 0.0 ? diff / scale : diff});
    }
    ++report.trials;
  }
  return report;
}

}  // namespace himor
