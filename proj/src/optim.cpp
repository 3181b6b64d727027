#include "himor/optim.hpp"

#include <cmath>
#include <unordered_map>

#include "himor/densify.hpp"
#include "himor/init.hpp"
#include "himor/rng.hpp"

namespace himor {

void FitConfig::check() const {
  if (lr_bases <= 0 || lr_position <= 0 || lr_radius <= 0 || lr_coefficients <= 0)
    throw Error("FitConfig: learning rates must be positive");
  if (stage1_steps < 0 || stage2_steps < 0) throw Error("FitConfig: negative step counts");
  if (densify_every < 1) throw Error("FitConfig: densify_every must be >= 1");
  if (batch_frames < 1 || rigidity_knn < 1 || skin_knn < 1)
    throw Error("FitConfig: batch and KNN sizes must be >= 1");
  if (num_nodes < 1 || num_bases < 1 || per_node_children < 1 || child_basis_count < 1)
    throw Error("FitConfig: node and basis counts must be >= 1");
}

namespace {

constexpr std::uint64_t kind_bits(std::uint64_t kind, std::uint64_t id, std::uint64_t m,
                                  std::uint64_t frame, std::uint64_t comp) {
  return (kind << 60) | (id << 40) | (m << 24) | (frame << 8) | comp;
}

// Enumerates every optimizable scalar in the canonical layout order.
// f(group, key, node_or_owner_id, frame_or_minus1, value).
template <class F>
void visit_params(const MotionTree& tree, F&& f) {
  using G = ParamLayout::Group;
  for (const auto& n : tree.nodes) {
    const auto id = static_cast<std::uint64_t>(n.id);
    for (int c = 0; c < 3; ++c)
      f(G::Position, kind_bits(0, id, 0, 0, static_cast<std::uint64_t>(c)), n.id, -1,
        n.position[c]);
    f(G::Radius, kind_bits(1, id, 0, 0, 0), n.id, -1, n.radius);
    for (std::size_t m = 0; m < n.coefficients.size(); ++m)
      f(G::Coefficient, kind_bits(2, id, m, 0, 0), n.id, -1, n.coefficients[m]);
  }
  for (const auto& bs : tree.basis_sets) {
    const auto owner = static_cast<std::uint64_t>(bs.owner);
    for (std::size_t m = 0; m < bs.bases.size(); ++m) {
      const auto& seq = bs.bases[m].transforms;
      for (std::size_t t = 0; t < seq.size(); ++t) {
        const Vec4d q = seq[t].rotation.coeffs();
        for (int c = 0; c < 4; ++c)
          f(G::BasisRotation, kind_bits(3, owner, m, t, static_cast<std::uint64_t>(c)), bs.owner,
            static_cast<int>(t), q[c]);
        for (int c = 0; c < 3; ++c)
          f(G::BasisTranslation, kind_bits(4, owner, m, t, static_cast<std::uint64_t>(c)),
            bs.owner, static_cast<int>(t), seq[t].translation[c]);
      }
    }
  }
}

}  // namespace

ParamLayout make_layout(const MotionTree& tree) {
  ParamLayout layout;
  int quat_comp = 0;
  std::unordered_map<int, std::pair<int, int>> spans;
  visit_params(tree, [&](ParamLayout::Group g, std::uint64_t key, int id, int frame, double) {
    const int idx = static_cast<int>(layout.groups.size());
    layout.groups.push_back(g);
    layout.keys.push_back(key);
    if (g == ParamLayout::Group::BasisRotation) {
      if (quat_comp == 0) layout.quat_blocks.push_back(idx);
      quat_comp = (quat_comp + 1) % 4;
    }
    const bool canonical_pose = (g == ParamLayout::Group::BasisRotation ||
                                 g == ParamLayout::Group::BasisTranslation) &&
                                frame == tree.canonical_frame;
    layout.canonical_pose.push_back(canonical_pose ? 1 : 0);
    if (g == ParamLayout::Group::Coefficient) {
      auto [it, fresh] = spans.try_emplace(id, std::make_pair(idx, 0));
      (void)fresh;
      ++it->second.second;
    }
  });
  for (const auto& n : tree.nodes) {
    auto it = spans.find(n.id);
    if (it != spans.end()) layout.coeff_spans.emplace_back(n.id, it->second);
  }
  return layout;
}

Eigen::VectorXd gather_params(const MotionTree& tree) {
  std::vector<double> vals;
  visit_params(tree, [&](ParamLayout::Group, std::uint64_t, int, int, double v) {
    vals.push_back(v);
  });
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

void scatter_params(const Eigen::VectorXd& x, MotionTree& tree) {
  Eigen::Index i = 0;
  for (auto& n : tree.nodes) {
    for (int c = 0; c < 3; ++c) n.position[c] = x[i++];
    n.radius = x[i++];
    for (auto& v : n.coefficients) v = x[i++];
  }
  for (auto& bs : tree.basis_sets)
    for (auto& basis : bs.bases)
      for (auto& T : basis.transforms) {
        T.rotation = {x[i], x[i + 1], x[i + 2], x[i + 3]};
        i += 4;
        for (int c = 0; c < 3; ++c) T.translation[c] = x[i++];
      }
  if (i != x.size()) throw ShapeMismatch("scatter_params: size mismatch");
}

namespace {

template <class S, class Make>
ModelParams<S> build_params(const MotionTree& tree, const Eigen::VectorXd& x, Make make) {
  ModelParams<S> p;
  Eigen::Index i = 0;
  p.nodes.reserve(tree.nodes.size());
  for (const auto& n : tree.nodes) {
    NodeParam<S> np;
    for (int c = 0; c < 3; ++c) np.position[c] = make(x[i++]);
    np.radius = make(x[i++]);
    np.coefficients.reserve(n.coefficients.size());
    for (std::size_t m = 0; m < n.coefficients.size(); ++m) np.coefficients.push_back(make(x[i++]));
    p.nodes.push_back(std::move(np));
  }
  for (const auto& bs : tree.basis_sets) {
    std::vector<std::vector<PoseParam<S>>> set;
    for (const auto& basis : bs.bases) {
      std::vector<PoseParam<S>> seq(basis.transforms.size());
      for (auto& pose : seq) {
        pose.q = {make(x[i]), make(x[i + 1]), make(x[i + 2]), make(x[i + 3])};
        i += 4;
        for (int c = 0; c < 3; ++c) pose.t[c] = make(x[i++]);
      }
      set.push_back(std::move(seq));
    }
    p.bases.push_back(std::move(set));
  }
  if (i != x.size()) throw ShapeMismatch("build_params: size mismatch");
  return p;
}

struct TapeGuard {
  explicit TapeGuard(ad::Tape& tape) {
    tape.clear();
    ad::active_tape() = &tape;
  }
  ~TapeGuard() { ad::active_tape() = nullptr; }
};

}  // namespace

ModelParams<double> params_from_vector(const MotionTree& tree, const Eigen::VectorXd& x) {
  return build_params<double>(tree, x, [](double v) { return v; });
}

ModelParams<ad::Var> lift_params(const MotionTree& tree, const Eigen::VectorXd& x) {
  return build_params<ad::Var>(tree, x, [](double v) { return ad::Var::leaf(v); });
}

GradResult compute_gradients(const MotionTree& tree, const Eigen::VectorXd& x,
                             const TrackSet& tracks, const std::vector<PointBinding>& bindings,
                             const RigidityGraph& graph, const LossWeights& weights,
                             const FrameBatch& batch) {
  static thread_local ad::Tape tape;
  TapeGuard guard(tape);
  ModelParams<ad::Var> params = lift_params(tree, x);
  LossTerms<ad::Var> terms = total_loss(tree, params, tracks, bindings, graph, weights, batch);

  GradResult res;
  res.gradient = Eigen::VectorXd::Zero(x.size());
  if (terms.total.i >= 0) {
    std::vector<double> adj = tape.backward(terms.total.i);
    for (Eigen::Index i = 0; i < x.size(); ++i) res.gradient[i] = adj[static_cast<std::size_t>(i)];
  }
  res.terms = {ad::value(terms.track), ad::value(terms.rigidity), ad::value(terms.accel_bases),
               ad::value(terms.accel_tracks), ad::value(terms.radius), ad::value(terms.total)};
  return res;
}

LossTerms<double> eval_total_loss(const MotionTree& tree, const Eigen::VectorXd& x,
                                  const TrackSet& tracks,
                                  const std::vector<PointBinding>& bindings,
                                  const RigidityGraph& graph, const LossWeights& weights,
                                  const FrameBatch& batch) {
  ModelParams<double> params = params_from_vector(tree, x);
  return total_loss(tree, params, tracks, bindings, graph, weights, batch);
}

AdamState AdamState::zero(const ParamLayout& layout) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(layout.size());
  s.v = Eigen::VectorXd::Zero(layout.size());
  s.keys = layout.keys;
  return s;
}

AdamState AdamState::remapped(const ParamLayout& new_layout) const {
  AdamState s = zero(new_layout);
  s.step = step;
  std::unordered_map<std::uint64_t, Eigen::Index> index;
  index.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) index[keys[i]] = static_cast<Eigen::Index>(i);
  for (std::size_t i = 0; i < new_layout.keys.size(); ++i) {
    auto it = index.find(new_layout.keys[i]);
    if (it == index.end()) continue;
    s.m[static_cast<Eigen::Index>(i)] = m[it->second];
    s.v[static_cast<Eigen::Index>(i)] = v[it->second];
  }
  return s;
}

void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, AdamState& state,
               const ParamLayout& layout, const FitConfig& config) {
  if (x.size() != grad.size() || x.size() != layout.size())
    throw ShapeMismatch("adam_step: size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double lr = 0.0;
    switch (layout.groups[static_cast<std::size_t>(i)]) {
      case ParamLayout::Group::Position: lr = config.lr_position; break;
      case ParamLayout::Group::Radius: lr = config.lr_radius; break;
      case ParamLayout::Group::Coefficient: lr = config.lr_coefficients; break;
      case ParamLayout::Group::BasisRotation:
      case ParamLayout::Group::BasisTranslation: lr = config.lr_bases; break;
    }
    state.m[i] = config.adam_beta1 * state.m[i] + (1.0 - config.adam_beta1) * grad[i];
    state.v[i] = config.adam_beta2 * state.v[i] + (1.0 - config.adam_beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    x[i] -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
    // Radii sit inside exp(-d^2 / (2r)); a step through zero would flip the
    // weights to growing exponentials, so pin them to a positive floor.
    if (layout.groups[static_cast<std::size_t>(i)] == ParamLayout::Group::Radius &&
        x[i] < 1e-8)
      x[i] = 1e-8;
  }
  for (int start : layout.quat_blocks) {
    double n = x.segment<4>(start).norm();
    if (n > 0.0) x.segment<4>(start) /= n;
  }
}

namespace {

std::vector<OrientedPoint> supervised_points(const TrackSet& tracks, int canonical) {
  std::vector<OrientedPoint> pts;
  pts.reserve(static_cast<std::size_t>(tracks.num_tracks()));
  for (int i = 0; i < tracks.num_tracks(); ++i)
    pts.push_back({tracks.positions[static_cast<std::size_t>(i)][static_cast<std::size_t>(canonical)],
                   Quatd::identity()});
  return pts;
}

}  // namespace

FitResult fit(const TrackSet& tracks, const FitConfig& config, LossWeights weights,
              std::optional<MotionTree> initial) {
  config.check();
  tracks.check_shapes();

  MotionTree tree = initial
                        ? *std::move(initial)
                        : init_first_level(tracks, config.num_bases, config.num_nodes, config.seed);
  tree.validate();

  const double densify_threshold =
      std::max(config.densify_threshold_ratio * tracks.bbox_diagonal(), 1e-12);
  std::vector<OrientedPoint> points = supervised_points(tracks, tree.canonical_frame);

  Rng rng(config.seed);
  FitResult result;
  int global_step = 0;

  auto run_stage = [&](int stage, int steps) {
    std::vector<PointBinding> bindings = bind_tracks_to_leaves(tree, tracks, config.skin_knn);
    RigidityGraph graph = build_rigidity_graph(tree, config.rigidity_knn);
    ParamLayout layout = make_layout(tree);
    Eigen::VectorXd x = gather_params(tree);
    AdamState state = AdamState::zero(layout);
    std::map<int, double> coeff_grad_norms;

    const int T = tree.frame_count;
    const int B = std::min(config.batch_frames, T);

    for (int step = 0; step < steps; ++step, ++global_step) {
      if (step > 0 && step % config.densify_every == 0) {
        scatter_params(x, tree);
        if (stage == 1) {
          tree = densify_by_curve_distance(tree, points, config.skin_knn, densify_threshold,
                                           config.seed + static_cast<std::uint64_t>(global_step),
                                           {config.densify_points_per_node});
        } else {
          for (int id : tree.leaf_ids()) coeff_grad_norms.try_emplace(id, 0.0);
          tree = refine_by_gradient(tree, coeff_grad_norms, config.refine_add_thresh,
                                    config.refine_prune_thresh, points, config.skin_knn);
          coeff_grad_norms.clear();
        }
        bindings = bind_tracks_to_leaves(tree, tracks, config.skin_knn);
        graph = build_rigidity_graph(tree, config.rigidity_knn);
        ParamLayout new_layout = make_layout(tree);
        state = state.remapped(new_layout);
        layout = std::move(new_layout);
        x = gather_params(tree);
      }

      // Contiguous frame window; uniform start covers all frames over steps.
      const int start = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(T - B + 1)));
      std::vector<int> frames(static_cast<std::size_t>(B));
      for (int k = 0; k < B; ++k) frames[static_cast<std::size_t>(k)] = start + k;
      FrameBatch batch = make_frame_batch(std::move(frames), config.rigidity_max_delta);

      GradResult g = compute_gradients(tree, x, tracks, bindings, graph, weights, batch);
      if (!std::isfinite(g.terms.total)) throw NonFiniteLoss(global_step);

      if (stage == 2) {
        for (const auto& [id, span] : layout.coeff_spans) {
          if (!tree.is_leaf(id)) continue;
          coeff_grad_norms[id] +=
              g.gradient.segment(span.first, span.second).norm();
        }
      }

      // The canonical-frame pose of every basis stays pinned, keeping the
      // canonical deformation the identity map throughout the fit.
      for (Eigen::Index i = 0; i < x.size(); ++i)
        if (layout.canonical_pose[static_cast<std::size_t>(i)]) g.gradient[i] = 0.0;

      adam_step(x, g.gradient, state, layout, config);
      result.history.push_back({global_step, g.terms.total, g.terms.track, g.terms.rigidity,
                                g.terms.accel_bases, g.terms.accel_tracks, g.terms.radius});
    }
    scatter_params(x, tree);
  };

  run_stage(1, config.stage1_steps);
  if (config.stage2_steps > 0) {
    tree = spawn_children(tree, points, config.per_node_children, config.child_basis_count,
                          config.seed, {config.spawn_radius_multiplier, config.skin_knn});
    weights.second_level_active = true;
    run_stage(2, config.stage2_steps);
  }

  tree.validate();
  result.tree = std::move(tree);
  return result;
}

}  // namespace himor
