#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "himor/losses.hpp"

namespace himor {

struct FitConfig {
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_bases = 1.6e-4;
  double lr_position = 1.6e-5;
  double lr_radius = 5e-4;
  double lr_coefficients = 1e-2;
  int stage1_steps = 2000;
  int stage2_steps = 2000;
  int densify_every = 500;
  int batch_frames = 8;
  int rigidity_knn = 5;
  int skin_knn = 4;
  int num_nodes = 50;
  int num_bases = 10;
  int per_node_children = 10;
  int child_basis_count = 5;
  int rigidity_max_delta = 4;
  double densify_threshold_ratio = 0.05;  // of the canonical bbox diagonal
  int densify_points_per_node = 20;
  double spawn_radius_multiplier = 3.0;
  double refine_add_thresh = 0.05;
  double refine_prune_thresh = 1e-12;
  std::uint64_t seed = 0;

  void check() const;
};

// Flat view of every optimizable scalar with a stable ordering: per node
// (ascending id) position, radius, coefficients; then per basis set
// (ascending owner), per basis, per frame: quaternion (w,x,y,z), translation.
struct ParamLayout {
  enum class Group : std::uint8_t {
    Position,
    Radius,
    Coefficient,
    BasisRotation,
    BasisTranslation,
  };
  std::vector<Group> groups;          // per scalar
  std::vector<std::uint64_t> keys;    // stable identity, for optimizer-state remaps
  std::vector<int> quat_blocks;       // start index of each quaternion block
  std::vector<char> canonical_pose;   // 1 for basis scalars at the canonical frame
  // [start, count) of each leaf's coefficient scalars, for gradient stats
  std::vector<std::pair<int, std::pair<int, int>>> coeff_spans;  // (node id, (start, count))

  int size() const { return static_cast<int>(groups.size()); }
};

ParamLayout make_layout(const MotionTree& tree);
Eigen::VectorXd gather_params(const MotionTree& tree);
void scatter_params(const Eigen::VectorXd& x, MotionTree& tree);
ModelParams<double> params_from_vector(const MotionTree& tree, const Eigen::VectorXd& x);
// Registers every scalar as a tape leaf, in layout order, on the active tape.
ModelParams<ad::Var> lift_params(const MotionTree& tree, const Eigen::VectorXd& x);

struct GradResult {
  Eigen::VectorXd gradient;
  LossTerms<double> terms;
};

// Reverse-mode gradient of total_loss w.r.t. every parameter in `x`.
GradResult compute_gradients(const MotionTree& tree, const Eigen::VectorXd& x,
                             const TrackSet& tracks, const std::vector<PointBinding>& bindings,
                             const RigidityGraph& graph, const LossWeights& weights,
                             const FrameBatch& batch);

LossTerms<double> eval_total_loss(const MotionTree& tree, const Eigen::VectorXd& x,
                                  const TrackSet& tracks,
                                  const std::vector<PointBinding>& bindings,
                                  const RigidityGraph& graph, const LossWeights& weights,
                                  const FrameBatch& batch);

struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;
  std::vector<std::uint64_t> keys;

  static AdamState zero(const ParamLayout& layout);
  // Carry (m, v) over a topology change; new parameters start at zero.
  AdamState remapped(const ParamLayout& new_layout) const;
};

// One Adam update with bias correction and per-group learning rates;
// quaternion blocks are renormalized afterwards.
void adam_step(Eigen::VectorXd& x, const Eigen::VectorXd& grad, AdamState& state,
               const ParamLayout& layout, const FitConfig& config);

struct HistoryRow {
  int step;
  double total, track, rigidity, accel_bases, accel_tracks, radius;
};

struct FitResult {
  MotionTree tree;
  std::vector<HistoryRow> history;
};

// Two-stage fit: stage 1 optimizes the initialized first level with periodic
// curve-distance densification; stage 2 spawns children, raises the
// first-level rigidity weight, and optimizes all levels with periodic
// gradient-based refinement.
FitResult fit(const TrackSet& tracks, const FitConfig& config, LossWeights weights,
              std::optional<MotionTree> initial = std::nullopt);

struct GradCheckFailure {
  int trial, param;
  double analytic, fd, rel_error;
};

struct GradCheckReport {
  int trials = 0;
  int params_checked = 0;
  std::vector<GradCheckFailure> failures;
  bool ok() const { return failures.empty(); }
};

// Randomized small instances, central finite differences (h = 1e-5),
// relative tolerance 1e-4 with an absolute floor of 1e-8. Instances whose
// loss has a non-smooth point within finite-difference reach are re-drawn,
// deterministically.
GradCheckReport gradcheck(std::uint64_t seed, int trials = 100);

}  // namespace himor
