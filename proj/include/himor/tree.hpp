#pragma once

#include <set>
#include <vector>

#include "himor/se3.hpp"

namespace himor {

// One motion basis: a sequence of rigid transforms, one per frame, mapping
// the canonical frame to frame t.
struct MotionBasis {
  std::vector<SE3d> transforms;
};

// The bases shared by all children of `owner`.
struct BasisSet {
  int owner = -1;
  std::vector<MotionBasis> bases;
};

struct MotionNode {
  int id = -1;
  int parent = -1;  // -1 for the root
  int level = 0;    // root = 0
  Vec3d position = Vec3d::Zero();
  double radius = 1.0;
  std::vector<double> coefficients;  // over the parent's basis set; empty for root
};

// Tree of SE(3) motion nodes. The root is stationary at the origin; every
// other node's motion is a blend of its parent's bases, and global motion
// composes down the kinematic chain. Nodes and basis sets are kept sorted by
// id / owner, and a parent's id is always smaller than its children's.
struct MotionTree {
  int frame_count = 0;
  int canonical_frame = 0;
  std::vector<MotionNode> nodes;
  std::vector<BasisSet> basis_sets;

  int node_index(int id) const;         // -1 if absent
  const MotionNode& node(int id) const;
  MotionNode& node(int id);
  int basis_set_index(int owner) const;  // -1 if absent
  const BasisSet* basis_set_for(int owner) const;

  int root_id() const;
  bool is_leaf(int id) const;
  std::vector<int> leaf_ids() const;  // ascending
  std::vector<int> children_of(int id) const;
  int max_level() const;
  int next_id() const;

  void add_node(MotionNode n);
  void add_basis_set(BasisSet b);
  void remove_node(int id);  // leaf only

  void validate() const;  // throws Error on any structural violation
};

struct OrientedPoint {
  Vec3d position = Vec3d::Zero();
  Quatd orientation = Quatd::identity();
};

// View of a tree with the local motion of every node outside `active_levels`
// pinned, at every frame, to its canonical-frame value.
struct FrozenTree {
  const MotionTree* tree = nullptr;
  std::set<int> active_levels;
};

inline FrozenTree freeze_levels(const MotionTree& tree, std::set<int> active_levels) {
  return {&tree, std::move(active_levels)};
}

}  // namespace himor
