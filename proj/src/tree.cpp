#include "himor/tree.hpp"

#include <algorithm>

#include "himor/errors.hpp"

namespace himor {

int MotionTree::node_index(int id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const MotionNode& n, int v) { return n.id < v; });
  if (it == nodes.end() || it->id != id) return -1;
  return static_cast<int>(it - nodes.begin());
}

const MotionNode& MotionTree::node(int id) const {
  int i = node_index(id);
  if (i < 0) throw Error("no node with id " + std::to_string(id));
  return nodes[static_cast<std::size_t>(i)];
}

MotionNode& MotionTree::node(int id) {
  int i = node_index(id);
  if (i < 0) throw Error("no node with id " + std::to_string(id));
  return nodes[static_cast<std::size_t>(i)];
}

int MotionTree::basis_set_index(int owner) const {
  auto it = std::lower_bound(basis_sets.begin(), basis_sets.end(), owner,
                             [](const BasisSet& b, int v) { return b.owner < v; });
  if (it == basis_sets.end() || it->owner != owner) return -1;
  return static_cast<int>(it - basis_sets.begin());
}

const BasisSet* MotionTree::basis_set_for(int owner) const {
  int i = basis_set_index(owner);
  return i < 0 ? nullptr : &basis_sets[static_cast<std::size_t>(i)];
}

int MotionTree::root_id() const {
  for (const auto& n : nodes)
    if (n.parent < 0) return n.id;
  throw Error("tree has no root");
}

bool MotionTree::is_leaf(int id) const {
  for (const auto& n : nodes)
    if (n.parent == id) return false;
  return true;
}

std::vector<int> MotionTree::leaf_ids() const {
  std::vector<int> out;
  for (const auto& n : nodes)
    if (is_leaf(n.id)) out.push_back(n.id);
  return out;
}

std::vector<int> MotionTree::children_of(int id) const {
  std::vector<int> out;
  for (const auto& n : nodes)
    if (n.parent == id) out.push_back(n.id);
  return out;
}

int MotionTree::max_level() const {
  int m = 0;
  for (const auto& n : nodes) m = std::max(m, n.level);
  return m;
}

int MotionTree::next_id() const { return nodes.empty() ? 0 : nodes.back().id + 1; }

void MotionTree::add_node(MotionNode n) {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), n.id,
                             [](const MotionNode& a, int v) { return a.id < v; });
  if (it != nodes.end() && it->id == n.id) throw Error("duplicate node id");
  nodes.insert(it, std::move(n));
}

void MotionTree::add_basis_set(BasisSet b) {
  auto it = std::lower_bound(basis_sets.begin(), basis_sets.end(), b.owner,
                             [](const BasisSet& a, int v) { return a.owner < v; });
  if (it != basis_sets.end() && it->owner == b.owner) throw Error("duplicate basis set owner");
  basis_sets.insert(it, std::move(b));
}

void MotionTree::remove_node(int id) {
  if (!is_leaf(id)) throw Error("remove_node: not a leaf");
  int i = node_index(id);
  if (i < 0) throw Error("remove_node: unknown id");
  nodes.erase(nodes.begin() + i);
  int b = basis_set_index(id);
  if (b >= 0) basis_sets.erase(basis_sets.begin() + b);
}

void MotionTree::validate() const {
  if (frame_count < 1) throw Error("frame_count must be >= 1");
  if (canonical_frame < 0 || canonical_frame >= frame_count)
    throw Error("canonical_frame out of range");

  int roots = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const MotionNode& n = nodes[i];
    if (i > 0 && nodes[i - 1].id >= n.id) throw Error("node ids not strictly ascending");
    if (n.radius <= 0.0) throw Error("node radius must be positive");
    if (n.parent < 0) {
      ++roots;
      if (n.level != 0) throw Error("root must be at level 0");
      if (!n.coefficients.empty()) throw Error("root must have no coefficients");
    } else {
      int pi = node_index(n.parent);
      if (pi < 0) throw Error("missing parent node");
      const MotionNode& p = nodes[static_cast<std::size_t>(pi)];
      if (p.id >= n.id) throw Error("parent id must precede child id");
      if (n.level != p.level + 1) throw Error("level must be parent level + 1");
      const BasisSet* bs = basis_set_for(n.parent);
      if (!bs) throw Error("parent owns no basis set");
      if (n.coefficients.size() != bs->bases.size())
        throw Error("coefficient count does not match parent basis count");
    }
  }
  if (roots != 1) throw Error("tree must have exactly one root");

  for (const auto& bs : basis_sets) {
    if (node_index(bs.owner) < 0) throw Error("basis set owner does not exist");
    if (is_leaf(bs.owner)) throw Error("leaf node owns a basis set");
    if (bs.bases.empty()) throw Error("basis set must hold at least one basis");
    for (const auto& basis : bs.bases)
      if (static_cast<int>(basis.transforms.size()) != frame_count)
        throw Error("basis length does not match frame count");
  }
  for (const auto& n : nodes)
    if (!is_leaf(n.id) && !basis_set_for(n.id))
      throw Error("non-leaf node owns no basis set");
}

}  // namespace himor
