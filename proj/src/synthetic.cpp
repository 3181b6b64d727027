#include "himor/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "himor/errors.hpp"
#include "himor/rng.hpp"

namespace himor {

void SceneSpec::check() const {
  if (frames < 1) throw SpecError("scene spec: frames must be >= 1");
  if (links.empty()) throw SpecError("scene spec: no links");
  for (std::size_t i = 0; i < links.size(); ++i) {
    const LinkSpec& l = links[i];
    if (l.parent >= static_cast<int>(i))
      throw SpecError("scene spec: parents must precede children");
    if (l.parent < -1) throw SpecError("scene spec: bad parent index");
    if (i == 0 && l.parent != -1) throw SpecError("scene spec: first link must be the root");
    if (i > 0 && l.parent == -1) throw SpecError("scene spec: multiple roots");
    if (l.points < 0) throw SpecError("scene spec: negative point count");
    if (l.axis.norm() == 0.0 && !l.angle_keys.empty())
      throw SpecError("scene spec: zero rotation axis");
    if ((l.box_size.array() < 0.0).any()) throw SpecError("scene spec: negative box size");
  }
}

double spline_at(const std::vector<double>& keys, int t, int T) {
  if (keys.empty()) return 0.0;
  if (keys.size() == 1 || T <= 1) return keys.front();
  const double u = static_cast<double>(t) / static_cast<double>(T - 1) *
                   static_cast<double>(keys.size() - 1);
  const auto n = static_cast<int>(keys.size());
  int k = std::min(static_cast<int>(std::floor(u)), n - 2);
  const double s = u - k;
  auto key = [&](int i) { return keys[static_cast<std::size_t>(std::clamp(i, 0, n - 1))]; };
  const double p0 = key(k - 1), p1 = key(k), p2 = key(k + 1), p3 = key(k + 2);
  // Clamped Catmull-Rom.
  return p1 + s * (0.5 * (p2 - p0) +
                   s * ((p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3) +
                        s * (0.5 * (p3 - p0) + 1.5 * (p1 - p2))));
}

SE3d link_joint_transform(const LinkSpec& link, int t, int T) {
  const double angle = spline_at(link.angle_keys, t, T);
  Vec3d tau = Vec3d::Zero();
  if (!link.translation_keys.empty()) {
    std::vector<double> comp(link.translation_keys.size());
    for (int c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < comp.size(); ++k) comp[k] = link.translation_keys[k][c];
      tau[c] = spline_at(comp, t, T);
    }
  }
  SE3d rot = SE3d::identity();
  if (angle != 0.0 && link.axis.norm() > 0.0)
    rot = SE3d::from_axis_angle(link.axis.normalized(), angle);
  // Rotate about the pivot, then translate: x -> R (x - pivot) + pivot + tau.
  SE3d out;
  out.rotation = rot.rotation;
  out.translation = link.pivot - rot.rotation.rotate(link.pivot) + tau;
  return out;
}

namespace {

Vec3d sample_box_surface(Rng& rng, const Vec3d& center, const Vec3d& size) {
  const Vec3d h = 0.5 * size;
  // Face picked with probability proportional to its area.
  const double ax = size[1] * size[2], ay = size[0] * size[2], az = size[0] * size[1];
  double total = 2.0 * (ax + ay + az);
  Vec3d p;
  if (total == 0.0) {
    // Degenerate box: sample inside the (possibly flat) extent.
    for (int c = 0; c < 3; ++c) p[c] = (2.0 * uniform_real(rng) - 1.0) * h[c];
    return center + p;
  }
  double r = uniform_real(rng) * total;
  int axis = r < 2.0 * ax ? 0 : (r < 2.0 * (ax + ay) ? 1 : 2);
  const double sign = uniform_real(rng) < 0.5 ? -1.0 : 1.0;
  for (int c = 0; c < 3; ++c)
    p[c] = c == axis ? sign * h[c] : (2.0 * uniform_real(rng) - 1.0) * h[c];
  return center + p;
}

}  // namespace

SyntheticScene gen_synthetic(const SceneSpec& spec, std::uint64_t seed) {
  spec.check();
  const int T = spec.frames;
  const auto L = spec.links.size();

  // Global link transforms, full and with non-root joints zeroed.
  std::vector<std::vector<SE3d>> global(L), coarse_global(L);
  for (std::size_t i = 0; i < L; ++i) {
    const LinkSpec& link = spec.links[i];
    global[i].reserve(static_cast<std::size_t>(T));
    coarse_global[i].reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      SE3d local = link_joint_transform(link, t, T);
      // The coarse component zeroes every non-root joint profile.
      SE3d coarse_local = link.parent < 0 ? local : SE3d::identity();
      if (link.parent < 0) {
        global[i].push_back(local);
        coarse_global[i].push_back(coarse_local);
      } else {
        const auto p = static_cast<std::size_t>(link.parent);
        global[i].push_back(compose(global[p][static_cast<std::size_t>(t)], local));
        coarse_global[i].push_back(
            compose(coarse_global[p][static_cast<std::size_t>(t)], coarse_local));
      }
    }
  }

  SyntheticScene scene;
  scene.tracks.frame_count = T;
  Rng rng(seed);
  for (std::size_t i = 0; i < L; ++i) {
    const LinkSpec& link = spec.links[i];
    for (int k = 0; k < link.points; ++k) {
      const Vec3d local = sample_box_surface(rng, link.box_center, link.box_size);
      std::vector<Vec3d> pos, coarse_pos;
      pos.reserve(static_cast<std::size_t>(T));
      coarse_pos.reserve(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t) {
        pos.push_back(apply(global[i][static_cast<std::size_t>(t)], local));
        coarse_pos.push_back(apply(coarse_global[i][static_cast<std::size_t>(t)], local));
      }
      scene.tracks.positions.push_back(std::move(pos));
      scene.tracks.visibility.emplace_back(static_cast<std::size_t>(T), true);
      scene.labels.push_back(static_cast<int>(i));
      scene.coarse.push_back(std::move(coarse_pos));
    }
  }
  scene.tracks.check_shapes();
  return scene;
}

}  // namespace himor
