#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "himor/autodiff.hpp"
#include "himor/errors.hpp"

// Rigid-transform algebra templated on the scalar type, so the same code
// evaluates with double and with ad::Var. Rotations are unit quaternions in
// (w, x, y, z) order; q and -q denote the same rotation.

namespace himor {

template <class S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <class S>
using Vec4 = Eigen::Matrix<S, 4, 1>;

using Vec3d = Vec3<double>;
using Vec4d = Vec4<double>;

template <class S>
struct Quat {
  S w{1}, x{0}, y{0}, z{0};

  static Quat identity() { return {}; }

  Quat conjugate() const { return {w, -x, -y, -z}; }

  S squaredNorm() const { return w * w + x * x + y * y + z * z; }

  Quat normalized() const {
    using std::sqrt;
    S n = sqrt(squaredNorm());
    return {w / n, x / n, y / n, z / n};
  }

  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  // v' = v + 2w (q_v x v) + 2 q_v x (q_v x v), for unit q.
  Vec3<S> rotate(const Vec3<S>& v) const {
    Vec3<S> qv;
    qv << x, y, z;
    Vec3<S> c1 = qv.cross(v);
    Vec3<S> c2 = qv.cross(c1);
    return v + S(2) * (w * c1 + c2);
  }

  Vec4<S> coeffs() const {
    Vec4<S> q;
    q << w, x, y, z;
    return q;
  }
  static Quat from_coeffs(const Vec4<S>& q) { return {q[0], q[1], q[2], q[3]}; }

  S dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
};

using Quatd = Quat<double>;

template <class S>
struct SE3 {
  Quat<S> rotation;
  Vec3<S> translation = Vec3<S>::Zero();

  static SE3 identity() { return {}; }

  static SE3 from_translation(const Vec3<S>& t) { return {Quat<S>::identity(), t}; }

  // Rotation by `angle` (radians) about unit `axis`, then translate by t.
  static SE3 from_axis_angle(const Vec3<S>& axis, S angle, const Vec3<S>& t = Vec3<S>::Zero()) {
    using std::cos;
    using std::sin;
    S h = angle / S(2);
    S s = sin(h);
    return {Quat<S>{cos(h), axis[0] * s, axis[1] * s, axis[2] * s}, t};
  }
};

using SE3d = SE3<double>;

template <class S>
SE3<S> compose(const SE3<S>& a, const SE3<S>& b) {
  return {(a.rotation * b.rotation).normalized(), a.rotation.rotate(b.translation) + a.translation};
}

template <class S>
Vec3<S> apply(const SE3<S>& T, const Vec3<S>& p) {
  return T.rotation.rotate(p) + T.translation;
}

template <class S>
SE3<S> inverse(const SE3<S>& T) {
  Quat<S> qi = T.rotation.conjugate();
  return {qi, Vec3<S>(-qi.rotate(T.translation))};
}

// Dual quaternion: real + eps * dual, with ||real|| = 1 and real . dual = 0
// for a valid rigid transform.
template <class S>
struct DualQuat {
  Quat<S> real;
  Quat<S> dual{S(0), S(0), S(0), S(0)};
};

using DualQuatd = DualQuat<double>;

template <class S>
DualQuat<S> to_dual_quat(const SE3<S>& T) {
  Quat<S> t{S(0), T.translation[0], T.translation[1], T.translation[2]};
  Quat<S> d = t * T.rotation;
  return {T.rotation, {d.w / S(2), d.x / S(2), d.y / S(2), d.z / S(2)}};
}

template <class S>
DualQuat<S> dq_normalized(const DualQuat<S>& dq);

template <class S>
SE3<S> to_se3(const DualQuat<S>& dq) {
  DualQuat<S> n = dq_normalized(dq);
  Quat<S> t = n.dual * n.real.conjugate();
  Vec3<S> translation;
  translation << S(2) * t.x, S(2) * t.y, S(2) * t.z;
  return {n.real, translation};
}

// Rescale so ||real|| = 1 and real . dual = 0. DegenerateBlend on near-zero
// real norm.
template <class S>
DualQuat<S> dq_normalized(const DualQuat<S>& dq) {
  using std::sqrt;
  S n2 = dq.real.squaredNorm();
  if (ad::value(n2) < 1e-24)
    throw DegenerateBlend("dual quaternion real part has near-zero norm");
  S n = sqrt(n2);
  Quat<S> r{dq.real.w / n, dq.real.x / n, dq.real.y / n, dq.real.z / n};
  Quat<S> d{dq.dual.w / n, dq.dual.x / n, dq.dual.y / n, dq.dual.z / n};
  S rd = r.dot(d);
  d = {d.w - rd * r.w, d.x - rd * r.x, d.y - rd * r.y, d.z - rd * r.z};
  return {r, d};
}

// Weighted dual-quaternion blend. Each input's real part is hemisphere-aligned
// against the input with the largest |weight| (lowest index on ties) before
// the weighted sum; the result is normalized to a valid unit dual quaternion.
template <class S>
DualQuat<S> dq_blend(const std::vector<S>& weights, const std::vector<DualQuat<S>>& dqs) {
  if (weights.empty() || weights.size() != dqs.size())
    throw ShapeMismatch("dq_blend: weights and transforms must have equal nonzero length");
  std::size_t pivot = 0;
  for (std::size_t k = 1; k < weights.size(); ++k) {
    using std::abs;
    if (std::abs(ad::value(weights[k])) > std::abs(ad::value(weights[pivot]))) pivot = k;
  }
  DualQuat<S> sum{{S(0), S(0), S(0), S(0)}, {S(0), S(0), S(0), S(0)}};
  for (std::size_t k = 0; k < dqs.size(); ++k) {
    S sign = ad::value(dqs[k].real.dot(dqs[pivot].real)) < 0.0 ? S(-1) : S(1);
    S w = weights[k] * sign;
    sum.real.w += w * dqs[k].real.w;
    sum.real.x += w * dqs[k].real.x;
    sum.real.y += w * dqs[k].real.y;
    sum.real.z += w * dqs[k].real.z;
    sum.dual.w += w * dqs[k].dual.w;
    sum.dual.x += w * dqs[k].dual.x;
    sum.dual.y += w * dqs[k].dual.y;
    sum.dual.z += w * dqs[k].dual.z;
  }
  if (ad::value(sum.real.squaredNorm()) < 1e-24)
    throw DegenerateBlend("dq_blend: blended real part has near-zero norm");
  return dq_normalized(sum);
}

template <class S>
SE3<S> blend_se3(const std::vector<S>& weights, const std::vector<SE3<S>>& transforms) {
  std::vector<DualQuat<S>> dqs;
  dqs.reserve(transforms.size());
  for (const auto& T : transforms) dqs.push_back(to_dual_quat(T));
  return to_se3(dq_blend(weights, dqs));
}

// Rigid transform minimizing sum ||T src_i - dst_i||^2 (Kabsch, with
// determinant-sign correction). Throws DegenerateGeometry on < 3 points or a
// rank-deficient cross-covariance.
SE3d kabsch_se3(const std::vector<Vec3d>& src, const std::vector<Vec3d>& dst);

// Quaternion distance min(|q1 - q2|, |q1 + q2|), zero iff same rotation.
inline double quat_distance(const Quatd& a, const Quatd& b) {
  double dplus = (a.coeffs() - b.coeffs()).norm();
  double dminus = (a.coeffs() + b.coeffs()).norm();
  return std::min(dplus, dminus);
}

}  // namespace himor
