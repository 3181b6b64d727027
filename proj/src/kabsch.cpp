#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "himor/se3.hpp"

namespace himor {

SE3d kabsch_se3(const std::vector<Vec3d>& src, const std::vector<Vec3d>& dst) {
  if (src.size() != dst.size())
    throw ShapeMismatch("kabsch_se3: point lists differ in length");
  if (src.size() < 3) throw DegenerateGeometry("kabsch_se3: needs at least 3 points");

  const auto n = static_cast<double>(src.size());
  Vec3d cs = Vec3d::Zero(), cd = Vec3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= n;
  cd /= n;

  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) H += (src[i] - cs) * (dst[i] - cd).transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3d sv = svd.singularValues();
  if (sv[1] < 1e-12 * sv[0] && sv[2] < 1e-12 * sv[0])
    throw DegenerateGeometry("kabsch_se3: rank-deficient cross-covariance");

  Eigen::Matrix3d U = svd.matrixU();
  Eigen::Matrix3d V = svd.matrixV();
  Vec3d d(1.0, 1.0, (V * U.transpose()).determinant());
  Eigen::Matrix3d R = V * d.asDiagonal() * U.transpose();

  Eigen::Quaterniond q(R);
  q.normalize();
  Quatd rot{q.w(), q.x(), q.y(), q.z()};
  return {rot, Vec3d(cd - R * cs)};
}

}  // namespace himor
