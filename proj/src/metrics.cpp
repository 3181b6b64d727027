#include "himor/metrics.hpp"

#include <cmath>
#include <limits>

#include "himor/errors.hpp"

namespace himor {

namespace {

void check_pred_shape(const std::vector<std::vector<Vec3d>>& pred, const TrackSet& gt) {
  gt.check_shapes();
  if (static_cast<int>(pred.size()) != gt.num_tracks())
    throw ShapeMismatch("prediction track count differs from ground truth");
  for (const auto& row : pred)
    if (static_cast<int>(row.size()) != gt.frame_count)
      throw ShapeMismatch("prediction frame count differs from ground truth");
}

// Bounding-box diagonal of the tracks visible at the canonical frame.
double canonical_bbox_diagonal(const TrackSet& gt) {
  const auto t = static_cast<std::size_t>(select_canonical_frame(gt));
  Vec3d lo = Vec3d::Constant(std::numeric_limits<double>::infinity());
  Vec3d hi = -lo;
  for (int i = 0; i < gt.num_tracks(); ++i) {
    if (!gt.visibility[static_cast<std::size_t>(i)][t]) continue;
    lo = lo.cwiseMin(gt.positions[static_cast<std::size_t>(i)][t]);
    hi = hi.cwiseMax(gt.positions[static_cast<std::size_t>(i)][t]);
  }
  return lo[0] <= hi[0] ? (hi - lo).norm() : 0.0;
}

}  // namespace

double epe(const std::vector<std::vector<Vec3d>>& pred, const TrackSet& gt) {
  check_pred_shape(pred, gt);
  double sum = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t t = 0; t < pred[i].size(); ++t) {
      if (!gt.visibility[i][t]) continue;
      sum += (pred[i][t] - gt.positions[i][t]).norm();
      ++count;
    }
  return count ? sum / static_cast<double>(count) : 0.0;
}

double pck_t(const std::vector<std::vector<Vec3d>>& pred, const TrackSet& gt, double ratio) {
  if (ratio <= 0.0) throw Error("pck_t: ratio must be positive");
  check_pred_shape(pred, gt);
  const double thresh = ratio * canonical_bbox_diagonal(gt);
  long hit = 0, count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t t = 0; t < pred[i].size(); ++t) {
      if (!gt.visibility[i][t]) continue;
      if ((pred[i][t] - gt.positions[i][t]).norm() <= thresh) ++hit;
      ++count;
    }
  return count ? static_cast<double>(hit) / static_cast<double>(count) : 1.0;
}

double embed_sim(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ShapeMismatch("embed_sim: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ZeroNorm("embed_sim: zero-norm vector");
  return a.dot(b) / (na * nb);
}

double clip_i(const Embedding& pred, const Embedding& gt) {
  if (pred.frames.size() != gt.frames.size())
    throw ShapeMismatch("clip_i: frame count mismatch");
  if (pred.frames.empty()) throw ShapeMismatch("clip_i: no frames");
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.frames.size(); ++t)
    sum += embed_sim(pred.frames[t], gt.frames[t]);
  return sum / static_cast<double>(pred.frames.size());
}

double clip_t(const Embedding& pred, int delta) {
  if (delta < 1) throw Error("clip_t: interval must be >= 1");
  if (static_cast<int>(pred.frames.size()) <= delta)
    throw ShapeMismatch("clip_t: interval exceeds frame count");
  double sum = 0.0;
  const std::size_t n = pred.frames.size() - static_cast<std::size_t>(delta);
  for (std::size_t t = 0; t < n; ++t)
    sum += embed_sim(pred.frames[t], pred.frames[t + static_cast<std::size_t>(delta)]);
  return sum / static_cast<double>(n);
}

}  // namespace himor
