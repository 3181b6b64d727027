#pragma once

#include <Eigen/Core>
#include <vector>

#include "himor/tracks.hpp"

namespace himor {

// Mean Euclidean error over (track, frame) pairs visible in `gt`.
double epe(const std::vector<std::vector<Vec3d>>& pred, const TrackSet& gt);

// Fraction of visible pairs within ratio * (gt canonical bbox diagonal).
double pck_t(const std::vector<std::vector<Vec3d>>& pred, const TrackSet& gt,
             double ratio = 0.05);

struct Embedding {
  int dim = 0;
  std::vector<Eigen::VectorXd> frames;
};

// Cosine similarity a.b / (|a||b|).
double embed_sim(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Mean over frames of embed_sim(pred_t, gt_t).
double clip_i(const Embedding& pred, const Embedding& gt);

// Mean over t of embed_sim(pred_t, pred_{t+delta}).
double clip_t(const Embedding& pred, int delta);

}  // namespace himor
