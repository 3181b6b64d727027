#pragma once

#include <string>
#include <vector>

#include "himor/metrics.hpp"
#include "himor/optim.hpp"
#include "himor/synthetic.hpp"
#include "himor/tracks.hpp"
#include "himor/tree.hpp"

// Serialization. JSON documents carry a format_version field and all numbers
// round-trip bitwise; a compact little-endian f32 binary track format (magic
// "HIMORTRK") is available for large scenes. Malformed input raises
// ParseError, an unknown format_version raises VersionError.

namespace himor {

inline constexpr int kFormatVersion = 1;

std::string tracks_to_json(const TrackSet& tracks);
TrackSet tracks_from_json(const std::string& text);
void save_tracks(const TrackSet& tracks, const std::string& path);
TrackSet load_tracks(const std::string& path);  // .trk binary or JSON, by magic

// Binary track format: "HIMORTRK", u32 N, u32 T, then N*T*3 f32 positions and
// N*T u8 visibility flags, little-endian, row-major.
std::string tracks_to_binary(const TrackSet& tracks);
TrackSet tracks_from_binary(const std::string& bytes);

std::string tree_to_json(const MotionTree& tree);
MotionTree tree_from_json(const std::string& text);
void save_tree(const MotionTree& tree, const std::string& path);
MotionTree load_tree(const std::string& path);

FitConfig fit_config_from_json(const std::string& text);
FitConfig load_fit_config(const std::string& path);

SceneSpec scene_spec_from_json(const std::string& text);
SceneSpec load_scene_spec(const std::string& path);

Embedding embedding_from_json(const std::string& text);
Embedding load_embedding(const std::string& path);

// One CSV row per (point, frame): point_id,frame,x,y,z.
std::string trajectories_to_csv(const std::vector<std::vector<Vec3d>>& trajectories);
void export_trajectories(const MotionTree& tree, const std::vector<OrientedPoint>& points,
                         const std::string& path, int K = 4);

// Canonical positions from either a track file (canonical-frame positions) or
// a JSON array of [x, y, z] points.
std::vector<OrientedPoint> load_points(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace himor
