#include "himor/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "himor/errors.hpp"
#include "json.hpp"

namespace himor {

using json = nlohmann::ordered_json;

namespace {

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what());  // carries the byte offset
  }
}

void check_version(const json& j) {
  if (!j.is_object() || !j.contains("format_version") ||
      !j["format_version"].is_number_integer())
    throw ParseError("missing format_version");
  if (j["format_version"].get<int>() != kFormatVersion)
    throw VersionError("unsupported format_version " + j["format_version"].dump());
}

json vec3_to_json(const Vec3d& v) { return json::array({v[0], v[1], v[2]}); }

Vec3d vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <class T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ParseError(std::string("missing field: ") + key);
  try {
    return j[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("bad field: ") + key);
  }
}

void put_le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_le32(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

constexpr char kTrackMagic[] = "HIMORTRK";

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path);
}

std::string tracks_to_json(const TrackSet& tracks) {
  tracks.check_shapes();
  json j;
  j["format_version"] = kFormatVersion;
  j["num_tracks"] = tracks.num_tracks();
  j["num_frames"] = tracks.frame_count;
  json pos = json::array(), vis = json::array();
  for (int i = 0; i < tracks.num_tracks(); ++i) {
    json prow = json::array(), vrow = json::array();
    for (int t = 0; t < tracks.frame_count; ++t) {
      prow.push_back(vec3_to_json(tracks.positions[static_cast<std::size_t>(i)]
                                                  [static_cast<std::size_t>(t)]));
      vrow.push_back(static_cast<bool>(
          tracks.visibility[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)]));
    }
    pos.push_back(std::move(prow));
    vis.push_back(std::move(vrow));
  }
  j["positions"] = std::move(pos);
  j["visibility"] = std::move(vis);
  return j.dump();
}

TrackSet tracks_from_json(const std::string& text) {
  json j = parse_json(text);
  check_version(j);
  TrackSet tracks;
  const int N = get_field<int>(j, "num_tracks");
  tracks.frame_count = get_field<int>(j, "num_frames");
  if (!j.contains("positions") || !j["positions"].is_array() ||
      !j.contains("visibility") || !j["visibility"].is_array())
    throw ParseError("missing positions/visibility arrays");
  const json& pos = j["positions"];
  const json& vis = j["visibility"];
  if (static_cast<int>(pos.size()) != N || static_cast<int>(vis.size()) != N)
    throw ParseError("track count does not match num_tracks");
  for (int i = 0; i < N; ++i) {
    const json& prow = pos[static_cast<std::size_t>(i)];
    const json& vrow = vis[static_cast<std::size_t>(i)];
    if (static_cast<int>(prow.size()) != tracks.frame_count ||
        static_cast<int>(vrow.size()) != tracks.frame_count)
      throw ParseError("frame count does not match num_frames");
    std::vector<Vec3d> p;
    std::vector<bool> v;
    for (int t = 0; t < tracks.frame_count; ++t) {
      p.push_back(vec3_from_json(prow[static_cast<std::size_t>(t)]));
      const json& b = vrow[static_cast<std::size_t>(t)];
      if (!b.is_boolean()) throw ParseError("visibility entries must be booleans");
      v.push_back(b.get<bool>());
    }
    tracks.positions.push_back(std::move(p));
    tracks.visibility.push_back(std::move(v));
  }
  tracks.check_shapes();
  return tracks;
}

std::string tracks_to_binary(const TrackSet& tracks) {
  tracks.check_shapes();
  std::string out(kTrackMagic, 8);
  put_le32(out, static_cast<std::uint32_t>(tracks.num_tracks()));
  put_le32(out, static_cast<std::uint32_t>(tracks.frame_count));
  for (const auto& row : tracks.positions)
    for (const auto& p : row)
      for (int c = 0; c < 3; ++c) {
        const auto f = static_cast<float>(p[c]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_le32(out, bits);
      }
  for (const auto& row : tracks.visibility)
    for (bool v : row) out.push_back(v ? '\1' : '\0');
  return out;
}

TrackSet tracks_from_binary(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kTrackMagic, 8) != 0)
    throw ParseError("bad track binary header");
  const std::uint32_t N = get_le32(bytes, 8);
  const std::uint32_t T = get_le32(bytes, 12);
  const std::size_t need = 16 + static_cast<std::size_t>(N) * T * 3 * 4 +
                           static_cast<std::size_t>(N) * T;
  if (bytes.size() != need) throw ParseError("track binary size mismatch");
  TrackSet tracks;
  tracks.frame_count = static_cast<int>(T);
  std::size_t off = 16;
  for (std::uint32_t i = 0; i < N; ++i) {
    std::vector<Vec3d> row;
    for (std::uint32_t t = 0; t < T; ++t) {
      Vec3d p;
      for (int c = 0; c < 3; ++c) {
        const std::uint32_t bits = get_le32(bytes, off);
        off += 4;
        float f;
        std::memcpy(&f, &bits, 4);
        p[c] = static_cast<double>(f);
      }
      row.push_back(p);
    }
    tracks.positions.push_back(std::move(row));
  }
  for (std::uint32_t i = 0; i < N; ++i) {
    std::vector<bool> row;
    for (std::uint32_t t = 0; t < T; ++t) row.push_back(bytes[off++] != '\0');
    tracks.visibility.push_back(std::move(row));
  }
  tracks.check_shapes();
  return tracks;
}

void save_tracks(const TrackSet& tracks, const std::string& path) {
  const bool binary = path.size() >= 4 && path.compare(path.size() - 4, 4, ".trk") == 0;
  write_file(path, binary ? tracks_to_binary(tracks) : tracks_to_json(tracks));
}

TrackSet load_tracks(const std::string& path) {
  std::string data = read_file(path);
  if (data.size() >= 8 && std::memcmp(data.data(), kTrackMagic, 8) == 0)
    return tracks_from_binary(data);
  return tracks_from_json(data);
}

std::string tree_to_json(const MotionTree& tree) {
  tree.validate();
  json j;
  j["format_version"] = kFormatVersion;
  j["frame_count"] = tree.frame_count;
  j["canonical_frame"] = tree.canonical_frame;
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    json jn;
    jn["id"] = n.id;
    jn["parent"] = n.parent;
    jn["level"] = n.level;
    jn["position"] = vec3_to_json(n.position);
    jn["radius"] = n.radius;
    jn["coefficients"] = n.coefficients;
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  json sets = json::array();
  for (const auto& bs : tree.basis_sets) {
    json js;
    js["owner"] = bs.owner;
    json bases = json::array();
    for (const auto& basis : bs.bases) {
      json seq = json::array();
      for (const auto& T : basis.transforms) {
        json pose;
        pose["q"] = json::array(
            {T.rotation.w, T.rotation.x, T.rotation.y, T.rotation.z});
        pose["t"] = vec3_to_json(T.translation);
        seq.push_back(std::move(pose));
      }
      bases.push_back(std::move(seq));
    }
    js["bases"] = std::move(bases);
    sets.push_back(std::move(js));
  }
  j["basis_sets"] = std::move(sets);
  return j.dump();
}

MotionTree tree_from_json(const std::string& text) {
  json j = parse_json(text);
  check_version(j);
  MotionTree tree;
  tree.frame_count = get_field<int>(j, "frame_count");
  tree.canonical_frame = get_field<int>(j, "canonical_frame");
  if (!j.contains("nodes") || !j["nodes"].is_array() || !j.contains("basis_sets") ||
      !j["basis_sets"].is_array())
    throw ParseError("missing nodes/basis_sets arrays");
  for (const json& jn : j["nodes"]) {
    MotionNode n;
    n.id = get_field<int>(jn, "id");
    n.parent = get_field<int>(jn, "parent");
    n.level = get_field<int>(jn, "level");
    n.position = vec3_from_json(jn.contains("position") ? jn["position"] : json());
    n.radius = get_field<double>(jn, "radius");
    n.coefficients = get_field<std::vector<double>>(jn, "coefficients");
    tree.nodes.push_back(std::move(n));
  }
  for (const json& js : j["basis_sets"]) {
    BasisSet bs;
    bs.owner = get_field<int>(js, "owner");
    if (!js.contains("bases") || !js["bases"].is_array()) throw ParseError("missing bases");
    for (const json& jb : js["bases"]) {
      if (!jb.is_array()) throw ParseError("each basis must be an array of poses");
      MotionBasis basis;
      for (const json& jp : jb) {
        const json& q = jp.contains("q") ? jp["q"] : json();
        if (!q.is_array() || q.size() != 4) throw ParseError("pose q must be [w,x,y,z]");
        SE3d T;
        T.rotation = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                      q[3].get<double>()};
        T.translation = vec3_from_json(jp.contains("t") ? jp["t"] : json());
        basis.transforms.push_back(T);
      }
      bs.bases.push_back(std::move(basis));
    }
    tree.basis_sets.push_back(std::move(bs));
  }
  try {
    tree.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("invalid tree: ") + e.what());
  }
  return tree;
}

void save_tree(const MotionTree& tree, const std::string& path) {
  write_file(path, tree_to_json(tree));
}

MotionTree load_tree(const std::string& path) { return tree_from_json(read_file(path)); }

FitConfig fit_config_from_json(const std::string& text) {
  json j = parse_json(text);
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  FitConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
      else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else if (key == "lr_bases") c.lr_bases = value.get<double>();
      else if (key == "lr_position") c.lr_position = value.get<double>();
      else if (key == "lr_radius") c.lr_radius = value.get<double>();
      else if (key == "lr_coefficients") c.lr_coefficients = value.get<double>();
      else if (key == "stage1_steps") c.stage1_steps = value.get<int>();
      else if (key == "stage2_steps") c.stage2_steps = value.get<int>();
      else if (key == "densify_every") c.densify_every = value.get<int>();
      else if (key == "batch_frames") c.batch_frames = value.get<int>();
      else if (key == "rigidity_knn") c.rigidity_knn = value.get<int>();
      else if (key == "skin_knn") c.skin_knn = value.get<int>();
      else if (key == "num_nodes") c.num_nodes = value.get<int>();
      else if (key == "num_bases") c.num_bases = value.get<int>();
      else if (key == "per_node_children") c.per_node_children = value.get<int>();
      else if (key == "child_basis_count") c.child_basis_count = value.get<int>();
      else if (key == "rigidity_max_delta") c.rigidity_max_delta = value.get<int>();
      else if (key == "densify_threshold_ratio") c.densify_threshold_ratio = value.get<double>();
      else if (key == "densify_points_per_node") c.densify_points_per_node = value.get<int>();
      else if (key == "spawn_radius_multiplier") c.spawn_radius_multiplier = value.get<double>();
      else if (key == "refine_add_thresh") c.refine_add_thresh = value.get<double>();
      else if (key == "refine_prune_thresh") c.refine_prune_thresh = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ParseError("unknown config key: " + key);
    } catch (const nlohmann::json::exception&) {
      throw ParseError("bad config value for key: " + key);
    }
  }
  return c;
}

FitConfig load_fit_config(const std::string& path) {
  return fit_config_from_json(read_file(path));
}

SceneSpec scene_spec_from_json(const std::string& text) {
  json j = parse_json(text);
  if (!j.is_object()) throw SpecError("scene spec must be a JSON object");
  SceneSpec spec;
  spec.frames = j.contains("frames") ? j["frames"].get<int>() : 0;
  if (!j.contains("links") || !j["links"].is_array())
    throw SpecError("scene spec: missing links array");
  for (const json& jl : j["links"]) {
    LinkSpec l;
    if (jl.contains("parent")) l.parent = jl["parent"].get<int>();
    if (jl.contains("axis")) l.axis = vec3_from_json(jl["axis"]);
    if (jl.contains("pivot")) l.pivot = vec3_from_json(jl["pivot"]);
    if (jl.contains("angle_keys")) l.angle_keys = jl["angle_keys"].get<std::vector<double>>();
    if (jl.contains("translation_keys"))
      for (const json& k : jl["translation_keys"]) l.translation_keys.push_back(vec3_from_json(k));
    if (jl.contains("box_center")) l.box_center = vec3_from_json(jl["box_center"]);
    if (jl.contains("box_size")) l.box_size = vec3_from_json(jl["box_size"]);
    if (jl.contains("points")) l.points = jl["points"].get<int>();
    spec.links.push_back(std::move(l));
  }
  spec.check();
  return spec;
}

SceneSpec load_scene_spec(const std::string& path) {
  try {
    return scene_spec_from_json(read_file(path));
  } catch (const ParseError& e) {
    throw SpecError(e.what());
  }
}

Embedding embedding_from_json(const std::string& text) {
  json j = parse_json(text);
  Embedding e;
  e.dim = get_field<int>(j, "dim");
  if (!j.contains("frames") || !j["frames"].is_array()) throw ParseError("missing frames array");
  for (const json& row : j["frames"]) {
    if (static_cast<int>(row.size()) != e.dim)
      throw ParseError("embedding row length differs from dim");
    Eigen::VectorXd v(e.dim);
    for (int i = 0; i < e.dim; ++i) v[i] = row[static_cast<std::size_t>(i)].get<double>();
    e.frames.push_back(std::move(v));
  }
  return e;
}

Embedding load_embedding(const std::string& path) { return embedding_from_json(read_file(path)); }

std::string trajectories_to_csv(const std::vector<std::vector<Vec3d>>& trajectories) {
  std::string out = "point_id,frame,x,y,z\n";
  char buf[128];
  for (std::size_t i = 0; i < trajectories.size(); ++i)
    for (std::size_t t = 0; t < trajectories[i].size(); ++t) {
      const Vec3d& p = trajectories[i][t];
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g\n", i, t, p[0], p[1], p[2]);
      out += buf;
    }
  return out;
}

void export_trajectories(const MotionTree& tree, const std::vector<OrientedPoint>& points,
                         const std::string& path, int K) {
  std::vector<std::vector<Vec3d>> traj;
  traj.reserve(points.size());
  for (const auto& p : points) traj.push_back(point_trajectory(tree, p, K));
  write_file(path, trajectories_to_csv(traj));
}

std::vector<OrientedPoint> load_points(const std::string& path) {
  std::string data = read_file(path);
  std::vector<OrientedPoint> pts;
  if (data.size() >= 8 && std::memcmp(data.data(), kTrackMagic, 8) == 0) {
    TrackSet tracks = tracks_from_binary(data);
    const auto c = static_cast<std::size_t>(select_canonical_frame(tracks));
    for (const auto& row : tracks.positions) pts.push_back({row[c], Quatd::identity()});
    return pts;
  }
  json j = parse_json(data);
  if (j.is_array()) {
    for (const json& p : j) pts.push_back({vec3_from_json(p), Quatd::identity()});
    return pts;
  }
  TrackSet tracks = tracks_from_json(data);
  const auto c = static_cast<std::size_t>(select_canonical_frame(tracks));
  for (const auto& row : tracks.positions) pts.push_back({row[c], Quatd::identity()});
  return pts;
}

}  // namespace himor
