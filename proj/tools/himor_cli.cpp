#include <cstdio>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "himor/init.hpp"
#include "himor/io.hpp"
#include "himor/parallel.hpp"
#include "json.hpp"

namespace {

using himor::OrientedPoint;
using himor::TrackSet;
using himor::Vec3d;
using json = nlohmann::ordered_json;

// Every run logs its resolved options so reruns are reproducible from the log.
void log_config(const std::string& cmd, const json& resolved) {
  std::cerr << "[" << cmd << "] resolved config: " << resolved.dump() << "\n";
}

std::string history_to_csv(const std::vector<himor::HistoryRow>& history) {
  std::string out = "step,total,track,rigidity,accel_bases,accel_tracks,radius\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.total,
                  r.track, r.rigidity, r.accel_bases, r.accel_tracks, r.radius);
    out += buf;
  }
  return out;
}

std::vector<std::vector<Vec3d>> predict_tracks(const himor::MotionTree& tree,
                                               const TrackSet& tracks, int K) {
  std::vector<std::vector<Vec3d>> pred;
  pred.reserve(tracks.positions.size());
  const auto c = static_cast<std::size_t>(tree.canonical_frame);
  for (const auto& row : tracks.positions)
    pred.push_back(himor::point_trajectory(tree, {row[c], himor::Quatd::identity()}, K));
  return pred;
}

json fit_config_to_json(const himor::FitConfig& c) {
  json j;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["lr_bases"] = c.lr_bases;
  j["lr_position"] = c.lr_position;
  j["lr_radius"] = c.lr_radius;
  j["lr_coefficients"] = c.lr_coefficients;
  j["stage1_steps"] = c.stage1_steps;
  j["stage2_steps"] = c.stage2_steps;
  j["densify_every"] = c.densify_every;
  j["batch_frames"] = c.batch_frames;
  j["rigidity_knn"] = c.rigidity_knn;
  j["skin_knn"] = c.skin_knn;
  j["num_nodes"] = c.num_nodes;
  j["num_bases"] = c.num_bases;
  j["per_node_children"] = c.per_node_children;
  j["child_basis_count"] = c.child_basis_count;
  j["rigidity_max_delta"] = c.rigidity_max_delta;
  j["densify_threshold_ratio"] = c.densify_threshold_ratio;
  j["densify_points_per_node"] = c.densify_points_per_node;
  j["spawn_radius_multiplier"] = c.spawn_radius_multiplier;
  j["refine_add_thresh"] = c.refine_add_thresh;
  j["refine_prune_thresh"] = c.refine_prune_thresh;
  j["seed"] = c.seed;
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"Hierarchical SE(3) motion-tree fitting for 3D point tracks"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker thread cap (1 is the determinism reference)")
      ->check(CLI::PositiveNumber);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate synthetic tracks from a scene spec");
  std::string gen_spec, gen_out, gen_labels, gen_coarse;
  std::uint64_t gen_seed = 0;
  gen->add_option("--spec", gen_spec, "Scene spec JSON")->required();
  gen->add_option("--seed", gen_seed, "RNG seed")->required();
  gen->add_option("--out", gen_out, "Output track file (.trk for binary)")->required();
  gen->add_option("--labels", gen_labels, "Optional per-point link label CSV");
  gen->add_option("--coarse", gen_coarse, "Optional ground-truth coarse trajectory CSV");

  // init
  auto* init = app.add_subcommand("init", "Initialize a one-level motion tree");
  std::string init_tracks, init_out;
  int init_nodes = 50, init_bases = 10;
  std::uint64_t init_seed = 0;
  init->add_option("--tracks", init_tracks, "Track file")->required();
  init->add_option("--nodes", init_nodes, "First-level node count");
  init->add_option("--bases", init_bases, "Motion basis count");
  init->add_option("--seed", init_seed, "RNG seed")->required();
  init->add_option("--out", init_out, "Output model JSON")->required();

  // fit
  auto* fitc = app.add_subcommand("fit", "Fit a motion tree to tracks");
  std::string fit_tracks, fit_config, fit_model, fit_out, fit_history;
  fitc->add_option("--tracks", fit_tracks, "Track file")->required();
  fitc->add_option("--config", fit_config, "Fit config JSON")->required();
  fitc->add_option("--model", fit_model, "Optional initial model JSON");
  fitc->add_option("--out", fit_out, "Output model JSON")->required();
  fitc->add_option("--history", fit_history, "Optional per-step loss CSV");

  // eval
  auto* evalc = app.add_subcommand("eval", "Evaluate a model against tracks");
  std::string eval_model, eval_tracks, eval_metrics = "epe,pck";
  double pck_ratio = 0.05;
  evalc->add_option("--model", eval_model, "Model JSON")->required();
  evalc->add_option("--tracks", eval_tracks, "Ground-truth track file")->required();
  evalc->add_option("--metrics", eval_metrics, "Comma list from {epe, pck}");
  evalc->add_option("--pck-ratio", pck_ratio, "PCK threshold as a bbox-diagonal ratio");

  // decompose
  auto* dec = app.add_subcommand("decompose", "Export trajectories with selected levels active");
  std::string dec_model, dec_points, dec_out, dec_levels = "1";
  dec->add_option("--model", dec_model, "Model JSON")->required();
  dec->add_option("--active-levels", dec_levels, "Comma list of active levels");
  dec->add_option("--points", dec_points, "Points file (tracks or JSON array)")->required();
  dec->add_option("--out", dec_out, "Output CSV")->required();

  // export
  auto* exp = app.add_subcommand("export", "Export full deformed trajectories");
  std::string exp_model, exp_points, exp_out;
  exp->add_option("--model", exp_model, "Model JSON")->required();
  exp->add_option("--points", exp_points, "Points file (tracks or JSON array)")->required();
  exp->add_option("--out", exp_out, "Output CSV")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of analytic gradients");
  std::uint64_t gc_seed = 0;
  int gc_trials = 100;
  gc->add_option("--seed", gc_seed, "RNG seed")->required();
  gc->add_option("--trials", gc_trials, "Random instances to check")->check(CLI::PositiveNumber);

  // embed-sim
  auto* emb = app.add_subcommand("embed-sim", "Cosine-similarity metrics over embedding files");
  std::string emb_pred, emb_gt;
  int emb_interval = 0;
  emb->add_option("--pred", emb_pred, "Predicted embedding JSON")->required();
  emb->add_option("--gt", emb_gt, "Ground-truth embedding JSON")->required();
  emb->add_option("--interval", emb_interval, "Temporal interval for the self-similarity metric")
      ->required()
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
  }
  himor::max_threads() = threads;

  if (*gen) {
    log_config("generate", {{"spec", gen_spec}, {"seed", gen_seed}, {"out", gen_out},
                            {"labels", gen_labels}, {"coarse", gen_coarse}, {"threads", threads}});
    himor::SceneSpec spec = himor::load_scene_spec(gen_spec);
    himor::SyntheticScene scene = himor::gen_synthetic(spec, gen_seed);
    himor::save_tracks(scene.tracks, gen_out);
    if (!gen_labels.empty()) {
      std::string csv = "point_id,link\n";
      for (std::size_t i = 0; i < scene.labels.size(); ++i)
        csv += std::to_string(i) + "," + std::to_string(scene.labels[i]) + "\n";
      himor::write_file(gen_labels, csv);
    }
    if (!gen_coarse.empty())
      himor::write_file(gen_coarse, himor::trajectories_to_csv(scene.coarse));
  } else if (*init) {
    log_config("init", {{"tracks", init_tracks}, {"nodes", init_nodes}, {"bases", init_bases},
                        {"seed", init_seed}, {"out", init_out}, {"threads", threads}});
    TrackSet tracks = himor::load_tracks(init_tracks);
    himor::MotionTree tree = himor::init_first_level(tracks, init_bases, init_nodes, init_seed);
    himor::save_tree(tree, init_out);
  } else if (*fitc) {
    himor::FitConfig config = himor::load_fit_config(fit_config);
    json resolved = fit_config_to_json(config);
    resolved["tracks"] = fit_tracks;
    resolved["model"] = fit_model;
    resolved["out"] = fit_out;
    resolved["history"] = fit_history;
    resolved["threads"] = threads;
    log_config("fit", resolved);
    TrackSet tracks = himor::load_tracks(fit_tracks);
    std::optional<himor::MotionTree> initial;
    if (!fit_model.empty()) initial = himor::load_tree(fit_model);
    himor::FitResult result = himor::fit(tracks, config, himor::LossWeights{}, std::move(initial));
    himor::save_tree(result.tree, fit_out);
    if (!fit_history.empty()) himor::write_file(fit_history, history_to_csv(result.history));
  } else if (*evalc) {
    log_config("eval", {{"model", eval_model}, {"tracks", eval_tracks},
                        {"metrics", eval_metrics}, {"pck_ratio", pck_ratio}, {"threads", threads}});
    himor::MotionTree tree = himor::load_tree(eval_model);
    TrackSet tracks = himor::load_tracks(eval_tracks);
    auto pred = predict_tracks(tree, tracks, 4);
    json out;
    std::set<std::string> wanted;
    for (const auto& m : CLI::detail::split(eval_metrics, ',')) wanted.insert(m);
    if (wanted.count("epe")) out["epe"] = himor::epe(pred, tracks);
    if (wanted.count("pck") || wanted.count("pck_t"))
      out["pck_t"] = himor::pck_t(pred, tracks, pck_ratio);
    std::cout << out.dump() << "\n";
  } else if (*dec) {
    log_config("decompose", {{"model", dec_model}, {"active_levels", dec_levels},
                             {"points", dec_points}, {"out", dec_out}, {"threads", threads}});
    himor::MotionTree tree = himor::load_tree(dec_model);
    std::set<int> levels;
    for (const auto& tok : CLI::detail::split(dec_levels, ','))
      if (!tok.empty()) levels.insert(std::stoi(tok));
    himor::FrozenTree view = himor::freeze_levels(tree, levels);
    std::vector<OrientedPoint> points = himor::load_points(dec_points);
    std::vector<std::vector<Vec3d>> traj;
    traj.reserve(points.size());
    for (const auto& p : points) traj.push_back(himor::point_trajectory(view, p, 4));
    himor::write_file(dec_out, himor::trajectories_to_csv(traj));
  } else if (*exp) {
    log_config("export", {{"model", exp_model}, {"points", exp_points}, {"out", exp_out},
                          {"threads", threads}});
    himor::MotionTree tree = himor::load_tree(exp_model);
    himor::export_trajectories(tree, himor::load_points(exp_points), exp_out);
  } else if (*gc) {
    log_config("gradcheck", {{"seed", gc_seed}, {"trials", gc_trials}, {"threads", threads}});
    himor::GradCheckReport report = himor::gradcheck(gc_seed, gc_trials);
    json out;
    out["trials"] = report.trials;
    out["params_checked"] = report.params_checked;
    out["failures"] = report.failures.size();
    std::cout << out.dump() << "\n";
    if (!report.ok()) {
      for (const auto& f : report.failures)
        std::cerr << "gradcheck failure: trial " << f.trial << " param " << f.param
                  << " analytic " << f.analytic << " fd " << f.fd << " rel " << f.rel_error
                  << "\n";
      return 3;
    }
  } else if (*emb) {
    log_config("embed-sim", {{"pred", emb_pred}, {"gt", emb_gt}, {"interval", emb_interval},
                             {"threads", threads}});
    himor::Embedding pred = himor::load_embedding(emb_pred);
    himor::Embedding gt = himor::load_embedding(emb_gt);
    json out;
    out["clip_i"] = himor::clip_i(pred, gt);
    out["clip_t"] = himor::clip_t(pred, emb_interval);
    std::cout << out.dump() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const himor::NonFiniteLoss& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const himor::DegenerateBlend& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const himor::DegenerateGeometry& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const himor::ZeroNorm& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const himor::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
