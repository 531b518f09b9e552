#include "groundtrace/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "groundtrace/dataset.hpp"
#include "groundtrace/errors.hpp"
#include "groundtrace/export.hpp"
#include "groundtrace/fixture.hpp"
#include "groundtrace/formats.hpp"
#include "groundtrace/hash.hpp"
#include "groundtrace/json_io.hpp"
#include "groundtrace/manifest.hpp"
#include "groundtrace/pipeline.hpp"

namespace groundtrace {

namespace {

namespace fs = std::filesystem;

constexpr double kPi = 3.14159265358979323846;

struct CommonOptions {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string out;
};

PipelineConfig load_config(const CommonOptions& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig() : load_pipeline_config(o.config);
  if (o.seed) cfg.seed = static_cast<std::uint64_t>(*o.seed);
  return cfg;
}

void require_out(const std::string& out, const char* what) {
  if (out.empty()) throw Error(ErrorCode::ConfigError, std::string("--out <") + what + "> is required");
}

std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// ---- gen-scene ----

struct GenSceneOptions {
  CommonOptions common;
  std::string manifest;
};

int gen_scene(const GenSceneOptions& o, std::ostream& out) {
  require_out(o.common.out, "scene file");
  const PipelineConfig cfg = load_config(o.common);
  validate_pipeline_config(cfg);
  AssetManifest manifest = load_manifest(o.manifest);
  if (o.common.seed) manifest.seed = *o.common.seed;
  const ProviderSet providers = build_providers(cfg);
  const auto& recon = providers.as<ReconstructorProvider>(ProviderRole::Reconstructor);
  ExtentMap extents;
  for (const AssetEntry& e : manifest.entries) {
    extents[e.name] = scale_to_metric(recon.reconstruct(e, static_cast<std::uint64_t>(manifest.seed)),
                                      e.nominal_extent).extent;
  }
  const SceneLayout scene = solve_layout(manifest, extents, cfg.workspace, manifest.seed, cfg.layout);
  write_file_atomic(o.common.out, write_scene(scene));
  out << "wrote " << o.common.out << " (" << scene.objects.size() << " objects)\n";
  return kExitOk;
}

// ---- lift-tracks ----

struct LiftOptions {
  CommonOptions common;
  std::string fixture;
  std::string bundle;
  std::string tracks_dir, depth_dir, mask_dir;
  std::string camera;
  std::string scene;
  std::string target;
  std::optional<int> smooth_window;
  bool self_check = false;
};

TrackBundle read_bundle_dirs(const std::string& tracks_dir, const std::string& depth_dir,
                             const std::string& mask_dir) {
  TrackBundle b;
  decode_tracks(read_text_file((fs::path(tracks_dir) / "tracks.jsonl").string()), b);
  b.mask = decode_mask(read_text_file((fs::path(mask_dir) / "mask.msk").string()));
  b.depth.reserve(static_cast<std::size_t>(b.num_frames));
  for (int t = 0; t < b.num_frames; ++t) {
    b.depth.push_back(decode_depth(read_text_file((fs::path(depth_dir) / depth_file_name(t)).string())));
  }
  validate_bundle(b);
  return b;
}

int lift_tracks(const LiftOptions& o, std::ostream& out) {
  require_out(o.common.out, "trajectory file");
  const bool has_dirs = !o.bundle.empty() || !o.tracks_dir.empty();
  if (o.fixture.empty() == !has_dirs) {
    throw Error(ErrorCode::ConfigError, "give either --fixture or --bundle / --tracks-dir");
  }
  if (o.self_check && o.fixture.empty()) throw Error(ErrorCode::ConfigError, "--self-check needs --fixture");
  const PipelineConfig cfg = load_config(o.common);
  validate_pipeline_config(cfg);
  GroundingParams gp = cfg.grounding;
  if (o.smooth_window) gp.smooth_window = *o.smooth_window;
  if (gp.smooth_window < 1 || gp.smooth_window % 2 == 0) {
    throw Error(ErrorCode::ConfigError, "--smooth-window must be odd and positive");
  }

  TrajectoryFileInfo info;
  info.frame_dt_s = cfg.frame_dt;
  std::optional<Fixture> fixture;
  TrackBundle bundle;
  if (!o.fixture.empty()) {
    const FixtureSpec spec = load_fixture_spec(o.fixture);
    fixture = synth_fixture(spec);
    bundle = fixture->bundle;
    gp.ransac.seed = mix_seed(spec.seed, 5);
    const PlacedObject* target = spec.scene.find(spec.target);
    info.target = spec.target;
    info.camera_pose = spec.camera;
    info.object_pose0 = target->pose;
    info.object_extent = target->extent;
  } else {
    const std::string base = o.bundle;
    bundle = read_bundle_dirs(o.tracks_dir.empty() ? base : o.tracks_dir, o.depth_dir.empty() ? base : o.depth_dir,
                              o.mask_dir.empty() ? base : o.mask_dir);
    gp.ransac.seed = mix_seed(cfg.seed, 5);
    if (!o.camera.empty()) {
      info.camera_pose = pose_from_json(parse_json(read_text_file(o.camera), ErrorCode::SyntaxError, o.camera),
                                        ErrorCode::SchemaError, "camera pose");
    }
    if (!o.scene.empty()) {
      if (o.target.empty()) throw Error(ErrorCode::ConfigError, "--scene needs --target");
      const SceneLayout scene = load_scene(o.scene);
      const PlacedObject* target = scene.find(o.target);
      if (target == nullptr) throw Error(ErrorCode::SemanticError, "target '" + o.target + "' not in the scene");
      info.target = o.target;
      info.object_pose0 = target->pose;
      info.object_extent = target->extent;
    }
  }

  const GroundingResult g = ground_tracks(bundle, gp);
  write_file_atomic(o.common.out, write_object_trajectory(g.trajectory, info));
  out << "wrote " << o.common.out << " (" << g.trajectory.poses.size() << " frames, "
      << g.trajectory.dropped_point_ids.size() << " dropped tracks)\n";

  if (o.self_check) {
    double max_t = 0.0, max_r = 0.0;
    for (std::size_t t = 0; t < g.trajectory.poses.size(); ++t) {
      max_t = std::max(max_t, translation_distance(g.trajectory.poses[t], fixture->ground_truth.poses[t]));
      max_r = std::max(max_r, rotation_distance(g.trajectory.poses[t], fixture->ground_truth.poses[t]));
    }
    std::size_t flagged = 0;
    for (int id : fixture->corrupted_ids) flagged += g.trajectory.dropped_point_ids.count(id);
    out << "self-check: max translation error " << fmt("%.3g", max_t) << " m, max rotation error "
        << fmt("%.3g", max_r * 180.0 / kPi) << " deg, corrupted tracks flagged " << flagged << "/"
        << fixture->corrupted_ids.size() << "\n";
  }
  return kExitOk;
}

// ---- solve-ik ----

struct SolveOptions {
  CommonOptions common;
  std::string trajectory;
  std::string grasp;
  std::int64_t id = 0;
};

int solve_ik(const SolveOptions& o, std::ostream& out) {
  require_out(o.common.out, "directory");
  const PipelineConfig cfg = load_config(o.common);
  validate_pipeline_config(cfg);
  if (o.id < 0) throw Error(ErrorCode::ConfigError, "--id must be non-negative");
  TrajectoryFileInfo info;
  const ObjectTrajectory camera_motion = parse_object_trajectory(read_text_file(o.trajectory), &info);
  if (!info.camera_pose || !info.object_pose0 || !info.object_extent) {
    throw Error(ErrorCode::SchemaError, "trajectory header needs camera_pose, object_pose0 and object_extent_m");
  }
  const ObjectTrajectory motion = reexpress_in_object_frame(camera_motion, *info.camera_pose, *info.object_pose0);
  const GraspPose grasp = o.grasp.empty() ? top_down_grasp(*info.object_extent)
                                          : parse_grasp(read_text_file(o.grasp));
  validate_grasp(grasp);
  PipelineConfig timed = cfg;
  timed.frame_dt = info.frame_dt_s;
  const KinematicChain chain = load_chain(cfg.chain_path);
  const double surface_z = info.object_pose0->translation.z() - 0.5 * info.object_extent->z();
  const RobotMotion m = plan_robot_motion(chain, motion, *info.object_pose0, surface_z, grasp, timed);

  EpisodeContext context;
  context.prompt = cfg.prompt;
  context.seed = cfg.seed;
  EpisodeQuality quality;
  quality.per_frame_rms = camera_motion.per_frame_rms;
  quality.ik_max_position_error = m.joints.max_position_error;
  quality.ik_max_angle_error = m.joints.max_angle_error;
  const Episode ep = make_episode(o.id, context, m.ee, m.joints, quality, m.chain.base_pose);

  std::error_code ec;
  fs::create_directories(o.common.out, ec);
  const fs::path stem = fs::path(o.common.out) / episode_file_stem(o.id);
  write_file_atomic(stem.string() + ".jsonl", encode_episode_records(ep));
  write_file_atomic(stem.string() + ".meta.json", encode_episode_meta(ep));
  out << "wrote " << stem.string() << ".jsonl (" << ep.steps.size() << " steps, ik error "
      << fmt("%.3g", m.joints.max_position_error) << " m)\n";
  return kExitOk;
}

// ---- emit-dataset ----

struct EmitOptions {
  CommonOptions common;
  std::vector<std::string> episodes;
  std::string scene;
  bool chain = false;
};

Episode load_episode_file(const std::string& records_path) {
  std::string meta = records_path;
  const std::string ext = ".jsonl";
  if (meta.size() > ext.size() && meta.compare(meta.size() - ext.size(), ext.size(), ext) == 0) {
    meta.resize(meta.size() - ext.size());
  }
  return parse_episode(read_text_file(records_path), read_text_file(meta + ".meta.json"));
}

std::int64_t next_episode_id(const std::string& root) {
  std::int64_t next = 0;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(fs::path(root) / "episodes", ec)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("ep_", 0) != 0 || entry.path().extension() != ".jsonl") continue;
    try {
      next = std::max<std::int64_t>(next, std::stoll(name.substr(3)) + 1);
    } catch (const std::exception&) {
    }
  }
  return next;
}

int emit_dataset(const EmitOptions& o, std::ostream& out) {
  require_out(o.common.out, "dataset root");
  const auto start = std::chrono::steady_clock::now();
  const PipelineConfig cfg = load_config(o.common);
  validate_pipeline_config(cfg);
  std::vector<Episode> episodes;
  for (const std::string& p : o.episodes) episodes.push_back(load_episode_file(p));

  const std::string& root = o.common.out;
  if (!fs::exists(fs::path(root) / "chain.json")) {
    KinematicChain chain = load_chain(cfg.chain_path);
    chain.base_pose = Pose::identity();
    init_dataset(root, chain);
  }
  if (!o.scene.empty()) {
    const std::string rel = store_scene(root, load_scene(o.scene));
    for (Episode& e : episodes) e.context.scene_file = rel;
  }
  if (o.chain) episodes = {chain_subtasks(episodes)};

  std::int64_t id = next_episode_id(root);
  for (Episode& e : episodes) {
    e.episode_id = id++;
    emit_episode(e, root);
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const DatasetInfo info = finalize_dataset(root, cfg.seed, elapsed);
  out << "emitted " << episodes.size() << " episode(s); dataset holds " << info.num_episodes << "\n";
  return kExitOk;
}

// ---- run-pipeline ----

struct RunOptions {
  CommonOptions common;
  std::optional<int> workers;
  std::optional<int> episodes;
  bool quiet = false;
};

int run_pipeline_cmd(const RunOptions& o, std::ostream& out, std::ostream& err) {
  PipelineConfig cfg = load_config(o.common);
  if (o.workers) cfg.workers = *o.workers;
  if (o.episodes) cfg.episodes = *o.episodes;
  if (!o.common.out.empty()) cfg.output_root = o.common.out;
  validate_pipeline_config(cfg);
  LogSink log;
  if (!o.quiet) log = [&err](const StageLog& s) { err << s.format() << "\n"; };
  const PipelineSummary summary = run_pipeline(cfg, log);
  for (const EpisodeRun& f : summary.failures) {
    out << "episode " << f.episode_id << " skipped at stage " << f.failed_stage << ": "
        << (f.error ? f.error->what() : "unknown error") << "\n";
  }
  out << "emitted " << summary.emitted << "/" << summary.requested << " episodes to " << cfg.output_root << " in "
      << fmt("%.3f", summary.elapsed_s) << " s\n";
  out << "generation_rate " << fmt("%.1f", summary.generation_rate) << " episodes/hour\n";
  return summary.emitted == 0 && summary.requested > 0 ? kExitData : kExitOk;
}

// ---- export ----

struct ExportOptions {
  std::string input;
  std::string format;
  std::string out;
};

int export_cmd(const ExportOptions& o, std::ostream& out) {
  const ExportFormat format = parse_export_format(o.format);
  const std::string text = export_file(o.input, format);
  if (o.out.empty()) {
    out << text;
  } else {
    write_file_atomic(o.out, text);
  }
  return kExitOk;
}

// ---- validate ----

int validate_cmd(const std::string& root, std::ostream& out) {
  const ValidationReport report = validate_dataset(root);
  out << report.summary();
  if (!report.summary().empty() && report.summary().back() != '\n') out << "\n";
  return report.passed() ? kExitOk : kExitData;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownFormat:
    case ErrorCode::RoleMismatch:
      return kExitUsage;
    default:
      return kExitData;
  }
}

void add_common(CLI::App* cmd, CommonOptions& o, const char* out_help) {
  cmd->add_option("--config", o.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Global seed; overrides the config");
  cmd->add_option("--out", o.out, out_help);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"groundtrace: seeded synthetic manipulation data generation"};
  app.require_subcommand(1);

  GenSceneOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-scene", "Solve a collision-free layout for an asset manifest");
  gen_cmd->add_option("manifest", gen.manifest, "Asset manifest (JSON)")->required();
  add_common(gen_cmd, gen.common, "Scene file to write");

  LiftOptions lift;
  auto* lift_cmd = app.add_subcommand("lift-tracks", "Ground 2D tracks into a metric object trajectory");
  add_common(lift_cmd, lift.common, "Trajectory file to write");
  lift_cmd->add_option("--fixture", lift.fixture, "Synthetic fixture spec")->check(CLI::ExistingFile);
  lift_cmd->add_option("--bundle", lift.bundle, "Directory with tracks.jsonl, mask.msk and depth frames");
  lift_cmd->add_option("--tracks-dir", lift.tracks_dir, "Directory with tracks.jsonl");
  lift_cmd->add_option("--depth-dir", lift.depth_dir, "Directory with depth_NNNNN.dpf");
  lift_cmd->add_option("--mask-dir", lift.mask_dir, "Directory with mask.msk");
  lift_cmd->add_option("--camera", lift.camera, "Camera world pose (JSON)");
  lift_cmd->add_option("--scene", lift.scene, "Scene file holding the target's initial pose");
  lift_cmd->add_option("--target", lift.target, "Target object name in --scene");
  lift_cmd->add_option("--smooth-window", lift.smooth_window, "Odd smoothing window in frames");
  lift_cmd->add_flag("--self-check", lift.self_check, "Print the error against the fixture ground truth");

  SolveOptions solve;
  auto* solve_cmd = app.add_subcommand("solve-ik", "Turn an object trajectory into a joint-space episode");
  solve_cmd->add_option("trajectory", solve.trajectory, "Object trajectory file")->required();
  add_common(solve_cmd, solve.common, "Directory for the episode files");
  solve_cmd->add_option("--grasp", solve.grasp, "Grasp file (JSON); default top-down")->check(CLI::ExistingFile);
  solve_cmd->add_option("--id", solve.id, "Episode id");

  EmitOptions emit;
  auto* emit_cmd = app.add_subcommand("emit-dataset", "Add episode files to a dataset root and finalize it");
  emit_cmd->add_option("episodes", emit.episodes, "Episode record files (.jsonl)")->required();
  add_common(emit_cmd, emit.common, "Dataset root");
  emit_cmd->add_option("--scene", emit.scene, "Scene file referenced by the episodes")->check(CLI::ExistingFile);
  emit_cmd->add_flag("--chain-subtasks", emit.chain, "Concatenate the inputs into one episode");

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run-pipeline", "Generate a dataset end to end");
  add_common(run_cmd, run.common, "Dataset root; overrides the config");
  run_cmd->add_option("--workers", run.workers, "Worker threads");
  run_cmd->add_option("--episodes", run.episodes, "Episodes to generate");
  run_cmd->add_flag("--quiet", run.quiet, "Suppress per-stage log lines");

  ExportOptions exp;
  auto* exp_cmd = app.add_subcommand("export", "Export a scene or trajectory for inspection");
  exp_cmd->add_option("input", exp.input, "Scene, object trajectory or episode record file")->required();
  exp_cmd->add_option("--format", exp.format, "obj | csv | svg")->required();
  exp_cmd->add_option("--out", exp.out, "Output file; default stdout");

  std::string validate_root;
  auto* val_cmd = app.add_subcommand("validate", "Check a dataset root");
  val_cmd->add_option("root", validate_root, "Dataset root")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return gen_scene(gen, out);
    if (lift_cmd->parsed()) return lift_tracks(lift, out);
    if (solve_cmd->parsed()) return solve_ik(solve, out);
    if (emit_cmd->parsed()) return emit_dataset(emit, out);
    if (run_cmd->parsed()) return run_pipeline_cmd(run, out, err);
    if (exp_cmd->parsed()) return export_cmd(exp, out);
    if (val_cmd->parsed()) return validate_cmd(validate_root, out);
  } catch (const Error& e) {
    err << "groundtrace: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "groundtrace: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace groundtrace
