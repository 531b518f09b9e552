#include "groundtrace/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

#include "groundtrace/hash.hpp"
#include "groundtrace/json_io.hpp"
#include "groundtrace/manifest.hpp"

namespace groundtrace {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || base_dir.empty()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

void allow_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::ConfigError, where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw Error(ErrorCode::ConfigError, where + ": unknown key '" + k + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj[key];
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw Error(ErrorCode::ConfigError, "");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw Error(ErrorCode::ConfigError, "");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw Error(ErrorCode::ConfigError, "");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, where + "." + key + ": wrong type");
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

struct StageAbort {};

}  // namespace

PipelineConfig::PipelineConfig() {
  bindings.fill("stub");
  chain_path = default_chain_path();
}

std::string default_chain_path() { return std::string(GROUNDTRACE_SOURCE_DIR) + "/configs/chain_6dof.json"; }

PipelineConfig parse_pipeline_config(const std::string& text, const std::string& base_dir) {
  const json doc = parse_json(text, ErrorCode::ConfigError, "pipeline config");
  allow_keys(doc, {"providers", "chain", "workspace", "layout", "grounding", "ik", "timing", "stub", "prompt",
                   "output_root", "seed", "episodes", "workers", "frame_dt_s", "base_offset_m"},
             "config");
  PipelineConfig c;
  if (doc.contains("providers")) {
    const json& p = doc["providers"];
    if (!p.is_object()) throw Error(ErrorCode::ConfigError, "providers: expected an object");
    for (const auto& [name, v] : p.items()) {
      const ProviderRole role = role_from_string(name);
      if (!v.is_string()) throw Error(ErrorCode::ConfigError, "providers." + name + ": expected a string");
      std::string binding = v.get<std::string>();
      if (binding.rfind("file:", 0) == 0) binding = "file:" + resolve(base_dir, binding.substr(5));
      c.bindings[static_cast<std::size_t>(role)] = binding;
    }
  }
  if (doc.contains("chain")) {
    std::string chain;
    read(doc, "chain", chain, "config");
    c.chain_path = resolve(base_dir, chain);
  }
  if (doc.contains("workspace")) {
    const json& w = doc["workspace"];
    allow_keys(w, {"min", "max"}, "workspace");
    c.workspace.min = vec3_from_json(w.value("min", json()), ErrorCode::ConfigError, "workspace.min");
    c.workspace.max = vec3_from_json(w.value("max", json()), ErrorCode::ConfigError, "workspace.max");
  }
  if (doc.contains("layout")) {
    const json& l = doc["layout"];
    allow_keys(l, {"delta_m", "overlap_tolerance_m", "jitter_r0_m", "jitter_dr_m", "max_attempts"}, "layout");
    read(l, "delta_m", c.layout.delta, "layout");
    read(l, "overlap_tolerance_m", c.layout.overlap_tolerance, "layout");
    read(l, "jitter_r0_m", c.layout.jitter_r0, "layout");
    read(l, "jitter_dr_m", c.layout.jitter_dr, "layout");
    read(l, "max_attempts", c.layout.max_attempts, "layout");
  }
  if (doc.contains("grounding")) {
    const json& g = doc["grounding"];
    allow_keys(g, {"num_points", "ransac_threshold_m", "ransac_iterations", "outlier_threshold_scale",
                   "smooth_window"},
               "grounding");
    read(g, "num_points", c.grounding.num_points, "grounding");
    read(g, "ransac_threshold_m", c.grounding.ransac.inlier_threshold, "grounding");
    read(g, "ransac_iterations", c.grounding.ransac.max_iterations, "grounding");
    read(g, "outlier_threshold_scale", c.grounding.outlier_threshold_scale, "grounding");
    read(g, "smooth_window", c.grounding.smooth_window, "grounding");
  }
  if (doc.contains("ik")) {
    const json& k = doc["ik"];
    allow_keys(k, {"damping", "max_step_rad", "pos_tol_m", "ang_tol_deg", "max_iterations", "restarts",
                   "max_joint_step_rad"},
               "ik");
    read(k, "damping", c.ik.damping, "ik");
    read(k, "max_step_rad", c.ik.max_step, "ik");
    read(k, "pos_tol_m", c.ik.pos_tol, "ik");
    double ang_deg = c.ik.ang_tol * 180.0 / std::numbers::pi;
    read(k, "ang_tol_deg", ang_deg, "ik");
    c.ik.ang_tol = ang_deg * std::numbers::pi / 180.0;
    read(k, "max_iterations", c.ik.max_iterations, "ik");
    read(k, "restarts", c.ik.restarts, "ik");
    read(k, "max_joint_step_rad", c.ik.max_joint_step, "ik");
  }
  if (doc.contains("timing")) {
    const json& t = doc["timing"];
    allow_keys(t, {"approach_steps", "approach_duration_s", "release_steps", "release_duration_s"}, "timing");
    read(t, "approach_steps", c.timing.approach_steps, "timing");
    read(t, "approach_duration_s", c.timing.approach_duration, "timing");
    read(t, "release_steps", c.timing.release_steps, "timing");
    read(t, "release_duration_s", c.timing.release_duration, "timing");
  }
  if (doc.contains("stub")) {
    const json& s = doc["stub"];
    allow_keys(s, {"num_frames", "track_px_sigma", "depth_m_sigma", "corruption_fraction", "move_min_m",
                   "move_max_m", "lift_m", "max_yaw_deg"},
               "stub");
    read(s, "num_frames", c.stub.num_frames, "stub");
    read(s, "track_px_sigma", c.stub.noise.track_px_sigma, "stub");
    read(s, "depth_m_sigma", c.stub.noise.depth_m_sigma, "stub");
    read(s, "corruption_fraction", c.stub.noise.corruption_fraction, "stub");
    read(s, "move_min_m", c.stub.move_min_m, "stub");
    read(s, "move_max_m", c.stub.move_max_m, "stub");
    read(s, "lift_m", c.stub.lift_m, "stub");
    double yaw_deg = c.stub.max_yaw_rad * 180.0 / std::numbers::pi;
    read(s, "max_yaw_deg", yaw_deg, "stub");
    c.stub.max_yaw_rad = yaw_deg * std::numbers::pi / 180.0;
  }
  read(doc, "prompt", c.prompt, "config");
  if (doc.contains("output_root")) {
    read(doc, "output_root", c.output_root, "config");
    c.output_root = resolve(base_dir, c.output_root);
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw Error(ErrorCode::ConfigError, "config.seed: expected a non-negative integer");
    c.seed = doc["seed"].get<std::uint64_t>();
  }
  read(doc, "episodes", c.episodes, "config");
  read(doc, "workers", c.workers, "config");
  read(doc, "frame_dt_s", c.frame_dt, "config");
  read(doc, "base_offset_m", c.base_offset, "config");
  c.stub.num_points = c.grounding.num_points;
  validate_pipeline_config(c);
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::ConfigError, "cannot read config " + path);
  }
  return parse_pipeline_config(text, fs::path(path).parent_path().string());
}

void validate_pipeline_config(const PipelineConfig& c) {
  require(fs::is_regular_file(c.chain_path), "chain config '" + c.chain_path + "' does not exist");
  for (ProviderRole r : all_provider_roles()) {
    const std::string& b = c.bindings[static_cast<std::size_t>(r)];
    if (b.rfind("file:", 0) == 0) {
      require(fs::is_directory(b.substr(5)), std::string(to_string(r)) + " directory '" + b.substr(5) + "' does not exist");
    } else {
      require(b == "stub", std::string(to_string(r)) + ": binding must be stub or file:<dir>");
    }
  }
  require((c.workspace.max - c.workspace.min).minCoeff() > 0.0, "workspace: min must be below max on every axis");
  require(c.layout.delta >= 0.0 && c.layout.delta <= 0.05, "layout.delta_m must be in [0, 0.05]");
  require(c.layout.overlap_tolerance >= 0.0 && c.layout.overlap_tolerance < 0.01,
          "layout.overlap_tolerance_m must be in [0, 0.01)");
  require(c.layout.jitter_r0 > 0.0 && c.layout.jitter_dr > 0.0, "layout jitter radii must be positive");
  require(c.layout.max_attempts >= 1 && c.layout.max_attempts <= 100000, "layout.max_attempts out of range");
  require(c.grounding.num_points >= 3 && c.grounding.num_points <= 100000, "grounding.num_points out of range");
  require(c.grounding.ransac.inlier_threshold > 0.0, "grounding.ransac_threshold_m must be positive");
  require(c.grounding.ransac.max_iterations >= 1, "grounding.ransac_iterations must be positive");
  require(c.grounding.outlier_threshold_scale > 0.0, "grounding.outlier_threshold_scale must be positive");
  require(c.grounding.smooth_window >= 1 && c.grounding.smooth_window % 2 == 1,
          "grounding.smooth_window must be odd and positive");
  require(c.ik.damping > 0.0 && c.ik.max_step > 0.0 && c.ik.pos_tol > 0.0 && c.ik.ang_tol > 0.0,
          "ik tolerances must be positive");
  require(c.ik.max_iterations >= 1 && c.ik.restarts >= 0 && c.ik.max_joint_step > 0.0, "ik limits out of range");
  require(c.timing.approach_steps >= 0 && c.timing.release_steps >= 0 && c.timing.approach_duration >= 0.0 &&
              c.timing.release_duration >= 0.0,
          "timing values must be non-negative");
  require(c.stub.num_frames >= 2 && c.stub.num_frames <= 10000, "stub.num_frames must be in [2, 10000]");
  require(c.stub.noise.track_px_sigma >= 0.0 && c.stub.noise.depth_m_sigma >= 0.0, "stub noise must be non-negative");
  require(c.stub.noise.corruption_fraction >= 0.0 && c.stub.noise.corruption_fraction < 1.0,
          "stub.corruption_fraction must be in [0, 1)");
  require(c.stub.move_min_m >= 0.0 && c.stub.move_max_m >= c.stub.move_min_m, "stub move range invalid");
  require(c.episodes >= 0, "episodes must be non-negative");
  require(c.workers >= 1 && c.workers <= 256, "workers must be in [1, 256]");
  require(c.frame_dt > 0.0, "frame_dt_s must be positive");
  require(c.base_offset > 0.0, "base_offset_m must be positive");
  require(!c.output_root.empty(), "output_root must be set");
}

ProviderSet build_providers(const PipelineConfig& config) {
  ProviderSet set;
  for (ProviderRole r : all_provider_roles()) {
    set.bind(r, make_provider(r, config.bindings[static_cast<std::size_t>(r)], config.stub));
  }
  return set;
}

Pose place_robot_base(const Vec3& pick, const Vec3& place, double surface_z, double offset) {
  Vec3 dir = place - pick;
  dir.z() = 0.0;
  if (dir.norm() < 1e-6) dir = Vec3::UnitX();
  dir.normalize();
  const Vec3 side(-dir.y(), dir.x(), 0.0);
  Vec3 pos = 0.5 * (pick + place) + offset * side;
  pos.z() = surface_z;
  // Base +X points back at the midpoint.
  const double yaw = std::atan2(-side.y(), -side.x());
  return {pos, UnitQuat::from_axis_angle(Vec3::UnitZ(), yaw)};
}

RobotMotion plan_robot_motion(const KinematicChain& chain, const ObjectTrajectory& object_motion,
                              const Pose& object_pose0, double surface_z, const GraspPose& grasp,
                              const PipelineConfig& config) {
  if (object_motion.poses.empty()) throw Error(ErrorCode::SemanticError, "empty object trajectory");
  RobotMotion m;
  const Pose place = compose(object_pose0, object_motion.poses.back());
  m.chain = chain;
  m.chain.base_pose = place_robot_base(object_pose0.translation, place.translation, surface_z, config.base_offset);
  // Parallel jaws are symmetric under a half turn about the approach axis;
  // the twin grasp often keeps the wrist inside its limits.
  const GraspPose candidates[2] = {grasp, flip_about_approach(grasp)};
  for (int c = 0; c < 2; ++c) {
    m.ee = grasp_to_ee_trajectory(object_motion, object_pose0, candidates[c], config.frame_dt, config.timing);
    try {
      m.joints = trajectory_to_joints(m.chain, m.ee, neutral_posture(m.chain), config.ik);
      m.grasp = candidates[c];
      return m;
    } catch (const Error& e) {
      if (c == 1 || (e.code() != ErrorCode::IkDiverged && e.code() != ErrorCode::JointJumpExceeded)) throw;
    }
  }
  return m;
}

std::string StageLog::format() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", duration_ms);
  std::string line = "episode=" + std::to_string(episode) + " stage=" + stage + " duration_ms=" + buf +
                     " outcome=" + outcome;
  if (!detail.empty()) line += " detail=\"" + detail + "\"";
  return line;
}

PipelineContext::PipelineContext(PipelineConfig cfg)
    : config(std::move(cfg)), providers(build_providers(config)), chain(load_chain(config.chain_path)) {
  providers.require_complete();
}

std::uint64_t episode_seed(std::uint64_t global_seed, std::int64_t index) {
  return mix_seed(global_seed, static_cast<std::uint64_t>(index));
}

EpisodeRun run_episode(const PipelineContext& ctx, std::int64_t index, const std::optional<std::string>& root,
                       const LogSink& log) {
  const PipelineConfig& cfg = ctx.config;
  const ProviderSet& prov = ctx.providers;
  EpisodeRun run;
  run.episode_id = index;
  run.seed = episode_seed(cfg.seed, index);
  const std::uint64_t seed = run.seed;

  auto stage = [&](const char* name, auto&& body) {
    const auto t0 = Clock::now();
    try {
      body();
      if (log) log({index, name, ms_since(t0), "ok", ""});
    } catch (const Error& e) {
      run.failed_stage = name;
      run.error = e;
      if (log) log({index, name, ms_since(t0), std::string(to_string(e.code())), e.what()});
      throw StageAbort{};
    } catch (const std::exception& e) {
      run.failed_stage = name;
      run.error = Error(ErrorCode::SemanticError, e.what());
      if (log) log({index, name, ms_since(t0), "Exception", e.what()});
      throw StageAbort{};
    }
  };

  const PlacedObject* target = nullptr;
  TrackBundle bundle;
  try {
    stage("plan", [&] {
      run.manifest = apply_negative_constraints(
          prov.as<PlannerProvider>(ProviderRole::Planner).plan(cfg.prompt, seed), default_banned_materials());
      validate_manifest(run.manifest);
    });
    ExtentMap extents;
    stage("assets", [&] {
      for (const AssetEntry& e : run.manifest.entries) {
        prov.as<ImageProvider>(ProviderRole::ImageSynth).produce(e.name, seed);
        const Vec3 raw = prov.as<ReconstructorProvider>(ProviderRole::Reconstructor).reconstruct(e, seed);
        extents[e.name] = scale_to_metric(raw, e.nominal_extent).extent;
      }
    });
    stage("layout", [&] {
      run.scene = solve_layout(run.manifest, extents, cfg.workspace, run.manifest.seed, cfg.layout);
      target = run.scene.find(run.manifest.target);
      if (target == nullptr) throw Error(ErrorCode::SemanticError, "target missing from the scene");
      run.object_pose0 = target->pose;
    });
    stage("video", [&] {
      prov.as<ImageProvider>(ProviderRole::StyleRefiner).produce(hex64(fnv1a64(write_scene(run.scene))), seed);
      run.clip = prov.as<VideoProvider>(ProviderRole::VideoGen)
                     .generate({run.scene, run.manifest.target, run.manifest.receptacle, seed});
    });
    stage("observe", [&] { bundle = observe(prov, *run.clip); });
    stage("grounding", [&] {
      GroundingParams gp = cfg.grounding;
      gp.ransac.seed = mix_seed(seed, 5);
      gp.smooth_window = std::min(gp.smooth_window, bundle.num_frames % 2 == 1 ? bundle.num_frames
                                                                               : bundle.num_frames - 1);
      run.grounding = ground_tracks(bundle, gp);
      run.object_motion = reexpress_in_object_frame(run.grounding->trajectory, run.clip->camera_pose(), run.object_pose0);
    });
    stage("grasp", [&] {
      run.grasp = prov.as<GraspProvider>(ProviderRole::GraspGen).propose(*target, seed);
      validate_grasp(run.grasp);
    });
    stage("ik", [&] {
      RobotMotion m = plan_robot_motion(ctx.chain, run.object_motion, run.object_pose0, target->bottom_z(),
                                        run.grasp, cfg);
      run.chain = std::move(m.chain);
      run.grasp = m.grasp;
      run.ee = std::move(m.ee);
      run.joints = std::move(m.joints);
    });
    stage("emit", [&] {
      EpisodeContext context;
      context.prompt = run.manifest.prompt;
      context.manifest_hash = manifest_hash(run.manifest);
      context.seed = seed;
      if (root) context.scene_file = store_scene(*root, run.scene);
      EpisodeQuality quality;
      quality.per_frame_rms = run.grounding->trajectory.per_frame_rms;
      quality.dropped_tracks.assign(run.grounding->trajectory.dropped_point_ids.begin(),
                                    run.grounding->trajectory.dropped_point_ids.end());
      quality.ik_max_position_error = run.joints.max_position_error;
      quality.ik_max_angle_error = run.joints.max_angle_error;
      run.episode = make_episode(index, context, run.ee, run.joints, quality, run.chain.base_pose);
      if (root) emit_episode(*run.episode, *root);
    });
    run.ok = true;
  } catch (const StageAbort&) {
    run.ok = false;
  }
  return run;
}

PipelineSummary run_pipeline(const PipelineConfig& config, const LogSink& log) {
  const auto t0 = Clock::now();
  const PipelineContext ctx(config);
  const std::string& root = config.output_root;
  {
    std::error_code ec;
    const fs::path eps = fs::path(root) / "episodes";
    if (fs::is_directory(eps, ec) && !fs::is_empty(eps, ec)) {
      throw Error(ErrorCode::ConfigError, "output root '" + root + "' already holds episodes");
    }
  }
  KinematicChain stored = ctx.chain;
  stored.base_pose = Pose::identity();
  init_dataset(root, stored);

  std::mutex log_mutex;
  LogSink safe_log;
  if (log) {
    safe_log = [&](const StageLog& s) {
      std::lock_guard<std::mutex> lock(log_mutex);
      log(s);
    };
  }

  PipelineSummary summary;
  summary.requested = config.episodes;
  std::vector<EpisodeRun> results(static_cast<std::size_t>(std::max(0, config.episodes)));
  const int workers = std::max(1, std::min(config.workers, std::max(1, config.episodes)));
  auto work = [&](int w) {
    for (int i = w; i < config.episodes; i += workers) {
      EpisodeRun r = run_episode(ctx, i, root, safe_log);
      EpisodeRun slim;
      slim.episode_id = r.episode_id;
      slim.seed = r.seed;
      slim.ok = r.ok;
      slim.failed_stage = r.failed_stage;
      slim.error = r.error;
      results[static_cast<std::size_t>(i)] = std::move(slim);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (EpisodeRun& r : results) {
    if (r.ok) {
      ++summary.emitted;
    } else {
      summary.failures.push_back(std::move(r));
    }
  }
  summary.elapsed_s = std::chrono::duration<double>(Clock::now() - t0).count();
  summary.info = finalize_dataset(root, config.seed, summary.elapsed_s);
  summary.generation_rate = summary.info.generation_rate;
  return summary;
}

}  // namespace groundtrace
