#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "groundtrace/dataset.hpp"
#include "groundtrace/grounding.hpp"
#include "groundtrace/kinematics.hpp"
#include "groundtrace/layout.hpp"
#include "groundtrace/providers.hpp"

namespace groundtrace {

struct PipelineConfig {
  /// "stub" or "file:<dir>" per role, indexed by ProviderRole.
  std::array<std::string, kNumProviderRoles> bindings;
  std::string chain_path;
  Aabb workspace = default_workspace();
  LayoutParams layout;
  GroundingParams grounding;
  IkParams ik;
  PhaseTiming timing;
  StubOptions stub;
  std::string prompt = "pick up the object and put it down elsewhere on the table";
  std::string output_root = "dataset";
  std::uint64_t seed = 0;
  int episodes = 10;
  int workers = 1;
  double frame_dt = 1.0 / 30.0;  // s per video frame
  /// Robot base distance from the pick/place midpoint, perpendicular to the carry direction.
  double base_offset = 0.35;  // m

  PipelineConfig();
};

/// UTF-8 JSON mirroring PipelineConfig. Relative paths resolve against
/// `base_dir`. ConfigError on unknown keys, bad types or out-of-range values.
PipelineConfig parse_pipeline_config(const std::string& text, const std::string& base_dir);
PipelineConfig load_pipeline_config(const std::string& path);
void validate_pipeline_config(const PipelineConfig& config);

/// Default chain config shipped with the sources.
std::string default_chain_path();

ProviderSet build_providers(const PipelineConfig& config);

/// Base frame on the receptacle top: `offset` metres from the midpoint of the
/// pick and place positions, perpendicular to the carry direction, facing it.
Pose place_robot_base(const Vec3& pick, const Vec3& place, double surface_z, double offset);

struct RobotMotion {
  KinematicChain chain;  // with the placed base
  GraspPose grasp;       // the grasp actually used
  EeTrajectory ee;
  JointTrajectory joints;
};

/// Places the robot base, builds the end-effector trajectory and solves IK.
/// Tries the grasp and its half-turn twin about the approach axis. Throws
/// IkDiverged / JointJumpExceeded from the last attempt.
RobotMotion plan_robot_motion(const KinematicChain& chain, const ObjectTrajectory& object_motion,
                              const Pose& object_pose0, double surface_z, const GraspPose& grasp,
                              const PipelineConfig& config);

/// One structured line per stage per episode.
struct StageLog {
  std::int64_t episode = 0;
  std::string stage;
  double duration_ms = 0.0;
  std::string outcome;  // "ok" or the error code
  std::string detail;

  std::string format() const;
};

using LogSink = std::function<void(const StageLog&)>;

struct EpisodeRun {
  std::int64_t episode_id = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failed_stage;
  std::optional<Error> error;

  // Intermediate products, filled as far as the run got.
  AssetManifest manifest;
  SceneLayout scene;
  std::optional<VideoClip> clip;
  std::optional<GroundingResult> grounding;
  ObjectTrajectory object_motion;  // object frame
  Pose object_pose0;
  GraspPose grasp;
  KinematicChain chain;            // with the episode's base pose
  EeTrajectory ee;
  JointTrajectory joints;
  std::optional<Episode> episode;
};

struct PipelineContext {
  PipelineConfig config;
  ProviderSet providers;
  KinematicChain chain;

  explicit PipelineContext(PipelineConfig cfg);
};

std::uint64_t episode_seed(std::uint64_t global_seed, std::int64_t index);

/// Runs every stage for one episode. Never throws for stage failures; the
/// result names the failing stage. When `root` is set the episode is emitted.
EpisodeRun run_episode(const PipelineContext& ctx, std::int64_t index, const std::optional<std::string>& root,
                       const LogSink& log = {});

struct PipelineSummary {
  int requested = 0;
  int emitted = 0;
  std::vector<EpisodeRun> failures;  // intermediate products dropped
  double elapsed_s = 0.0;
  double generation_rate = 0.0;  // episodes per hour
  DatasetInfo info;
};

/// Episode-parallel batch over `config.workers` threads with disjoint ids;
/// the dataset manifest is written once at the end.
PipelineSummary run_pipeline(const PipelineConfig& config, const LogSink& log = {});

}  // namespace groundtrace
