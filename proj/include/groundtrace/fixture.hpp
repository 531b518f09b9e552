#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groundtrace/grounding.hpp"
#include "groundtrace/kinematics.hpp"
#include "groundtrace/layout.hpp"

namespace groundtrace {

/// World pose of the target at a given frame. Segments between consecutive
/// waypoints interpolate translation linearly and rotation by slerp; the
/// last pose is held after the final waypoint.
struct MotionWaypoint {
  int frame = 0;
  Pose pose;
};

struct FixtureNoise {
  double track_px_sigma = 0.0;
  double depth_m_sigma = 0.0;
  double corruption_fraction = 0.0;
};

struct FixtureSpec {
  SceneLayout scene;
  std::string target;
  int num_frames = 30;
  int num_points = 128;
  std::vector<MotionWaypoint> motion;  // first waypoint: frame 0 at the scene pose
  CameraIntrinsics intrinsics;
  Pose camera;                          // camera frame in world: Z forward, X right, Y down
  FixtureNoise noise;
  std::uint64_t seed = 0;
};

struct Fixture {
  TrackBundle bundle;
  GraspPose grasp;
  ObjectTrajectory ground_truth;     // camera frame, relative to frame 0
  std::vector<Pose> world_path;      // target world pose per frame
  std::vector<int> corrupted_ids;    // sorted
};

/// 320 x 240 pinhole, f = 300 px, principal point at the image centre.
CameraIntrinsics default_fixture_intrinsics();

/// Downward-looking camera `height` metres above the centre of the target's top face.
Pose top_down_camera(const SceneLayout& scene, const std::string& target, double height = 0.6);

/// Single constant-velocity segment: translate by `translation` and turn by
/// `yaw` radians about world Z over `frames` frames.
std::vector<MotionWaypoint> linear_motion(const Pose& start, const Vec3& translation, double yaw,
                                          int frames);

Pose pose_at_frame(const std::vector<MotionWaypoint>& motion, int frame);

/// First frame at which the moving target penetrates another scene object by
/// more than `tolerance`; nullopt when the script is collision free.
struct Penetration {
  int frame = 0;
  std::string other;
};
std::optional<Penetration> first_penetration(const FixtureSpec& spec, double tolerance = 1e-4);

/// Throws SchemaError / SemanticError on an invalid spec, including a script
/// that drives the target through another object (index = frame).
void validate_fixture_spec(const FixtureSpec& spec);

/// Ray-cast rendering of the scene boxes and ground plane. Throws
/// TargetOutOfView (index = frame) and MaskTooSmall.
Fixture synth_fixture(const FixtureSpec& spec);

/// Fixture spec file: {scene_file | scene, target, num_frames, num_points, seed,
/// camera?: {intrinsics, pose}, motion: {waypoints | translation_m + yaw_deg}, noise?}.
/// Relative scene_file paths resolve against `base_dir`.
FixtureSpec parse_fixture_spec(const std::string& text, const std::string& base_dir);
FixtureSpec load_fixture_spec(const std::string& path);

}  // namespace groundtrace
