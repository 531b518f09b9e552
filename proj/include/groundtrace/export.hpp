#pragma once

#include <optional>
#include <string>
#include <vector>

#include "groundtrace/dataset.hpp"
#include "groundtrace/grounding.hpp"
#include "groundtrace/layout.hpp"

namespace groundtrace {

/// Context stored in the header of an object trajectory file. Poses in the
/// records are relative to frame 0 in the camera frame; the optional fields
/// let later stages re-express them in the object frame.
struct TrajectoryFileInfo {
  double frame_dt_s = 1.0 / 30.0;
  std::optional<Pose> camera_pose;
  std::optional<Pose> object_pose0;
  std::optional<Vec3> object_extent;
  std::string target;
};

/// JSON lines: header {num_frames, frame_dt_s, target, camera_pose,
/// object_pose0, object_extent_m} then one {frame, position_m,
/// quaternion_wxyz, rms_m} record per frame.
std::string write_object_trajectory(const ObjectTrajectory& trajectory, const TrajectoryFileInfo& info);
/// SyntaxError / SchemaError.
ObjectTrajectory parse_object_trajectory(const std::string& text, TrajectoryFileInfo* info = nullptr);

enum class ExportFormat { Obj, Csv, Svg };

/// UnknownFormat for anything but obj, csv, svg.
ExportFormat parse_export_format(const std::string& name);

struct TrajectorySample {
  double t = 0.0;
  Pose pose;
  int gripper = 0;
};

std::vector<TrajectorySample> samples_from_episode(const Episode& episode);
std::vector<TrajectorySample> samples_from_object_trajectory(const ObjectTrajectory& trajectory, double frame_dt);

/// Wavefront text: one object group per box, 8 vertices and 6 quad faces each.
std::string export_scene_obj(const SceneLayout& scene);
/// Header t,x,y,z,qw,qx,qy,qz,gripper then one row per sample.
std::string export_trajectory_csv(const std::vector<TrajectorySample>& samples);
/// Top view (X right, Y up) of the positions as a single polyline.
std::string export_trajectory_svg(const std::vector<TrajectorySample>& samples);

/// Dispatches on the file content: a scene layout exports to obj; an
/// episode record file or an object trajectory file exports to csv or svg.
/// UnknownFormat for any other pairing.
std::string export_file(const std::string& input_path, ExportFormat format);

}  // namespace groundtrace
