#include "groundtrace/export.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "groundtrace/errors.hpp"
#include "groundtrace/json_io.hpp"

namespace groundtrace {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

}  // namespace

std::string write_object_trajectory(const ObjectTrajectory& trajectory, const TrajectoryFileInfo& info) {
  ordered_json header;
  header["num_frames"] = trajectory.poses.size();
  header["frame_dt_s"] = info.frame_dt_s;
  header["target"] = info.target;
  header["camera_pose"] = info.camera_pose ? pose_to_json(*info.camera_pose) : ordered_json();
  header["object_pose0"] = info.object_pose0 ? pose_to_json(*info.object_pose0) : ordered_json();
  header["object_extent_m"] = info.object_extent ? vec3_to_json(*info.object_extent) : ordered_json();
  std::string out = header.dump() + "\n";
  for (std::size_t t = 0; t < trajectory.poses.size(); ++t) {
    ordered_json r;
    r["frame"] = t;
    const ordered_json p = pose_to_json(trajectory.poses[t]);
    r["position_m"] = p["position_m"];
    r["quaternion_wxyz"] = p["quaternion_wxyz"];
    r["rms_m"] = t < trajectory.per_frame_rms.size() ? trajectory.per_frame_rms[t] : 0.0;
    out += r.dump() + "\n";
  }
  return out;
}

ObjectTrajectory parse_object_trajectory(const std::string& text, TrajectoryFileInfo* info) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaError, "trajectory file is empty");
  const json h = parse_json(line, ErrorCode::SyntaxError, "trajectory header");
  if (!h.is_object() || !h.contains("num_frames") || !h["num_frames"].is_number_unsigned() ||
      !h.contains("frame_dt_s") || !h["frame_dt_s"].is_number()) {
    throw Error(ErrorCode::SchemaError, "trajectory header needs num_frames and frame_dt_s");
  }
  TrajectoryFileInfo parsed;
  parsed.frame_dt_s = h["frame_dt_s"].get<double>();
  if (h.contains("target") && h["target"].is_string()) parsed.target = h["target"].get<std::string>();
  if (h.contains("camera_pose") && !h["camera_pose"].is_null()) {
    parsed.camera_pose = pose_from_json(h["camera_pose"], ErrorCode::SchemaError, "camera_pose");
  }
  if (h.contains("object_pose0") && !h["object_pose0"].is_null()) {
    parsed.object_pose0 = pose_from_json(h["object_pose0"], ErrorCode::SchemaError, "object_pose0");
  }
  if (h.contains("object_extent_m") && !h["object_extent_m"].is_null()) {
    parsed.object_extent = vec3_from_json(h["object_extent_m"], ErrorCode::SchemaError, "object_extent_m");
  }
  const auto n = h["num_frames"].get<std::size_t>();
  ObjectTrajectory tr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json r = parse_json(line, ErrorCode::SyntaxError, "trajectory record");
    if (!r.is_object() || !r.contains("frame") || r["frame"] != tr.poses.size()) {
      throw Error(ErrorCode::SchemaError, "trajectory records must be numbered 0..num_frames-1",
                  static_cast<std::int64_t>(tr.poses.size()));
    }
    tr.poses.push_back(pose_from_json(r, ErrorCode::SchemaError, "trajectory record"));
    tr.per_frame_rms.push_back(r.contains("rms_m") && r["rms_m"].is_number() ? r["rms_m"].get<double>() : 0.0);
  }
  if (tr.poses.size() != n) {
    throw Error(ErrorCode::SchemaError, "trajectory has " + std::to_string(tr.poses.size()) + " records, header says " +
                                            std::to_string(n));
  }
  if (info != nullptr) *info = parsed;
  return tr;
}

ExportFormat parse_export_format(const std::string& name) {
  if (name == "obj") return ExportFormat::Obj;
  if (name == "csv") return ExportFormat::Csv;
  if (name == "svg") return ExportFormat::Svg;
  throw Error(ErrorCode::UnknownFormat, "unknown export format '" + name + "' (obj, csv, svg)");
}

std::vector<TrajectorySample> samples_from_episode(const Episode& episode) {
  std::vector<TrajectorySample> out;
  out.reserve(episode.steps.size());
  for (const EpisodeStep& s : episode.steps) out.push_back({s.timestamp_s, s.pose(), s.gripper});
  return out;
}

std::vector<TrajectorySample> samples_from_object_trajectory(const ObjectTrajectory& trajectory, double frame_dt) {
  std::vector<TrajectorySample> out;
  out.reserve(trajectory.poses.size());
  for (std::size_t t = 0; t < trajectory.poses.size(); ++t) {
    out.push_back({static_cast<double>(t) * frame_dt, trajectory.poses[t], 0});
  }
  return out;
}

std::string export_scene_obj(const SceneLayout& scene) {
  std::string out = "# groundtrace scene, " + std::to_string(scene.objects.size()) + " boxes\n";
  int base = 1;
  for (const PlacedObject& o : scene.objects) {
    out += "o " + o.name + "\n";
    const Vec3 h = 0.5 * o.extent;
    for (int i = 0; i < 8; ++i) {
      const Vec3 local((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z());
      const Vec3 v = o.pose.apply(local);
      out += "v " + fmt("%.9g", v.x()) + " " + fmt("%.9g", v.y()) + " " + fmt("%.9g", v.z()) + "\n";
    }
    // Corner i has bit 0 = +x, bit 1 = +y, bit 2 = +z; faces wound outward.
    static constexpr int kFaces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                                         {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
    for (const auto& f : kFaces) {
      out += "f";
      for (int c : f) out += " " + std::to_string(base + c);
      out += "\n";
    }
    base += 8;
  }
  return out;
}

std::string export_trajectory_csv(const std::vector<TrajectorySample>& samples) {
  std::string out = "t,x,y,z,qw,qx,qy,qz,gripper\n";
  for (const TrajectorySample& s : samples) {
    const Vec3& p = s.pose.translation;
    const UnitQuat& q = s.pose.rotation;
    for (double v : {s.t, p.x(), p.y(), p.z(), q.w(), q.x(), q.y(), q.z()}) out += fmt("%.9g", v) + ",";
    out += std::to_string(s.gripper) + "\n";
  }
  return out;
}

std::string export_trajectory_svg(const std::vector<TrajectorySample>& samples) {
  constexpr double kSize = 400.0, kMargin = 20.0;
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  if (!samples.empty()) {
    xmin = xmax = samples[0].pose.translation.x();
    ymin = ymax = samples[0].pose.translation.y();
  }
  for (const TrajectorySample& s : samples) {
    xmin = std::min(xmin, s.pose.translation.x());
    xmax = std::max(xmax, s.pose.translation.x());
    ymin = std::min(ymin, s.pose.translation.y());
    ymax = std::max(ymax, s.pose.translation.y());
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
  const double scale = (kSize - 2 * kMargin) / span;
  std::string pts;
  for (const TrajectorySample& s : samples) {
    const double x = kMargin + (s.pose.translation.x() - xmin) * scale;
    const double y = kSize - kMargin - (s.pose.translation.y() - ymin) * scale;
    if (!pts.empty()) pts += " ";
    pts += fmt("%.3f", x) + "," + fmt("%.3f", y);
  }
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" viewBox=\"0 0 400 400\">\n";
  out += "  <rect width=\"400\" height=\"400\" fill=\"white\"/>\n";
  out += "  <polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
  out += "</svg>\n";
  return out;
}

std::string export_file(const std::string& input_path, ExportFormat format) {
  const std::string text = read_text_file(input_path);
  const json head = json::parse(first_line(text), nullptr, false);
  const bool trajectory = head.is_object() && head.contains("num_frames") && head.contains("frame_dt_s");
  const bool records = head.is_object() && head.contains("timestamp_s");
  if (!trajectory && !records) {
    // Scenes are multi-line documents; parse the whole file.
    const SceneLayout scene = parse_scene(text);
    if (format != ExportFormat::Obj) throw Error(ErrorCode::UnknownFormat, "scenes export to obj only");
    return export_scene_obj(scene);
  }
  if (format == ExportFormat::Obj) throw Error(ErrorCode::UnknownFormat, "trajectories export to csv or svg");
  std::vector<TrajectorySample> samples;
  if (trajectory) {
    TrajectoryFileInfo info;
    const ObjectTrajectory tr = parse_object_trajectory(text, &info);
    samples = samples_from_object_trajectory(tr, info.frame_dt_s);
  } else {
    // Episode record files carry a count in the meta file; the records alone
    // are enough to export.
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) n += line.empty() ? 0 : 1;
    ordered_json meta;
    meta["episode_id"] = 0;
    meta["sub_task_index"] = 0;
    meta["num_steps"] = n;
    meta["context"] = {{"prompt", ""}, {"manifest_hash", ""}, {"scene_file", ""}, {"seed", 0}};
    meta["robot_base"] = {{"position_m", {0, 0, 0}}, {"quaternion_wxyz", {1, 0, 0, 0}}};
    meta["sub_task_starts"] = {0};
    meta["phases"] = ordered_json::array();
    meta["quality"] = {{"per_frame_rms_m", ordered_json::array()}, {"dropped_tracks", ordered_json::array()},
                       {"ik_max_position_error_m", 0.0}, {"ik_max_angle_error_rad", 0.0}};
    samples = samples_from_episode(parse_episode(text, meta.dump()));
  }
  return format == ExportFormat::Csv ? export_trajectory_csv(samples) : export_trajectory_svg(samples);
}

}  // namespace groundtrace
