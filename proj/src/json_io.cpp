#include "groundtrace/json_io.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

namespace groundtrace {

namespace fs = std::filesystem;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  // Unique temp name so concurrent writers of the same content never share a file.
  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = target.string() + ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "rename to " + path + ": " + ec.message());
}

json parse_json(const std::string& text, ErrorCode on_error, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(on_error, what + ": " + e.what());
  }
}

Vec3 vec3_from_json(const json& j, ErrorCode on_error, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw Error(on_error, what + ": expected array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw Error(on_error, what + ": expected array of 3 numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

ordered_json vec3_to_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

ordered_json pose_to_json(const Pose& p) {
  ordered_json j;
  j["position_m"] = vec3_to_json(p.translation);
  j["quaternion_wxyz"] =
      ordered_json::array({p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z()});
  return j;
}

Pose pose_from_json(const json& j, ErrorCode on_error, const std::string& what) {
  if (!j.is_object() || !j.contains("position_m") || !j.contains("quaternion_wxyz")) {
    throw Error(on_error, what + ": expected {position_m, quaternion_wxyz}");
  }
  const json& q = j["quaternion_wxyz"];
  if (!q.is_array() || q.size() != 4) throw Error(on_error, what + ": quaternion_wxyz needs 4 numbers");
  for (const auto& e : q) {
    if (!e.is_number()) throw Error(on_error, what + ": quaternion_wxyz needs 4 numbers");
  }
  Pose p;
  p.translation = vec3_from_json(j["position_m"], on_error, what + ".position_m");
  p.rotation = UnitQuat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                        q[3].get<double>());
  return p;
}

ordered_json intrinsics_to_json(const CameraIntrinsics& k) {
  ordered_json j;
  j["fx"] = k.fx;
  j["fy"] = k.fy;
  j["cx"] = k.cx;
  j["cy"] = k.cy;
  j["width"] = k.width;
  j["height"] = k.height;
  return j;
}

CameraIntrinsics intrinsics_from_json(const json& j, ErrorCode on_error) {
  CameraIntrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw Error(on_error, std::string("intrinsics: ") + e.what());
  }
  if (!k.valid()) throw Error(on_error, "intrinsics out of range");
  return k;
}

}  // namespace groundtrace
