#pragma once

#include <json.hpp>

#include <string>

#include "groundtrace/errors.hpp"
#include "groundtrace/geometry.hpp"

namespace groundtrace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Reads a whole file; MissingArtifact when it does not exist.
std::string read_text_file(const std::string& path);
/// Writes via temp file + rename. IoFailure on any error.
void write_file_atomic(const std::string& path, const std::string& content);

json parse_json(const std::string& text, ErrorCode on_error, const std::string& what);

Vec3 vec3_from_json(const json& j, ErrorCode on_error, const std::string& what);
ordered_json vec3_to_json(const Vec3& v);

/// {"position_m": [3], "quaternion_wxyz": [4]}
ordered_json pose_to_json(const Pose& p);
Pose pose_from_json(const json& j, ErrorCode on_error, const std::string& what);

ordered_json intrinsics_to_json(const CameraIntrinsics& k);
CameraIntrinsics intrinsics_from_json(const json& j, ErrorCode on_error);

}  // namespace groundtrace
