#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <numbers>
#include <random>
#include <vector>

#include "groundtrace/geometry.hpp"

namespace testutil {

using groundtrace::Pose;
using groundtrace::UnitQuat;
using groundtrace::Vec3;

inline double deg(double d) { return d * std::numbers::pi / 180.0; }

inline Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline UnitQuat random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return UnitQuat(n(rng), n(rng), n(rng), n(rng));
}

inline Pose random_pose(std::mt19937_64& rng, double span = 1.0) {
  return {random_vec(rng, -span, span), random_quat(rng)};
}

// Rotation about Z as an explicit 4x4 homogeneous matrix, independent of UnitQuat.
inline Eigen::Matrix4d rz_matrix(double angle, const Vec3& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = std::cos(angle);
  m(0, 1) = -std::sin(angle);
  m(1, 0) = std::sin(angle);
  m(1, 1) = std::cos(angle);
  m(0, 3) = t.x();
  m(1, 3) = t.y();
  m(2, 3) = t.z();
  return m;
}

inline double max_abs_diff(const Eigen::Matrix4d& a, const Eigen::Matrix4d& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Fresh, empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const std::filesystem::path p = std::filesystem::temp_directory_path() / ("groundtrace_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace testutil
