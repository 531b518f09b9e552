#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <span>
#include <vector>

namespace groundtrace {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

bool is_finite(const Vec3& v);

/// Unit quaternion kept on the w >= 0 hemisphere.
///
/// Every constructor and operation re-normalizes, so the norm stays within
/// 1e-9 of one no matter how long a chain of products gets.
class UnitQuat {
 public:
  UnitQuat() = default;  // identity
  UnitQuat(double w, double x, double y, double z);
  explicit UnitQuat(const Eigen::Quaterniond& q);

  static UnitQuat identity() { return {}; }
  static UnitQuat from_axis_angle(const Vec3& axis, double angle_rad);
  static UnitQuat from_rotation_vector(const Vec3& rotvec);
  static UnitQuat from_matrix(const Mat3& r);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  Eigen::Quaterniond eigen() const { return {w_, x_, y_, z_}; }
  Mat3 matrix() const;
  Vec3 rotate(const Vec3& v) const;
  UnitQuat conjugate() const { return {w_, -x_, -y_, -z_}; }
  /// axis * angle, angle in [0, pi].
  Vec3 rotation_vector() const;
  double norm() const;

  friend UnitQuat operator*(const UnitQuat& a, const UnitQuat& b);
  friend bool operator==(const UnitQuat&, const UnitQuat&) = default;

 private:
  double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

/// Geodesic angle between two rotations: 2*acos(|<q1,q2>|).
double geodesic_angle(const UnitQuat& a, const UnitQuat& b);

UnitQuat slerp(const UnitQuat& a, const UnitQuat& b, double t);

/// Rigid transform mapping points from a child frame into a parent frame.
struct Pose {
  Vec3 translation = Vec3::Zero();
  UnitQuat rotation;

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {t, UnitQuat{}}; }

  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
  Eigen::Matrix4d matrix() const;

  friend bool operator==(const Pose& a, const Pose& b) {
    return a.translation == b.translation && a.rotation == b.rotation;
  }
};

/// a * b: applies b first, then a.
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

double translation_distance(const Pose& a, const Pose& b);
double rotation_distance(const Pose& a, const Pose& b);

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  static Aabb from_center_extent(const Vec3& center, const Vec3& extent);
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool valid() const;
};

/// Slack subtracted from overlap comparisons so that an overlap equal to the
/// tolerance (up to round-off in the box coordinates) does not count.
inline constexpr double kOverlapSlack = 1e-12;

/// Per-axis overlap length (negative when separated).
Vec3 aabb_overlap(const Aabb& a, const Aabb& b);

/// True iff the boxes overlap by more than `tolerance` on every axis.
bool aabb_intersect(const Aabb& a, const Aabb& b, double tolerance);

/// Oriented boxes (centre pose, full extents): true iff they overlap by more
/// than `tolerance` along every separating axis candidate.
bool boxes_intersect(const Pose& a, const Vec3& extent_a, const Pose& b, const Vec3& extent_b, double tolerance);

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  bool valid() const;
  bool contains(double u, double v) const;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Pinhole back-projection, depth measured along the optical axis.
Vec3 backproject(double u, double v, double depth, const CameraIntrinsics& k);
/// Forward projection of a camera-frame point with z > 0.
Pixel project(const Vec3& p, const CameraIntrinsics& k);

struct RigidFitResult {
  Pose transform;
  std::vector<bool> inlier_flags;
  double rms_residual = 0.0;

  std::size_t inlier_count() const;
};

/// Least-squares rotation + translation (no scale) with dst ~ T * src.
RigidFitResult rigid_fit(std::span<const Vec3> src, std::span<const Vec3> dst);

struct RansacParams {
  double inlier_threshold = 0.005;
  int max_iterations = 200;
  std::uint64_t seed = 0;
};

RigidFitResult ransac_rigid_fit(std::span<const Vec3> src, std::span<const Vec3> dst,
                                const RansacParams& params);

}  // namespace groundtrace
