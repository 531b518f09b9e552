#include "groundtrace/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "groundtrace/errors.hpp"

namespace groundtrace {

bool is_finite(const Vec3& v) { return v.allFinite(); }

// --- UnitQuat -------------------------------------------------------------

UnitQuat::UnitQuat(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0) || !std::isfinite(n)) {
    return;  // identity
  }
  const double s = (w < 0.0 ? -1.0 : 1.0) / n;
  w_ = w * s;
  x_ = x * s;
  y_ = y * s;
  z_ = z * s;
}

UnitQuat::UnitQuat(const Eigen::Quaterniond& q) : UnitQuat(q.w(), q.x(), q.y(), q.z()) {}

UnitQuat UnitQuat::from_axis_angle(const Vec3& axis, double angle_rad) {
  const double n = axis.norm();
  if (n == 0.0) return {};
  const Vec3 a = axis / n;
  const double h = 0.5 * angle_rad;
  const double s = std::sin(h);
  return {std::cos(h), a.x() * s, a.y() * s, a.z() * s};
}

UnitQuat UnitQuat::from_rotation_vector(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-300) return {};
  return from_axis_angle(rotvec / angle, angle);
}

UnitQuat UnitQuat::from_matrix(const Mat3& r) { return UnitQuat(Eigen::Quaterniond(r)); }

Mat3 UnitQuat::matrix() const { return eigen().toRotationMatrix(); }

Vec3 UnitQuat::rotate(const Vec3& v) const {
  // v' = v + 2w (q x v) + 2 q x (q x v)
  const Vec3 q(x_, y_, z_);
  const Vec3 t = 2.0 * q.cross(v);
  return v + w_ * t + q.cross(t);
}

Vec3 UnitQuat::rotation_vector() const {
  const Vec3 q(x_, y_, z_);
  const double s = q.norm();
  if (s < 1e-300) return Vec3::Zero();
  const double angle = 2.0 * std::atan2(s, w_);
  return q * (angle / s);
}

double UnitQuat::norm() const { return std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_); }

UnitQuat operator*(const UnitQuat& a, const UnitQuat& b) {
  return {a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
          a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
          a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
          a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_};
}

double geodesic_angle(const UnitQuat& a, const UnitQuat& b) {
  // 2 acos|<a, b>|, evaluated through atan2 so tiny angles keep full precision.
  const UnitQuat r = a.conjugate() * b;
  const double s = std::sqrt(r.x() * r.x() + r.y() * r.y() + r.z() * r.z());
  return 2.0 * std::atan2(s, std::abs(r.w()));
}

UnitQuat slerp(const UnitQuat& a, const UnitQuat& b, double t) {
  return UnitQuat(a.eigen().slerp(t, b.eigen()));
}

// --- Pose -----------------------------------------------------------------

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation.rotate(b.translation) + a.translation, a.rotation * b.rotation};
}

Pose inverse(const Pose& p) {
  const UnitQuat r = p.rotation.conjugate();
  return {-r.rotate(p.translation), r};
}

double translation_distance(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

double rotation_distance(const Pose& a, const Pose& b) {
  return geodesic_angle(a.rotation, b.rotation);
}

// --- Aabb -----------------------------------------------------------------

Aabb Aabb::from_center_extent(const Vec3& center, const Vec3& extent) {
  return {center - 0.5 * extent, center + 0.5 * extent};
}

bool Aabb::valid() const {
  return is_finite(min) && is_finite(max) && (min.array() <= max.array()).all();
}

Vec3 aabb_overlap(const Aabb& a, const Aabb& b) {
  return a.max.cwiseMin(b.max) - a.min.cwiseMax(b.min);
}

bool aabb_intersect(const Aabb& a, const Aabb& b, double tolerance) {
  const Vec3 overlap = aabb_overlap(a, b);
  return (overlap.array() > tolerance + kOverlapSlack).all();
}

bool boxes_intersect(const Pose& a, const Vec3& extent_a, const Pose& b, const Vec3& extent_b, double tolerance) {
  const Eigen::Matrix3d ra = a.rotation.matrix(), rb = b.rotation.matrix();
  const Vec3 ha = 0.5 * extent_a, hb = 0.5 * extent_b;
  const Vec3 d = b.translation - a.translation;
  // Overlap of the two projections on a unit axis.
  const auto overlap = [&](const Vec3& axis) {
    double r = 0.0;
    for (int i = 0; i < 3; ++i) r += ha[i] * std::abs(ra.col(i).dot(axis)) + hb[i] * std::abs(rb.col(i).dot(axis));
    return r - std::abs(d.dot(axis));
  };
  for (int i = 0; i < 3; ++i) {
    if (overlap(ra.col(i)) <= tolerance + kOverlapSlack) return false;
    if (overlap(rb.col(i)) <= tolerance + kOverlapSlack) return false;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Vec3 axis = ra.col(i).cross(rb.col(j));
      const double n = axis.norm();
      // Parallel edges: the face axes above already cover this direction.
      if (n < 1e-9) continue;
      if (overlap(axis / n) <= tolerance + kOverlapSlack) return false;
    }
  }
  return true;
}

// --- Camera ---------------------------------------------------------------

bool CameraIntrinsics::valid() const {
  return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width &&
         cy >= 0.0 && cy < height;
}

bool CameraIntrinsics::contains(double u, double v) const {
  return u >= 0.0 && v >= 0.0 && u < width && v < height;
}

Vec3 backproject(double u, double v, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "depth must be positive, got " + std::to_string(depth));
  }
  if (!k.contains(u, v)) {
    throw Error(ErrorCode::OutOfBounds,
                "pixel (" + std::to_string(u) + ", " + std::to_string(v) + ") outside image");
  }
  return {(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth};
}

Pixel project(const Vec3& p, const CameraIntrinsics& k) {
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

// --- Rigid registration ---------------------------------------------------

std::size_t RigidFitResult::inlier_count() const {
  return static_cast<std::size_t>(std::count(inlier_flags.begin(), inlier_flags.end(), true));
}

namespace {

Vec3 centroid(std::span<const Vec3> pts) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

double rms_of(const Pose& t, std::span<const Vec3> src, std::span<const Vec3> dst) {
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (t.apply(src[i]) - dst[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(src.size()));
}

Pose kabsch(std::span<const Vec3> src, std::span<const Vec3> dst) {
  const Vec3 cs = centroid(src);
  const Vec3 cd = centroid(dst);
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[0] > 1e-300) || sv[1] <= 1e-10 * sv[0]) {
    throw Error(ErrorCode::DegenerateConfiguration,
                "centered covariance has rank < 2 (collinear or coincident points)");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = v * d * u.transpose();
  const UnitQuat q = UnitQuat::from_matrix(r);
  return {cd - q.rotate(cs), q};
}

void check_sizes(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size() || src.size() < 3) {
    throw Error(ErrorCode::DegenerateConfiguration,
                "need >= 3 paired points, got " + std::to_string(src.size()) + " and " +
                    std::to_string(dst.size()));
  }
}

}  // namespace

RigidFitResult rigid_fit(std::span<const Vec3> src, std::span<const Vec3> dst) {
  check_sizes(src, dst);
  RigidFitResult out;
  out.transform = kabsch(src, dst);
  out.inlier_flags.assign(src.size(), true);
  out.rms_residual = rms_of(out.transform, src, dst);
  return out;
}

RigidFitResult ransac_rigid_fit(std::span<const Vec3> src, std::span<const Vec3> dst,
                                const RansacParams& params) {
  check_sizes(src, dst);
  const std::size_t n = src.size();
  const double thr2 = params.inlier_threshold * params.inlier_threshold;

  auto classify = [&](const Pose& t, std::vector<bool>& flags) {
    std::size_t count = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r2 = (t.apply(src[i]) - dst[i]).squaredNorm();
      flags[i] = r2 <= thr2;
      if (flags[i]) {
        ++count;
        sum += r2;
      }
    }
    return std::pair{count, sum};
  };

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  std::vector<bool> flags(n), best_flags(n, false);
  std::size_t best_count = 0;
  double best_sum = 0.0;
  std::array<Vec3, 3> s{}, d{};

  for (int it = 0; it < params.max_iterations && best_count < n; ++it) {
    std::array<std::size_t, 3> idx{};
    idx[0] = pick(rng);
    do idx[1] = pick(rng); while (idx[1] == idx[0]);
    do idx[2] = pick(rng); while (idx[2] == idx[0] || idx[2] == idx[1]);
    for (int k = 0; k < 3; ++k) {
      s[k] = src[idx[k]];
      d[k] = dst[idx[k]];
    }
    Pose candidate;
    try {
      candidate = kabsch(s, d);
    } catch (const Error&) {
      continue;
    }
    const auto [count, sum] = classify(candidate, flags);
    if (count > best_count || (count == best_count && count > 0 && sum < best_sum)) {
      best_count = count;
      best_sum = sum;
      best_flags = flags;
    }
  }

  if (best_count < 3) {
    throw Error(ErrorCode::NoConsensus,
                "best consensus has " + std::to_string(best_count) + " inliers (< 3)");
  }

  // Refit on the consensus set until the inlier set stops changing.
  std::vector<Vec3> in_src, in_dst;
  Pose transform;
  for (int round = 0; round < 10; ++round) {
    in_src.clear();
    in_dst.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (best_flags[i]) {
        in_src.push_back(src[i]);
        in_dst.push_back(dst[i]);
      }
    }
    try {
      transform = kabsch(in_src, in_dst);
    } catch (const Error&) {
      throw Error(ErrorCode::NoConsensus, "consensus set is degenerate");
    }
    const auto [count, sum] = classify(transform, flags);
    if (flags == best_flags || count < 3) break;
    best_flags = flags;
  }

  RigidFitResult out;
  out.transform = transform;
  out.inlier_flags = best_flags;
  out.rms_residual = rms_of(transform, in_src, in_dst);
  return out;
}

}  // namespace groundtrace
