#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "groundtrace/geometry.hpp"

namespace groundtrace {

// Binary raster, row-major, 1 = target object.
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  MaskImage() = default;
  MaskImage(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height &&
           bits[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set(int x, int y, bool on) { bits[static_cast<std::size_t>(y) * width + x] = on ? 1 : 0; }
  /// Lookup of a continuous pixel coordinate; pixel (x, y) covers [x, x+1) x [y, y+1).
  bool contains(double u, double v) const;
  std::size_t area() const;

  friend bool operator==(const MaskImage&, const MaskImage&) = default;
};

// Depth along the optical axis in meters, row-major; 0 marks an invalid pixel.
// Pixel (x, y) stores the depth seen through its center (x + 0.5, y + 0.5).
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthFrame() = default;
  DepthFrame(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0f) {}

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const DepthFrame&, const DepthFrame&) = default;
};

/// Per-frame 2D tracks of N points plus the depth rasters and frame-0 mask.
struct TrackBundle {
  int num_frames = 0;
  int num_points = 0;
  std::vector<Pixel> uv;               // [frame * num_points + point]
  std::vector<std::uint8_t> visible;   // same indexing
  CameraIntrinsics intrinsics;
  std::vector<DepthFrame> depth;       // num_frames entries
  MaskImage mask;

  std::size_t index(int frame, int point) const {
    return static_cast<std::size_t>(frame) * num_points + point;
  }

  friend bool operator==(const TrackBundle&, const TrackBundle&) = default;
};

/// Checks the bundle invariants (dimensions, visible uv in bounds, frame-0
/// points inside the mask). Throws SchemaError / OutOfBounds / SemanticError.
void validate_bundle(const TrackBundle& bundle);

struct LiftedTracks {
  int num_frames = 0;
  int num_points = 0;
  std::vector<Vec3> points;          // camera frame, [frame * num_points + point]
  std::vector<std::uint8_t> valid;

  std::size_t index(int frame, int point) const {
    return static_cast<std::size_t>(frame) * num_points + point;
  }
  bool is_valid(int frame, int point) const { return valid[index(frame, point)] != 0; }
  const Vec3& at(int frame, int point) const { return points[index(frame, point)]; }
};

/// Object motion relative to frame 0: poses[t] maps frame-0 coordinates of
/// object points to their frame-t coordinates; poses[0] is the identity.
struct ObjectTrajectory {
  std::vector<Pose> poses;
  std::vector<double> per_frame_rms;
  std::set<int> inlier_point_ids;
  std::set<int> dropped_point_ids;
};

struct GroundingParams {
  int num_points = 128;
  RansacParams ransac{};           // 5 mm threshold, 200 iterations
  double outlier_threshold_scale = 3.0;
  /// Lower bound on the MAD used by the robust track filter, so that clean,
  /// noise-free tracks are not rejected over round-off sized residuals.
  double mad_floor = 1e-6;
  int smooth_window = 5;
};

/// Jittered-grid sampling of n points inside the mask interior (pixels whose
/// 5x5 neighbourhood is entirely set). Deterministic in seed. Throws MaskTooSmall.
std::vector<Pixel> sample_mask_points(const MaskImage& mask, int n, std::uint64_t seed);

/// Bilinear depth at a continuous pixel coordinate; nullopt when any of the
/// four contributing pixels is invalid.
std::optional<double> sample_depth(const DepthFrame& frame, double u, double v);

LiftedTracks lift_tracks(const TrackBundle& bundle);

/// Registers each frame against frame 0 with RANSAC. Throws
/// InsufficientCorrespondences (index = frame) and NoConsensus.
ObjectTrajectory fuse_rigid_trajectory(const LiftedTracks& lifted, const GroundingParams& params);

/// Drops tracks whose median residual is anomalous (median + scale * MAD) or
/// above the absolute RANSAC threshold, then refits every frame on survivors.
ObjectTrajectory remove_outlier_tracks(const ObjectTrajectory& trajectory,
                                       const LiftedTracks& lifted, double threshold_scale,
                                       const GroundingParams& params);

/// Centered moving average with windows that shrink symmetrically at the ends.
/// Translations are averaged as trajectories of `pivot` (origin by default);
/// rotations by normalized, hemisphere-aligned quaternion mean.
ObjectTrajectory smooth_trajectory(const ObjectTrajectory& trajectory, int window,
                                   const Vec3& pivot = Vec3::Zero());

/// Converts a camera-frame trajectory into motion expressed in the object's
/// own frame at t = 0, given the camera and object world poses at t = 0.
ObjectTrajectory reexpress_in_object_frame(const ObjectTrajectory& trajectory,
                                           const Pose& camera_world, const Pose& object_world0);

struct GroundingResult {
  ObjectTrajectory trajectory;
  LiftedTracks lifted;
  Vec3 pivot = Vec3::Zero();
};

/// lift -> fuse -> remove outliers -> smooth (pivot: frame-0 centroid of survivors).
GroundingResult ground_tracks(const TrackBundle& bundle, const GroundingParams& params);

}  // namespace groundtrace
