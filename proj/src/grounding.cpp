#include "groundtrace/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "groundtrace/errors.hpp"
#include "groundtrace/hash.hpp"

namespace groundtrace {

bool MaskImage::contains(double u, double v) const {
  if (!(u >= 0.0) || !(v >= 0.0)) return false;
  return at(static_cast<int>(std::floor(u)), static_cast<int>(std::floor(v)));
}

std::size_t MaskImage::area() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

void validate_bundle(const TrackBundle& b) {
  const std::size_t n = static_cast<std::size_t>(b.num_frames) * b.num_points;
  if (b.num_frames < 1 || b.num_points < 0 || b.uv.size() != n || b.visible.size() != n) {
    throw Error(ErrorCode::SchemaError, "track arrays do not match num_frames x num_points");
  }
  if (!b.intrinsics.valid()) throw Error(ErrorCode::SchemaError, "invalid camera intrinsics");
  if (static_cast<int>(b.depth.size()) != b.num_frames) {
    throw Error(ErrorCode::SchemaError, "expected one depth frame per video frame");
  }
  const int w = b.intrinsics.width, h = b.intrinsics.height;
  for (const auto& d : b.depth) {
    if (d.width != w || d.height != h || d.values.size() != static_cast<std::size_t>(w) * h) {
      throw Error(ErrorCode::SchemaError, "depth frame size differs from the camera image");
    }
  }
  if (b.mask.width != w || b.mask.height != h) {
    throw Error(ErrorCode::SchemaError, "mask size differs from the camera image");
  }
  for (int t = 0; t < b.num_frames; ++t) {
    for (int i = 0; i < b.num_points; ++i) {
      const std::size_t k = b.index(t, i);
      if (!b.visible[k]) continue;
      if (!b.intrinsics.contains(b.uv[k].u, b.uv[k].v)) {
        throw Error(ErrorCode::OutOfBounds, "visible track " + std::to_string(i) + " leaves the image",
                    t);
      }
      if (t == 0 && !b.mask.contains(b.uv[k].u, b.uv[k].v)) {
        throw Error(ErrorCode::SemanticError,
                    "track " + std::to_string(i) + " starts outside the object mask", 0);
      }
    }
  }
}

// --- sampling -------------------------------------------------------------

namespace {

// A 2-pixel erosion keeps every bilinear depth neighbour of a sample on the
// object even after the silhouette moves rigidly by sub-pixel amounts.
constexpr int kInteriorMargin = 2;

MaskImage interior_of(const MaskImage& mask) {
  MaskImage out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      bool all = true;
      for (int dy = -kInteriorMargin; dy <= kInteriorMargin && all; ++dy) {
        for (int dx = -kInteriorMargin; dx <= kInteriorMargin && all; ++dx) {
          all = mask.at(x + dx, y + dy);
        }
      }
      out.set(x, y, all);
    }
  }
  return out;
}

struct Cell {
  int x0, y0;
  std::vector<std::pair<int, int>> pixels;
};

std::vector<Cell> occupied_cells(const MaskImage& interior, int size) {
  std::vector<Cell> cells;
  for (int y0 = 0; y0 < interior.height; y0 += size) {
    for (int x0 = 0; x0 < interior.width; x0 += size) {
      Cell c{x0, y0, {}};
      for (int y = y0; y < std::min(y0 + size, interior.height); ++y) {
        for (int x = x0; x < std::min(x0 + size, interior.width); ++x) {
          if (interior.at(x, y)) c.pixels.emplace_back(x, y);
        }
      }
      if (!c.pixels.empty()) cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::size_t count_cells(const MaskImage& interior, int size) {
  std::size_t count = 0;
  for (int y0 = 0; y0 < interior.height; y0 += size) {
    for (int x0 = 0; x0 < interior.width; x0 += size) {
      bool hit = false;
      for (int y = y0; y < std::min(y0 + size, interior.height) && !hit; ++y) {
        for (int x = x0; x < std::min(x0 + size, interior.width) && !hit; ++x) hit = interior.at(x, y);
      }
      count += hit ? 1 : 0;
    }
  }
  return count;
}

}  // namespace

std::vector<Pixel> sample_mask_points(const MaskImage& mask, int n, std::uint64_t seed) {
  if (n <= 0) return {};
  const MaskImage interior = interior_of(mask);
  const std::size_t area = interior.area();
  const auto need = static_cast<std::size_t>(n);
  if (area < need) {
    throw Error(ErrorCode::MaskTooSmall, "mask interior has " + std::to_string(area) +
                                             " pixels, need " + std::to_string(n));
  }
  // Largest grid cell that still leaves at least n occupied cells.
  int size = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(area) / n)));
  while (size > 1 && count_cells(interior, size) < need) --size;
  while (count_cells(interior, size + 1) >= need) ++size;

  const std::vector<Cell> cells = occupied_cells(interior, size);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Evenly strided subset of the occupied cells with a random phase.
  const double stride = static_cast<double>(cells.size()) / n;
  const double phase = unit(rng);
  std::vector<Pixel> out;
  out.reserve(need);
  for (int k = 0; k < n; ++k) {
    const auto ci = std::min(cells.size() - 1, static_cast<std::size_t>((k + phase) * stride));
    const Cell& cell = cells[ci];
    const auto pick = std::uniform_int_distribution<std::size_t>(0, cell.pixels.size() - 1)(rng);
    const auto [x, y] = cell.pixels[pick];
    out.push_back({x + unit(rng), y + unit(rng)});
  }
  return out;
}

// --- lifting --------------------------------------------------------------

std::optional<double> sample_depth(const DepthFrame& frame, double u, double v) {
  const double x = u - 0.5, y = v - 0.5;
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  const double ax = x - fx0, ay = y - fy0;
  auto clampi = [](double i, int hi) { return std::clamp(static_cast<int>(i), 0, hi - 1); };
  const int x0 = clampi(fx0, frame.width), x1 = clampi(fx0 + 1, frame.width);
  const int y0 = clampi(fy0, frame.height), y1 = clampi(fy0 + 1, frame.height);
  const double d00 = frame.at(x0, y0), d10 = frame.at(x1, y0);
  const double d01 = frame.at(x0, y1), d11 = frame.at(x1, y1);
  if (!(d00 > 0.0) || !(d10 > 0.0) || !(d01 > 0.0) || !(d11 > 0.0)) return std::nullopt;
  return (1 - ay) * ((1 - ax) * d00 + ax * d10) + ay * ((1 - ax) * d01 + ax * d11);
}

LiftedTracks lift_tracks(const TrackBundle& bundle) {
  LiftedTracks out;
  out.num_frames = bundle.num_frames;
  out.num_points = bundle.num_points;
  out.points.assign(bundle.uv.size(), Vec3::Zero());
  out.valid.assign(bundle.uv.size(), 0);
  for (int t = 0; t < bundle.num_frames; ++t) {
    for (int i = 0; i < bundle.num_points; ++i) {
      const std::size_t k = bundle.index(t, i);
      const Pixel& px = bundle.uv[k];
      if (!bundle.visible[k] || !bundle.intrinsics.contains(px.u, px.v)) continue;
      const auto depth = sample_depth(bundle.depth[t], px.u, px.v);
      if (!depth) continue;
      out.points[k] = backproject(px.u, px.v, *depth, bundle.intrinsics);
      out.valid[k] = 1;
    }
  }
  return out;
}

// --- fusion ---------------------------------------------------------------

namespace {

std::vector<int> frame0_ids(const LiftedTracks& lifted) {
  std::vector<int> ids;
  for (int i = 0; i < lifted.num_points; ++i) {
    if (lifted.is_valid(0, i)) ids.push_back(i);
  }
  return ids;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

}  // namespace

ObjectTrajectory fuse_rigid_trajectory(const LiftedTracks& lifted, const GroundingParams& params) {
  const std::vector<int> ref = frame0_ids(lifted);
  if (ref.size() < 3) {
    throw Error(ErrorCode::InsufficientCorrespondences,
                "frame 0 has " + std::to_string(ref.size()) + " valid points", 0);
  }
  ObjectTrajectory out;
  out.poses.assign(lifted.num_frames, Pose::identity());
  out.per_frame_rms.assign(lifted.num_frames, 0.0);
  std::vector<int> outlier_frames(lifted.num_points, 0), seen_frames(lifted.num_points, 0);

  std::vector<Vec3> src, dst;
  std::vector<int> ids;
  for (int t = 1; t < lifted.num_frames; ++t) {
    src.clear();
    dst.clear();
    ids.clear();
    for (int i : ref) {
      if (!lifted.is_valid(t, i)) continue;
      ids.push_back(i);
      src.push_back(lifted.at(0, i));
      dst.push_back(lifted.at(t, i));
    }
    if (ids.size() < 3) {
      throw Error(ErrorCode::InsufficientCorrespondences,
                  "frame " + std::to_string(t) + " has " + std::to_string(ids.size()) +
                      " jointly valid points",
                  t);
    }
    RansacParams rp = params.ransac;
    rp.seed = mix_seed(params.ransac.seed, static_cast<std::uint64_t>(t));
    RigidFitResult fit;
    try {
      fit = ransac_rigid_fit(src, dst, rp);
    } catch (const Error& e) {
      throw Error(e.code(), "frame " + std::to_string(t) + ": " + e.detail(), t);
    }
    out.poses[t] = fit.transform;
    out.per_frame_rms[t] = fit.rms_residual;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      ++seen_frames[ids[k]];
      if (!fit.inlier_flags[k]) ++outlier_frames[ids[k]];
    }
  }

  std::vector<bool> in_ref(lifted.num_points, false);
  for (int i : ref) in_ref[i] = true;
  for (int i = 0; i < lifted.num_points; ++i) {
    const bool dropped = !in_ref[i] || 2 * outlier_frames[i] > seen_frames[i];
    (dropped ? out.dropped_point_ids : out.inlier_point_ids).insert(i);
  }
  return out;
}

namespace {

// Least-squares refit of one frame on the given ids, followed by a single
// trimming pass that removes points beyond the absolute threshold.
Pose refit_frame(const LiftedTracks& lifted, int t, const std::vector<int>& ids, double threshold,
                 double& rms) {
  std::vector<Vec3> src, dst;
  for (int i : ids) {
    if (!lifted.is_valid(t, i)) continue;
    src.push_back(lifted.at(0, i));
    dst.push_back(lifted.at(t, i));
  }
  if (src.size() < 3) {
    throw Error(ErrorCode::InsufficientCorrespondences,
                "frame " + std::to_string(t) + " has " + std::to_string(src.size()) +
                    " surviving points",
                t);
  }
  RigidFitResult fit = rigid_fit(src, dst);
  std::vector<Vec3> ks, kd;
  for (std::size_t k = 0; k < src.size(); ++k) {
    if ((fit.transform.apply(src[k]) - dst[k]).norm() <= threshold) {
      ks.push_back(src[k]);
      kd.push_back(dst[k]);
    }
  }
  if (ks.size() != src.size() && ks.size() >= 3) fit = rigid_fit(ks, kd);
  rms = fit.rms_residual;
  return fit.transform;
}

}  // namespace

ObjectTrajectory remove_outlier_tracks(const ObjectTrajectory& trajectory,
                                       const LiftedTracks& lifted, double threshold_scale,
                                       const GroundingParams& params) {
  const double abs_threshold = params.ransac.inlier_threshold;
  std::vector<int> ids(trajectory.inlier_point_ids.begin(), trajectory.inlier_point_ids.end());
  std::vector<double> medians;
  medians.reserve(ids.size());
  for (int i : ids) {
    std::vector<double> r;
    for (int t = 1; t < lifted.num_frames; ++t) {
      if (!lifted.is_valid(t, i) || !lifted.is_valid(0, i)) continue;
      r.push_back((trajectory.poses[t].apply(lifted.at(0, i)) - lifted.at(t, i)).norm());
    }
    medians.push_back(median_of(std::move(r)));
  }
  const double center = median_of(medians);
  std::vector<double> dev;
  dev.reserve(medians.size());
  for (double m : medians) dev.push_back(std::abs(m - center));
  const double mad = std::max(median_of(std::move(dev)), params.mad_floor);
  const double robust_threshold = center + threshold_scale * mad;

  ObjectTrajectory out;
  out.dropped_point_ids = trajectory.dropped_point_ids;
  std::vector<int> survivors;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (medians[k] > robust_threshold || medians[k] > abs_threshold) {
      out.dropped_point_ids.insert(ids[k]);
    } else {
      survivors.push_back(ids[k]);
      out.inlier_point_ids.insert(ids[k]);
    }
  }
  if (survivors.size() < 3) {
    throw Error(ErrorCode::TooFewSurvivors,
                std::to_string(survivors.size()) + " tracks survive outlier removal");
  }
  out.poses.assign(trajectory.poses.size(), Pose::identity());
  out.per_frame_rms.assign(trajectory.poses.size(), 0.0);
  for (int t = 1; t < lifted.num_frames; ++t) {
    out.poses[t] = refit_frame(lifted, t, survivors, abs_threshold, out.per_frame_rms[t]);
  }
  return out;
}

// --- smoothing ------------------------------------------------------------

ObjectTrajectory smooth_trajectory(const ObjectTrajectory& trajectory, int window,
                                   const Vec3& pivot) {
  const int n = static_cast<int>(trajectory.poses.size());
  if (window < 1 || window % 2 == 0 || window > std::max(n, 1)) {
    throw Error(ErrorCode::ConfigError,
                "smoothing window must be odd and in [1, " + std::to_string(n) + "]");
  }
  if (window == 1) return trajectory;

  const int half = window / 2;
  std::vector<Vec3> anchor(n);
  for (int t = 0; t < n; ++t) anchor[t] = trajectory.poses[t].apply(pivot);

  ObjectTrajectory out = trajectory;
  for (int t = 0; t < n; ++t) {
    const int h = std::min({half, t, n - 1 - t});
    Vec3 c = Vec3::Zero();
    Eigen::Vector4d q = Eigen::Vector4d::Zero();
    const UnitQuat& ref = trajectory.poses[t].rotation;
    const Eigen::Vector4d ref4(ref.w(), ref.x(), ref.y(), ref.z());
    for (int s = t - h; s <= t + h; ++s) {
      c += anchor[s];
      const UnitQuat& r = trajectory.poses[s].rotation;
      Eigen::Vector4d r4(r.w(), r.x(), r.y(), r.z());
      if (r4.dot(ref4) < 0.0) r4 = -r4;
      q += r4;
    }
    c /= static_cast<double>(2 * h + 1);
    const UnitQuat rot(q[0], q[1], q[2], q[3]);
    out.poses[t] = {c - rot.rotate(pivot), rot};
  }
  const Pose anchor_inv = inverse(out.poses[0]);
  for (auto& p : out.poses) p = compose(anchor_inv, p);
  out.poses[0] = Pose::identity();
  return out;
}

ObjectTrajectory reexpress_in_object_frame(const ObjectTrajectory& trajectory,
                                           const Pose& camera_world, const Pose& object_world0) {
  // object frame -> camera frame at t = 0
  const Pose obj_in_cam = compose(inverse(camera_world), object_world0);
  const Pose cam_in_obj = inverse(obj_in_cam);
  ObjectTrajectory out = trajectory;
  for (auto& p : out.poses) p = compose(cam_in_obj, compose(p, obj_in_cam));
  if (!out.poses.empty()) out.poses[0] = Pose::identity();
  return out;
}

GroundingResult ground_tracks(const TrackBundle& bundle, const GroundingParams& params) {
  validate_bundle(bundle);
  GroundingResult result;
  result.lifted = lift_tracks(bundle);
  const ObjectTrajectory fused = fuse_rigid_trajectory(result.lifted, params);
  const ObjectTrajectory filtered =
      remove_outlier_tracks(fused, result.lifted, params.outlier_threshold_scale, params);
  Vec3 pivot = Vec3::Zero();
  for (int i : filtered.inlier_point_ids) pivot += result.lifted.at(0, i);
  pivot /= static_cast<double>(filtered.inlier_point_ids.size());
  result.pivot = pivot;
  const int window = std::min(params.smooth_window, bundle.num_frames % 2 == 1
                                                        ? bundle.num_frames
                                                        : bundle.num_frames - 1);
  result.trajectory = smooth_trajectory(filtered, std::max(1, window), pivot);
  return result;
}

}  // namespace groundtrace
