#include "groundtrace/fixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <numbers>
#include <random>

#include "groundtrace/errors.hpp"
#include "groundtrace/hash.hpp"
#include "groundtrace/json_io.hpp"

namespace groundtrace {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Ray {
  Vec3 origin;
  Vec3 dir;  // camera-frame z component is 1, so the hit parameter is depth
};

Ray pixel_ray(const Pose& camera, const CameraIntrinsics& k, double u, double v) {
  const Vec3 d((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  return {camera.translation, camera.rotation.rotate(d)};
}

// Entry parameter of a ray into an oriented box, or +inf.
double hit_box(const Ray& ray, const Pose& box, const Vec3& extent) {
  const UnitQuat inv = box.rotation.conjugate();
  const Vec3 o = inv.rotate(ray.origin - box.translation);
  const Vec3 d = inv.rotate(ray.dir);
  double t0 = -kInf, t1 = kInf;
  for (int a = 0; a < 3; ++a) {
    const double h = 0.5 * extent[a];
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < -h || o[a] > h) return kInf;
      continue;
    }
    double ta = (-h - o[a]) / d[a], tb = (h - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t0 <= 1e-9) return kInf;
  return t0;
}

double hit_ground(const Ray& ray, double ground_z) {
  if (ray.dir.z() >= -1e-15) return kInf;
  const double t = (ground_z - ray.origin.z()) / ray.dir.z();
  return t > 1e-9 ? t : kInf;
}

std::array<Vec3, 8> box_corners(const Pose& pose, const Vec3& extent) {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 local(((i & 1) ? 0.5 : -0.5) * extent.x(), ((i & 2) ? 0.5 : -0.5) * extent.y(),
                     ((i & 4) ? 0.5 : -0.5) * extent.z());
    out[i] = pose.apply(local);
  }
  return out;
}

// Counter-based standard normal: one value per (stream, index), drawn from a
// fixed table of Box-Muller samples so full-raster noise stays cheap and
// independent of evaluation order.
double hashed_normal(std::uint64_t stream, std::uint64_t index) {
  static const std::vector<double> table = [] {
    std::vector<double> t(1 << 16);
    std::mt19937_64 rng(0x6e6f697365ULL);
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& v : t) v = g(rng);
    return t;
  }();
  return table[mix_seed(stream, index) & 0xffffu];
}

struct PixelRect {
  int x0, y0, x1, y1;  // inclusive-exclusive
};

// Screen-space bounds of a box, padded by a pixel; the full image when any
// corner lies behind the camera.
PixelRect projected_rect(const Pose& camera_inv, const CameraIntrinsics& k, const Pose& box,
                         const Vec3& extent) {
  double umin = kInf, vmin = kInf, umax = -kInf, vmax = -kInf;
  for (const Vec3& c : box_corners(box, extent)) {
    const Vec3 pc = camera_inv.apply(c);
    if (pc.z() <= 1e-9) return {0, 0, k.width, k.height};
    const Pixel px = project(pc, k);
    umin = std::min(umin, px.u);
    umax = std::max(umax, px.u);
    vmin = std::min(vmin, px.v);
    vmax = std::max(vmax, px.v);
  }
  auto clampi = [](double x, int hi) {
    return static_cast<int>(std::clamp(x, 0.0, static_cast<double>(hi)));
  };
  return {clampi(std::floor(umin) - 1, k.width), clampi(std::floor(vmin) - 1, k.height),
          clampi(std::ceil(umax) + 2, k.width), clampi(std::ceil(vmax) + 2, k.height)};
}

struct Renderer {
  const FixtureSpec& spec;
  Pose camera_inv;
  std::vector<const PlacedObject*> others;
  const PlacedObject* target = nullptr;
  DepthFrame background;

  explicit Renderer(const FixtureSpec& s) : spec(s), camera_inv(inverse(s.camera)) {
    for (const auto& o : s.scene.objects) {
      if (o.name == s.target) target = &o;
      else others.push_back(&o);
    }
    const auto& k = spec.intrinsics;
    background = DepthFrame(k.width, k.height);
    for (int y = 0; y < k.height; ++y) {
      for (int x = 0; x < k.width; ++x) {
        const double t = hit_ground(pixel_ray(spec.camera, k, x + 0.5, y + 0.5), spec.scene.ground_z);
        background.at(x, y) = std::isfinite(t) ? static_cast<float>(t) : 0.0f;
      }
    }
    for (const PlacedObject* o : others) {
      const PixelRect r = projected_rect(camera_inv, k, o->pose, o->extent);
      for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
          const double t = hit_box(pixel_ray(spec.camera, k, x + 0.5, y + 0.5), o->pose, o->extent);
          float& d = background.at(x, y);
          if (std::isfinite(t) && (d == 0.0f || t < d)) d = static_cast<float>(t);
        }
      }
    }
  }

  // Depth raster with the target at `pose`; optionally the target silhouette.
  DepthFrame render(const Pose& pose, MaskImage* mask) const {
    const auto& k = spec.intrinsics;
    DepthFrame frame = background;
    if (mask) *mask = MaskImage(k.width, k.height);
    const PixelRect r = projected_rect(camera_inv, k, pose, target->extent);
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        const double t = hit_box(pixel_ray(spec.camera, k, x + 0.5, y + 0.5), pose, target->extent);
        float& d = frame.at(x, y);
        if (std::isfinite(t) && (d == 0.0f || t < d)) {
          d = static_cast<float>(t);
          if (mask) mask->set(x, y, true);
        }
      }
    }
    return frame;
  }

  // Nearest hit along the ray over every object, the target placed at `pose`.
  double nearest(const Ray& ray, const Pose& pose) const {
    double best = hit_ground(ray, spec.scene.ground_z);
    for (const PlacedObject* o : others) best = std::min(best, hit_box(ray, o->pose, o->extent));
    return std::min(best, hit_box(ray, pose, target->extent));
  }
};

}  // namespace

CameraIntrinsics default_fixture_intrinsics() {
  CameraIntrinsics k;
  k.fx = k.fy = 300.0;
  k.cx = 160.0;
  k.cy = 120.0;
  k.width = 320;
  k.height = 240;
  return k;
}

Pose top_down_camera(const SceneLayout& scene, const std::string& target, double height) {
  const PlacedObject* obj = scene.find(target);
  if (!obj) throw Error(ErrorCode::SemanticError, "fixture target '" + target + "' not in scene");
  const Vec3 top = obj->pose.translation + Vec3(0.0, 0.0, 0.5 * obj->extent.z());
  return {top + Vec3(0.0, 0.0, height), UnitQuat(0.0, 1.0, 0.0, 0.0)};
}

std::vector<MotionWaypoint> linear_motion(const Pose& start, const Vec3& translation, double yaw,
                                          int frames) {
  std::vector<MotionWaypoint> out{{0, start}};
  if (frames > 1) {
    const Pose end{start.translation + translation,
                   UnitQuat::from_axis_angle(Vec3::UnitZ(), yaw) * start.rotation};
    out.push_back({frames - 1, end});
  }
  return out;
}

Pose pose_at_frame(const std::vector<MotionWaypoint>& motion, int frame) {
  if (motion.empty()) return Pose::identity();
  if (frame <= motion.front().frame) return motion.front().pose;
  for (std::size_t i = 1; i < motion.size(); ++i) {
    const MotionWaypoint& a = motion[i - 1];
    const MotionWaypoint& b = motion[i];
    if (frame <= b.frame) {
      const double s = static_cast<double>(frame - a.frame) / (b.frame - a.frame);
      return {(1.0 - s) * a.pose.translation + s * b.pose.translation,
              slerp(a.pose.rotation, b.pose.rotation, s)};
    }
  }
  return motion.back().pose;
}

std::optional<Penetration> first_penetration(const FixtureSpec& spec, double tolerance) {
  const PlacedObject* target = spec.scene.find(spec.target);
  if (target == nullptr || spec.motion.empty()) return std::nullopt;
  for (int t = 0; t < spec.num_frames; ++t) {
    const Pose p = pose_at_frame(spec.motion, t);
    for (const PlacedObject& o : spec.scene.objects) {
      if (&o == target) continue;
      if (boxes_intersect(p, target->extent, o.pose, o.extent, tolerance)) return Penetration{t, o.name};
    }
  }
  return std::nullopt;
}

void validate_fixture_spec(const FixtureSpec& spec) {
  const PlacedObject* obj = spec.scene.find(spec.target);
  if (!obj) throw Error(ErrorCode::SemanticError, "fixture target '" + spec.target + "' not in scene");
  if (spec.num_frames < 1) throw Error(ErrorCode::SchemaError, "fixture num_frames must be >= 1");
  if (spec.num_points < 3) throw Error(ErrorCode::SchemaError, "fixture num_points must be >= 3");
  if (!spec.intrinsics.valid()) throw Error(ErrorCode::SchemaError, "fixture camera intrinsics invalid");
  if (spec.motion.empty() || spec.motion.front().frame != 0) {
    throw Error(ErrorCode::SemanticError, "motion script must start with a waypoint at frame 0");
  }
  for (std::size_t i = 1; i < spec.motion.size(); ++i) {
    if (spec.motion[i].frame <= spec.motion[i - 1].frame) {
      throw Error(ErrorCode::SemanticError, "motion waypoint frames must strictly increase");
    }
  }
  const Pose& p0 = spec.motion.front().pose;
  if (translation_distance(p0, obj->pose) > 1e-9 || rotation_distance(p0, obj->pose) > 1e-9) {
    throw Error(ErrorCode::SemanticError, "motion script must start at the target's scene pose");
  }
  if (const auto hit = first_penetration(spec)) {
    throw Error(ErrorCode::SemanticError,
                "target '" + spec.target + "' penetrates '" + hit->other + "' at frame " + std::to_string(hit->frame),
                hit->frame);
  }
  const FixtureNoise& n = spec.noise;
  if (!(n.track_px_sigma >= 0.0) || !(n.depth_m_sigma >= 0.0)) {
    throw Error(ErrorCode::SchemaError, "fixture noise sigmas must be >= 0");
  }
  if (!(n.corruption_fraction >= 0.0 && n.corruption_fraction < 1.0)) {
    throw Error(ErrorCode::SchemaError, "corruption_fraction must lie in [0, 1)");
  }
}

Fixture synth_fixture(const FixtureSpec& spec) {
  validate_fixture_spec(spec);
  const CameraIntrinsics& k = spec.intrinsics;
  const int frames = spec.num_frames, n = spec.num_points;
  const Renderer renderer(spec);
  const PlacedObject& target = *renderer.target;

  Fixture fx;
  fx.world_path.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    const Pose w = pose_at_frame(spec.motion, t);
    for (const Vec3& c : box_corners(w, target.extent)) {
      const Vec3 pc = renderer.camera_inv.apply(c);
      const bool inside = pc.z() > 1e-9 && [&] {
        const Pixel px = project(pc, k);
        return k.contains(px.u, px.v);
      }();
      if (!inside) {
        throw Error(ErrorCode::TargetOutOfView,
                    "target '" + spec.target + "' leaves the camera frustum at frame " +
                        std::to_string(t),
                    t);
      }
    }
    fx.world_path.push_back(w);
  }

  TrackBundle& b = fx.bundle;
  b.num_frames = frames;
  b.num_points = n;
  b.intrinsics = k;
  b.uv.assign(static_cast<std::size_t>(frames) * n, Pixel{});
  b.visible.assign(b.uv.size(), 0);
  b.depth.reserve(frames);

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < frames; ++t) {
    DepthFrame d = renderer.render(fx.world_path[t], t == 0 ? &b.mask : nullptr);
    if (spec.noise.depth_m_sigma > 0.0) {
      const std::uint64_t stream = mix_seed(mix_seed(spec.seed, 2), static_cast<std::uint64_t>(t));
      for (std::size_t p = 0; p < d.values.size(); ++p) {
        float& v = d.values[p];
        if (v > 0.0f) {
          v = static_cast<float>(
              std::max(1e-4, v + spec.noise.depth_m_sigma * hashed_normal(stream, p)));
        }
      }
    }
    b.depth.push_back(std::move(d));
  }

  // Query points on the frame-0 mask, carried along as object-frame surface points.
  const std::vector<Pixel> queries = sample_mask_points(b.mask, n, mix_seed(spec.seed, 1));
  const Pose w0_inv = inverse(fx.world_path[0]);
  std::vector<Vec3> local(n);
  for (int i = 0; i < n; ++i) {
    const Ray ray = pixel_ray(spec.camera, k, queries[i].u, queries[i].v);
    const double t = hit_box(ray, fx.world_path[0], target.extent);
    if (!std::isfinite(t)) {
      throw Error(ErrorCode::DegenerateConfiguration, "query point misses the target surface", i);
    }
    local[i] = w0_inv.apply(ray.origin + t * ray.dir);
  }
  std::mt19937_64 track_rng(mix_seed(spec.seed, 3));
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < n; ++i) {
      const std::size_t idx = b.index(t, i);
      if (t == 0) {
        b.uv[idx] = queries[i];
        b.visible[idx] = 1;
        continue;
      }
      const Vec3 pw = fx.world_path[t].apply(local[i]);
      const Vec3 pc = renderer.camera_inv.apply(pw);
      if (pc.z() <= 1e-9) continue;
      Pixel px = project(pc, k);
      const double hit = renderer.nearest(pixel_ray(spec.camera, k, px.u, px.v), fx.world_path[t]);
      bool visible = k.contains(px.u, px.v) && hit >= pc.z() - 1e-6 * (1.0 + pc.z());
      if (spec.noise.track_px_sigma > 0.0) {
        px.u += spec.noise.track_px_sigma * gauss(track_rng);
        px.v += spec.noise.track_px_sigma * gauss(track_rng);
        visible = visible && k.contains(px.u, px.v);
      }
      b.uv[idx] = px;
      b.visible[idx] = visible ? 1 : 0;
    }
  }

  // Corruption: a fixed count of ids teleport to random pixels from an onset frame on.
  const int corrupt = static_cast<int>(std::floor(spec.noise.corruption_fraction * n));
  if (corrupt > 0 && frames > 1) {
    std::mt19937_64 rng(mix_seed(spec.seed, 4));
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(corrupt);
    std::sort(ids.begin(), ids.end());
    const int last_onset = std::max(1, (frames - 1) / 3);
    std::uniform_real_distribution<double> uu(0.0, k.width), vv(0.0, k.height);
    for (int i : ids) {
      const int onset = std::uniform_int_distribution<int>(1, last_onset)(rng);
      for (int t = onset; t < frames; ++t) {
        Pixel px{uu(rng), vv(rng)};
        px.u = std::min(px.u, std::nextafter(static_cast<double>(k.width), 0.0));
        px.v = std::min(px.v, std::nextafter(static_cast<double>(k.height), 0.0));
        b.uv[b.index(t, i)] = px;
        b.visible[b.index(t, i)] = 1;
      }
    }
    fx.corrupted_ids = ids;
  }

  fx.ground_truth.poses.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    fx.ground_truth.poses.push_back(
        compose(renderer.camera_inv, compose(fx.world_path[t], compose(w0_inv, spec.camera))));
  }
  fx.ground_truth.poses[0] = Pose::identity();
  fx.ground_truth.per_frame_rms.assign(frames, 0.0);
  for (int i = 0; i < n; ++i) {
    if (!std::binary_search(fx.corrupted_ids.begin(), fx.corrupted_ids.end(), i)) {
      fx.ground_truth.inlier_point_ids.insert(i);
    } else {
      fx.ground_truth.dropped_point_ids.insert(i);
    }
  }
  fx.grasp = top_down_grasp(target.extent);
  return fx;
}

// --- spec file ------------------------------------------------------------

FixtureSpec parse_fixture_spec(const std::string& text, const std::string& base_dir) {
  const json doc = parse_json(text, ErrorCode::SyntaxError, "fixture spec");
  if (!doc.is_object()) throw Error(ErrorCode::SchemaError, "fixture spec must be an object");
  FixtureSpec spec;
  try {
    if (doc.contains("scene_file")) {
      std::filesystem::path p(doc["scene_file"].get<std::string>());
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      spec.scene = load_scene(p.string());
    } else if (doc.contains("scene")) {
      spec.scene = parse_scene(doc["scene"].dump());
    } else {
      throw Error(ErrorCode::SchemaError, "fixture spec needs 'scene_file' or 'scene'");
    }
    spec.target = doc.at("target").get<std::string>();
    spec.num_frames = doc.value("num_frames", 30);
    spec.num_points = doc.value("num_points", 128);
    spec.seed = doc.value("seed", std::uint64_t{0});
    if (!spec.scene.find(spec.target)) {
      throw Error(ErrorCode::SemanticError, "fixture target '" + spec.target + "' not in scene");
    }
    spec.intrinsics = default_fixture_intrinsics();
    spec.camera = top_down_camera(spec.scene, spec.target);
    if (doc.contains("camera")) {
      const json& cam = doc["camera"];
      if (cam.contains("intrinsics")) {
        spec.intrinsics = intrinsics_from_json(cam["intrinsics"], ErrorCode::SchemaError);
      }
      if (cam.contains("pose")) spec.camera = pose_from_json(cam["pose"], ErrorCode::SchemaError, "camera.pose");
    }
    const json& motion = doc.at("motion");
    const Pose start = spec.scene.find(spec.target)->pose;
    if (motion.contains("waypoints")) {
      for (const json& w : motion["waypoints"]) {
        spec.motion.push_back({w.at("frame").get<int>(),
                               pose_from_json(w.at("pose"), ErrorCode::SchemaError, "waypoint")});
      }
    } else {
      const Vec3 tr = motion.contains("translation_m")
                          ? vec3_from_json(motion["translation_m"], ErrorCode::SchemaError, "translation_m")
                          : Vec3::Zero();
      const double yaw = motion.value("yaw_deg", 0.0) * std::numbers::pi / 180.0;
      spec.motion = linear_motion(start, tr, yaw, spec.num_frames);
    }
    if (doc.contains("noise")) {
      const json& n = doc["noise"];
      spec.noise.track_px_sigma = n.value("track_px_sigma", 0.0);
      spec.noise.depth_m_sigma = n.value("depth_m_sigma", 0.0);
      spec.noise.corruption_fraction = n.value("corruption_fraction", 0.0);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("fixture spec: ") + e.what());
  }
  validate_fixture_spec(spec);
  return spec;
}

FixtureSpec load_fixture_spec(const std::string& path) {
  const std::filesystem::path p(path);
  return parse_fixture_spec(read_text_file(path), p.parent_path().string());
}

}  // namespace groundtrace
