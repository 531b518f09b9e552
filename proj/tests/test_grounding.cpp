#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "fixture_gen.hpp"
#include "groundtrace/errors.hpp"
#include "groundtrace/fixture.hpp"
#include "groundtrace/grounding.hpp"
#include "test_util.hpp"

using namespace groundtrace;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ConfigError;
}

double max_translation_error(const std::vector<Pose>& a, const std::vector<Pose>& b) {
  double e = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) e = std::max(e, translation_distance(a[t], b[t]));
  return e;
}

double max_rotation_error(const std::vector<Pose>& a, const std::vector<Pose>& b) {
  double e = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) e = std::max(e, rotation_distance(a[t], b[t]));
  return e;
}

// Lifted tracks of a static rigid point set moved by `poses`, with every point valid.
LiftedTracks synthetic_lifted(const std::vector<Pose>& poses, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LiftedTracks l;
  l.num_frames = static_cast<int>(poses.size());
  l.num_points = n;
  std::vector<Vec3> base(n);
  for (auto& p : base) p = testutil::random_vec(rng, -0.1, 0.1) + Vec3(0, 0, 0.6);
  for (int t = 0; t < l.num_frames; ++t) {
    for (int i = 0; i < n; ++i) {
      l.points.push_back(poses[t].apply(base[i]));
      l.valid.push_back(1);
    }
  }
  return l;
}

}  // namespace

// --- sampling -------------------------------------------------------------

TEST_CASE("sample_mask_points: full frame") {
  MaskImage m(100, 100);
  std::fill(m.bits.begin(), m.bits.end(), 1);
  const auto pts = sample_mask_points(m, 16, 1);
  REQUIRE(pts.size() == 16);
  std::set<std::pair<double, double>> seen;
  for (const Pixel& p : pts) {
    CHECK(p.u >= 0.0);
    CHECK(p.u < 100.0);
    CHECK(p.v >= 0.0);
    CHECK(p.v < 100.0);
    CHECK(m.contains(p.u, p.v));
    seen.insert({p.u, p.v});
  }
  CHECK(seen.size() == 16);
}

TEST_CASE("sample_mask_points: empty and tiny masks") {
  CHECK(code_of([] { sample_mask_points(MaskImage(50, 50), 4, 0); }) == ErrorCode::MaskTooSmall);
  MaskImage m(50, 50);
  for (int y = 10; y < 14; ++y) {
    for (int x = 10; x < 14; ++x) m.set(x, y, true);
  }
  // Only a 4x4 block: no pixel has a full 5x5 neighbourhood.
  CHECK(code_of([&] { sample_mask_points(m, 1, 0); }) == ErrorCode::MaskTooSmall);
}

TEST_CASE("sample_mask_points: L-shaped mask, membership and determinism") {
  MaskImage m(80, 60);
  for (int y = 5; y < 55; ++y) {
    for (int x = 5; x < 20; ++x) m.set(x, y, true);
  }
  for (int y = 40; y < 55; ++y) {
    for (int x = 5; x < 75; ++x) m.set(x, y, true);
  }
  const auto a = sample_mask_points(m, 32, 3);
  const auto b = sample_mask_points(m, 32, 3);
  REQUIRE(a.size() == 32);
  CHECK(a == b);
  for (const Pixel& p : a) CHECK(m.contains(p.u, p.v));
  CHECK(sample_mask_points(m, 32, 4) != a);

  // One point per grid cell: no two points share a pixel.
  std::set<std::pair<int, int>> cells;
  for (const Pixel& p : a) cells.insert({static_cast<int>(p.u), static_cast<int>(p.v)});
  CHECK(cells.size() == a.size());
}

TEST_CASE("sample_mask_points covers the mask evenly") {
  MaskImage m(64, 64);
  std::fill(m.bits.begin(), m.bits.end(), 1);
  const auto pts = sample_mask_points(m, 64, 9);
  int left = 0;
  for (const Pixel& p : pts) left += p.u < 32.0 ? 1 : 0;
  CHECK(left >= 24);
  CHECK(left <= 40);
}

// --- depth sampling and lifting ---------------------------------------------

TEST_CASE("sample_depth: bilinear on a linear ramp, invalid neighbours") {
  DepthFrame d(6, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) d.at(x, y) = static_cast<float>(1.0 + 0.25 * x + 0.125 * y);
  }
  // Pixel centres carry the ramp value, so interior samples reproduce the ramp.
  const double u = 2.9, v = 1.7;
  CHECK(*sample_depth(d, u, v) == doctest::Approx(1.0 + 0.25 * (u - 0.5) + 0.125 * (v - 0.5)));
  CHECK(*sample_depth(d, 0.5, 0.5) == doctest::Approx(1.0));
  // Edge clamp.
  CHECK(*sample_depth(d, 0.1, 0.5) == doctest::Approx(1.0));
  d.at(3, 2) = 0.0f;
  CHECK_FALSE(sample_depth(d, 3.2, 2.2).has_value());
  CHECK_FALSE(sample_depth(d, 2.8, 1.8).has_value());
  CHECK(sample_depth(d, 1.6, 1.6).has_value());
}

TEST_CASE("lift_tracks: principal pixel and constant plane") {
  TrackBundle b;
  b.num_frames = 3;
  b.num_points = 2;
  b.intrinsics = {200.0, 200.0, 50.0, 40.0, 100, 80};
  b.mask = MaskImage(100, 80);
  for (int t = 0; t < 3; ++t) {
    DepthFrame d(100, 80);
    std::fill(d.values.begin(), d.values.end(), t == 0 ? 2.0f : 1.0f);
    b.depth.push_back(d);
  }
  b.uv = {{50.0, 40.0}, {20.5, 10.25}, {50.0, 40.0}, {20.5, 10.25}, {50.0, 40.0}, {20.5, 10.25}};
  b.visible = {1, 1, 1, 0, 1, 1};
  const LiftedTracks l = lift_tracks(b);
  CHECK((l.at(0, 0) - Vec3(0, 0, 2)).norm() < 1e-12);
  CHECK(l.is_valid(0, 1));
  CHECK_FALSE(l.is_valid(1, 1));
  CHECK((l.at(1, 0) - l.at(2, 0)).norm() < 1e-12);
  CHECK((l.at(2, 1) - Vec3((20.5 - 50.0) / 200.0, (10.25 - 40.0) / 200.0, 1.0)).norm() < 1e-12);
}

TEST_CASE("lifted fixture points follow the ground-truth motion") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Fixture fx = synth_fixture(testutil::make_fixture_spec(seed, 40));
    const LiftedTracks l = lift_tracks(fx.bundle);
    int checked = 0;
    for (int t = 0; t < l.num_frames; ++t) {
      for (int i = 0; i < l.num_points; ++i) {
        if (!l.is_valid(t, i)) continue;
        const Vec3 expected = fx.ground_truth.poses[t].apply(l.at(0, i));
        REQUIRE((l.at(t, i) - expected).norm() < 1e-6);
        ++checked;
      }
    }
    CHECK(checked > l.num_frames * l.num_points / 2);
  }
}

// --- fusion ---------------------------------------------------------------

TEST_CASE("fuse_rigid_trajectory: static scene gives identity poses") {
  const LiftedTracks l = synthetic_lifted(std::vector<Pose>(12, Pose::identity()), 40, 1);
  const ObjectTrajectory tr = fuse_rigid_trajectory(l, {});
  for (const Pose& p : tr.poses) {
    CHECK(p.translation.norm() < 1e-9);
    CHECK(geodesic_angle(p.rotation, UnitQuat{}) < 1e-9);
  }
  CHECK(tr.dropped_point_ids.empty());
  CHECK(tr.inlier_point_ids.size() == 40);
}

TEST_CASE("fuse_rigid_trajectory: pure translation fixture") {
  FixtureSpec spec = testutil::make_fixture_spec(11, 30, false);
  spec.motion = linear_motion(spec.motion.front().pose, Vec3(0.2, 0.0, 0.0), 0.0, 30);
  const Fixture fx = synth_fixture(spec);
  const ObjectTrajectory tr = fuse_rigid_trajectory(lift_tracks(fx.bundle), {});
  CHECK(max_translation_error(tr.poses, fx.ground_truth.poses) < 1e-6);
  CHECK(tr.poses[0] == Pose::identity());
}

TEST_CASE("fuse_rigid_trajectory: corrupted tracks are dropped") {
  FixtureSpec spec = testutil::make_fixture_spec(12, 40);
  const Fixture clean = synth_fixture(spec);
  spec.noise.corruption_fraction = 0.2;
  const Fixture dirty = synth_fixture(spec);
  REQUIRE(dirty.corrupted_ids.size() == 25);
  const GroundingParams params;
  const LiftedTracks la = lift_tracks(clean.bundle), lb = lift_tracks(dirty.bundle);
  const ObjectTrajectory a = fuse_rigid_trajectory(la, params);
  CHECK(max_translation_error(a.poses, clean.ground_truth.poses) < 1e-6);
  const ObjectTrajectory b = fuse_rigid_trajectory(lb, params);
  for (int id : dirty.corrupted_ids) CHECK(b.dropped_point_ids.count(id) == 1);
  const double eb = max_translation_error(b.poses, dirty.ground_truth.poses);
  // A teleported point can land within the 5 mm threshold of where it should
  // be in a single frame and join that frame's consensus; the error it causes
  // is bounded by threshold / inliers.
  CHECK(eb < params.ransac.inlier_threshold / 50.0);
  // Once corrupted ids are removed, the refit is as good as the clean case
  // (both at round-off level; 1e-9 absorbs summation-order differences).
  const ObjectTrajectory fa = remove_outlier_tracks(a, la, 3.0, params);
  const ObjectTrajectory fb = remove_outlier_tracks(b, lb, 3.0, params);
  const double fea = max_translation_error(fa.poses, clean.ground_truth.poses);
  const double feb = max_translation_error(fb.poses, dirty.ground_truth.poses);
  CHECK(feb < 2.0 * fea + 1e-9);
}

TEST_CASE("fuse_rigid_trajectory: insufficient correspondences name the frame") {
  LiftedTracks l = synthetic_lifted(std::vector<Pose>(5, Pose::identity()), 6, 2);
  for (int i = 0; i < 4; ++i) l.valid[l.index(3, i)] = 0;
  try {
    fuse_rigid_trajectory(l, {});
    FAIL("expected InsufficientCorrespondences");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientCorrespondences);
    CHECK(e.index() == std::optional<std::int64_t>(3));
  }
  LiftedTracks empty0 = synthetic_lifted(std::vector<Pose>(2, Pose::identity()), 4, 2);
  for (int i = 0; i < 2; ++i) empty0.valid[empty0.index(0, i)] = 0;
  CHECK(code_of([&] { fuse_rigid_trajectory(empty0, {}); }) ==
        ErrorCode::InsufficientCorrespondences);
}

// --- outlier removal --------------------------------------------------------

TEST_CASE("remove_outlier_tracks: clean input keeps every track") {
  std::mt19937_64 rng(5);
  std::vector<Pose> truth{Pose::identity()};
  for (int t = 1; t < 20; ++t) truth.push_back(testutil::random_pose(rng, 0.1));
  const LiftedTracks l = synthetic_lifted(truth, 30, 3);
  const GroundingParams params;
  const ObjectTrajectory fused = fuse_rigid_trajectory(l, params);
  const ObjectTrajectory out = remove_outlier_tracks(fused, l, 3.0, params);
  CHECK(out.dropped_point_ids.empty());
  CHECK(max_translation_error(out.poses, fused.poses) < 1e-9);
  CHECK(max_rotation_error(out.poses, fused.poses) < 1e-9);

  const ObjectTrajectory vacuous =
      remove_outlier_tracks(fused, l, std::numeric_limits<double>::infinity(), params);
  CHECK(vacuous.dropped_point_ids.empty());
}

TEST_CASE("remove_outlier_tracks: one teleported track is the only drop") {
  std::mt19937_64 rng(6);
  std::vector<Pose> truth{Pose::identity()};
  for (int t = 1; t < 30; ++t) truth.push_back(testutil::random_pose(rng, 0.1));
  LiftedTracks l = synthetic_lifted(truth, 30, 4);
  for (int t = 10; t < 30; ++t) l.points[l.index(t, 7)] += Vec3(0.3, -0.2, 0.1);
  GroundingParams params;
  params.ransac.max_iterations = 1000;  // certainty, not speed, in this check
  const ObjectTrajectory fused = fuse_rigid_trajectory(l, params);
  const ObjectTrajectory out = remove_outlier_tracks(fused, l, 3.0, params);
  CHECK(out.dropped_point_ids == std::set<int>{7});
  CHECK(max_translation_error(out.poses, truth) < 1e-9);
}

TEST_CASE("remove_outlier_tracks: too few survivors") {
  std::vector<Pose> truth{Pose::identity(), Pose::from_translation(Vec3(0.05, 0, 0))};
  LiftedTracks l = synthetic_lifted(truth, 3, 8);
  ObjectTrajectory fake;
  fake.poses = {Pose::identity(), Pose::identity()};
  fake.per_frame_rms = {0.0, 0.0};
  fake.inlier_point_ids = {0, 1, 2};
  // Poses that ignore the 5 cm motion leave every track above the absolute threshold.
  CHECK(code_of([&] { remove_outlier_tracks(fake, l, 3.0, {}); }) == ErrorCode::TooFewSurvivors);
}

// --- smoothing ------------------------------------------------------------

TEST_CASE("smooth_trajectory: window 1 is the identity") {
  std::mt19937_64 rng(9);
  ObjectTrajectory tr;
  tr.poses.push_back(Pose::identity());
  for (int t = 1; t < 10; ++t) tr.poses.push_back(testutil::random_pose(rng));
  const ObjectTrajectory out = smooth_trajectory(tr, 1);
  for (std::size_t t = 0; t < tr.poses.size(); ++t) CHECK(out.poses[t] == tr.poses[t]);
}

TEST_CASE("smooth_trajectory: linear translation is a fixed point") {
  ObjectTrajectory tr;
  for (int t = 0; t < 25; ++t) tr.poses.push_back(Pose::from_translation(Vec3(0.01, -0.004, 0.002) * t));
  for (int w : {3, 5, 9, 25}) {
    const ObjectTrajectory out = smooth_trajectory(tr, w);
    CHECK(max_translation_error(out.poses, tr.poses) < 1e-9);
    CHECK(out.poses[0] == Pose::identity());
  }
  CHECK(code_of([&] { smooth_trajectory(tr, 4); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { smooth_trajectory(tr, 27); }) == ErrorCode::ConfigError);
}

TEST_CASE("smooth_trajectory: constant-rate rotation about a pivot is a fixed point") {
  const Vec3 pivot(0.05, -0.02, 0.6);
  ObjectTrajectory tr;
  for (int t = 0; t < 30; ++t) {
    const UnitQuat r = UnitQuat::from_axis_angle(Vec3(0.2, 0.3, 1.0).normalized(), 0.02 * t);
    const Vec3 moved = pivot + Vec3(0.004, 0.001, -0.002) * t;
    tr.poses.push_back({moved - r.rotate(pivot), r});
  }
  const ObjectTrajectory out = smooth_trajectory(tr, 5, pivot);
  CHECK(max_translation_error(out.poses, tr.poses) < 1e-9);
  CHECK(max_rotation_error(out.poses, tr.poses) < 1e-9);
}

TEST_CASE("smooth_trajectory reduces Gaussian translation noise") {
  int better = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::normal_distribution<double> noise(0.0, 0.003);
    std::vector<Pose> truth;
    ObjectTrajectory noisy;
    for (int t = 0; t < 60; ++t) {
      const Vec3 p(0.3 * std::sin(0.05 * t), 0.002 * t, 0.05 * std::cos(0.03 * t) - 0.05);
      truth.push_back(Pose::from_translation(p));
      noisy.poses.push_back(
          Pose::from_translation(t == 0 ? p : p + Vec3(noise(rng), noise(rng), noise(rng))));
    }
    const ObjectTrajectory smooth = smooth_trajectory(noisy, 5);
    double raw = 0.0, sm = 0.0;
    for (int t = 0; t < 60; ++t) {
      raw += std::pow(translation_distance(noisy.poses[t], truth[t]), 2);
      sm += std::pow(translation_distance(smooth.poses[t], truth[t]), 2);
    }
    better += sm < raw ? 1 : 0;
  }
  CHECK(better == 100);
}

TEST_CASE("smooth_trajectory never increases the largest translation step") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 40)(rng);
    ObjectTrajectory tr;
    tr.poses.push_back(Pose::identity());
    for (int t = 1; t < n; ++t) tr.poses.push_back(testutil::random_pose(rng, 0.2));
    int w = std::uniform_int_distribution<int>(0, (n - 1) / 2)(rng) * 2 + 1;
    const ObjectTrajectory out = smooth_trajectory(tr, w);
    double before = 0.0, after = 0.0;
    for (int t = 1; t < n; ++t) {
      before = std::max(before, translation_distance(tr.poses[t], tr.poses[t - 1]));
      after = std::max(after, translation_distance(out.poses[t], out.poses[t - 1]));
    }
    REQUIRE(after <= before + 1e-12);
    REQUIRE(out.poses[0] == Pose::identity());
  }
}

// --- end to end -------------------------------------------------------------

TEST_CASE("ground_tracks recovers noiseless fixtures") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const int frames = 30 + static_cast<int>(seed % 7) * 15;
    const Fixture fx = synth_fixture(testutil::make_fixture_spec(seed, frames));
    GroundingParams params;
    params.ransac.seed = seed;
    const GroundingResult r = ground_tracks(fx.bundle, params);
    CHECK(max_translation_error(r.trajectory.poses, fx.ground_truth.poses) < 1e-4);
    CHECK(max_rotation_error(r.trajectory.poses, fx.ground_truth.poses) < testutil::deg(0.05));
    CHECK(r.trajectory.poses[0] == Pose::identity());
    for (double rms : r.trajectory.per_frame_rms) {
      CHECK(std::isfinite(rms));
      CHECK(rms >= 0.0);
    }
  }
}

TEST_CASE("ground_tracks is deterministic") {
  FixtureSpec spec = testutil::make_fixture_spec(31, 45);
  spec.noise = {0.3, 0.002, 0.1};
  const Fixture fx = synth_fixture(spec);
  GroundingParams params;
  params.ransac.seed = 77;
  const GroundingResult a = ground_tracks(fx.bundle, params);
  const GroundingResult b = ground_tracks(fx.bundle, params);
  for (std::size_t t = 0; t < a.trajectory.poses.size(); ++t) {
    CHECK(a.trajectory.poses[t] == b.trajectory.poses[t]);
  }
  CHECK(a.trajectory.dropped_point_ids == b.trajectory.dropped_point_ids);
}

TEST_CASE("reexpress_in_object_frame turns camera motion into object motion") {
  std::mt19937_64 rng(41);
  const Pose camera = testutil::random_pose(rng);
  const Pose object0 = testutil::random_pose(rng);
  const Pose delta_obj{Vec3(0.1, 0.02, -0.03), UnitQuat::from_axis_angle(Vec3::UnitZ(), 0.3)};
  // World pose after the motion: object0 * delta_obj.
  const Pose world1 = compose(object0, delta_obj);
  ObjectTrajectory cam;
  cam.poses = {Pose::identity(),
               compose(inverse(camera), compose(world1, compose(inverse(object0), camera)))};
  const ObjectTrajectory out = reexpress_in_object_frame(cam, camera, object0);
  CHECK(translation_distance(out.poses[1], delta_obj) < 1e-12);
  CHECK(rotation_distance(out.poses[1], delta_obj) < 1e-9);
}
