#include <doctest.h>

#include <filesystem>

#include "groundtrace/errors.hpp"
#include "groundtrace/formats.hpp"
#include "groundtrace/json_io.hpp"
#include "groundtrace/layout.hpp"
#include "groundtrace/manifest.hpp"
#include "groundtrace/providers.hpp"
#include "test_util.hpp"

using namespace groundtrace;
namespace fs = std::filesystem;

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

// Plans, sizes and lays out a stub scene, then asks the stub video provider for a clip.
VideoClip stub_clip(const ProviderSet& p, std::uint64_t seed, SceneLayout* scene_out = nullptr) {
  const AssetManifest m = p.as<PlannerProvider>(ProviderRole::Planner).plan("move the object", seed);
  ExtentMap extents;
  for (const AssetEntry& e : m.entries) {
    extents[e.name] = scale_to_metric(p.as<ReconstructorProvider>(ProviderRole::Reconstructor).reconstruct(e, seed),
                                      e.nominal_extent).extent;
  }
  const SceneLayout scene = solve_layout(m, extents, default_workspace(), m.seed);
  if (scene_out != nullptr) *scene_out = scene;
  return p.as<VideoProvider>(ProviderRole::VideoGen).generate({scene, m.target, m.receptacle, seed});
}

}  // namespace

TEST_CASE("role names round trip") {
  for (ProviderRole r : all_provider_roles()) CHECK(role_from_string(to_string(r)) == r);
  CHECK(code_of([] { role_from_string("painter"); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { make_provider(ProviderRole::Planner, "http://x"); }) == ErrorCode::ConfigError);
}

TEST_CASE("stub planner: valid manifests, deterministic in seed") {
  const ProviderHandle planner = make_stub_provider(ProviderRole::Planner);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const AssetManifest m = planner.as<PlannerProvider>().plan("p", seed);
    CHECK_NOTHROW(validate_manifest(m));
    CHECK(m.entries.size() >= 2);
    CHECK(m.entries.size() <= 5);
    CHECK(m.find(m.target) != nullptr);
    CHECK(m.find(m.receptacle) != nullptr);
    CHECK(write_manifest(m) == write_manifest(planner.as<PlannerProvider>().plan("p", seed)));
  }
  CHECK(write_manifest(planner.as<PlannerProvider>().plan("p", 1)) !=
        write_manifest(planner.as<PlannerProvider>().plan("p", 2)));
}

TEST_CASE("stub reconstructor: metric scaling recovers the nominal extent") {
  const ProviderHandle recon = make_stub_provider(ProviderRole::Reconstructor);
  AssetEntry e;
  e.name = "mug";
  e.nominal_extent = Vec3(0.08, 0.09, 0.1);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Vec3 raw = recon.as<ReconstructorProvider>().reconstruct(e, seed);
    CHECK(raw.minCoeff() > 0.0);
    CHECK((scale_to_metric(raw, e.nominal_extent).extent - e.nominal_extent).norm() < 1e-9);
  }
}

TEST_CASE("RoleMismatch: set binding, typed access and directory marker") {
  ProviderSet set;
  CHECK(code_of([&] { set.bind(ProviderRole::Tracker, make_stub_provider(ProviderRole::Segmenter)); }) ==
        ErrorCode::RoleMismatch);
  const ProviderHandle seg = make_stub_provider(ProviderRole::Segmenter);
  CHECK(code_of([&] { seg.as<TrackerProvider>(); }) == ErrorCode::RoleMismatch);
  CHECK(code_of([&] { ProviderHandle().as<TrackerProvider>(); }) == ErrorCode::RoleMismatch);

  const std::string dir = testutil::scratch_dir("providers_marker");
  write_file_atomic((fs::path(dir) / "provider.json").string(), R"({"role": "tracker"})");
  CHECK(code_of([&] { load_file_provider(ProviderRole::Segmenter, dir); }) == ErrorCode::RoleMismatch);
  CHECK(load_file_provider(ProviderRole::Tracker, dir).role() == ProviderRole::Tracker);
  fs::remove_all(dir);
}

TEST_CASE("incomplete set names the unbound role") {
  ProviderSet set = make_stub_providers();
  CHECK_NOTHROW(set.require_complete());
  ProviderSet partial;
  partial.bind(ProviderRole::Planner, make_stub_provider(ProviderRole::Planner));
  try {
    partial.require_complete();
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(std::string(e.what()).find("image_synth") != std::string::npos);
  }
}

TEST_CASE("file providers: empty directory fails at call time with MissingArtifact") {
  const std::string dir = testutil::scratch_dir("providers_empty");
  ProviderSet stubs = make_stub_providers();
  SceneLayout scene;
  const VideoClip clip = stub_clip(stubs, 4, &scene);
  AssetEntry e;
  e.name = "mug";
  for (ProviderRole r : all_provider_roles()) {
    const ProviderHandle h = load_file_provider(r, dir);
    CHECK(h.role() == r);
    ErrorCode code = ErrorCode::ConfigError;
    switch (r) {
      case ProviderRole::Planner: code = code_of([&] { h.as<PlannerProvider>().plan("p", 0); }); break;
      case ProviderRole::ImageSynth:
      case ProviderRole::StyleRefiner: code = code_of([&] { h.as<ImageProvider>().produce("k", 0); }); break;
      case ProviderRole::Reconstructor: code = code_of([&] { h.as<ReconstructorProvider>().reconstruct(e, 0); }); break;
      case ProviderRole::VideoGen: code = code_of([&] { h.as<VideoProvider>().generate({scene, "a", "b", 0}); }); break;
      case ProviderRole::Segmenter: code = code_of([&] { h.as<SegmenterProvider>().segment(clip); }); break;
      case ProviderRole::Tracker: code = code_of([&] { h.as<TrackerProvider>().track(clip, MaskImage()); }); break;
      case ProviderRole::DepthEstimator: code = code_of([&] { h.as<DepthProvider>().estimate(clip, 2); }); break;
      case ProviderRole::GraspGen: code = code_of([&] { h.as<GraspProvider>().propose(scene.objects[0], 0); }); break;
    }
    CHECK_MESSAGE(code == ErrorCode::MissingArtifact, to_string(r));
  }
  CHECK(code_of([] { load_file_provider(ProviderRole::Tracker, "/nonexistent/groundtrace"); }) ==
        ErrorCode::ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("file providers replay stub observations byte for byte") {
  const ProviderSet stubs = make_stub_providers();
  const VideoClip clip = stub_clip(stubs, 11);
  const TrackBundle bundle = observe(stubs, clip);

  const std::string dir = testutil::scratch_dir("providers_replay");
  write_bundle(dir, bundle);
  ordered_json cam;
  cam["pose"] = pose_to_json(clip.camera_pose());
  write_file_atomic((fs::path(dir) / "camera.json").string(), cam.dump());

  ProviderSet files = make_stub_providers();
  for (ProviderRole r : {ProviderRole::VideoGen, ProviderRole::Segmenter, ProviderRole::Tracker,
                         ProviderRole::DepthEstimator}) {
    files.bind(r, make_provider(r, "file:" + dir));
  }
  const VideoClip replay = files.as<VideoProvider>(ProviderRole::VideoGen).generate({});
  CHECK(replay.directory() == dir);
  CHECK(translation_distance(replay.camera_pose(), clip.camera_pose()) < 1e-12);
  const TrackBundle again = observe(files, replay);
  CHECK(encode_tracks(again) == encode_tracks(bundle));
  CHECK(encode_mask(again.mask) == encode_mask(bundle.mask));
  for (int t = 0; t < bundle.num_frames; ++t) CHECK(encode_depth(again.depth[t]) == encode_depth(bundle.depth[t]));
  CHECK_THROWS_AS(replay.rendered(), Error);
  fs::remove_all(dir);
}

TEST_CASE("stub observation is deterministic and shared across roles") {
  const ProviderSet stubs = make_stub_providers();
  const VideoClip a = stub_clip(stubs, 21);
  const VideoClip b = stub_clip(stubs, 21);
  CHECK(a.reference() == b.reference());
  const TrackBundle ba = observe(stubs, a);
  CHECK(ba == observe(stubs, b));
  CHECK(&a.rendered() == &a.rendered());
  const VideoClip c = stub_clip(stubs, 22);
  CHECK(!(observe(stubs, c) == ba));
}

TEST_CASE("stub video: target rides to a reachable spot on the receptacle") {
  const ProviderSet stubs = make_stub_providers();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneLayout scene;
    const VideoClip clip = stub_clip(stubs, seed, &scene);
    const FixtureSpec& spec = *clip.script();
    const PlacedObject* target = scene.find(spec.target);
    REQUIRE(target != nullptr);
    const Pose start = pose_at_frame(spec.motion, 0);
    const Pose end = pose_at_frame(spec.motion, spec.num_frames - 1);
    CHECK(translation_distance(start, target->pose) < 1e-12);
    // Back down at the starting height: the object ends resting on the same surface.
    CHECK(std::abs(end.translation.z() - start.translation.z()) < 1e-9);
    const double moved = (end.translation - start.translation).head<2>().norm();
    CHECK(moved > 0.0);
    CHECK(moved <= StubOptions{}.move_max_m + 1e-9);
  }
}
