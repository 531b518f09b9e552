#include <doctest.h>

#include <filesystem>
#include <mutex>
#include <set>

#include "groundtrace/errors.hpp"
#include "groundtrace/json_io.hpp"
#include "groundtrace/pipeline.hpp"
#include "pipeline_checks.hpp"
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
  return ErrorCode::SchemaError;
}

}  // namespace

TEST_CASE("config: defaults, overrides and relative paths") {
  const std::string dir = testutil::scratch_dir("pipeline_cfg");
  fs::create_directories(fs::path(dir) / "tracks");
  const PipelineConfig c = parse_pipeline_config(R"({
    "providers": {"tracker": "file:tracks"},
    "output_root": "out",
    "seed": 12, "episodes": 3, "workers": 2,
    "grounding": {"num_points": 64, "smooth_window": 3},
    "ik": {"ang_tol_deg": 0.5},
    "stub": {"max_yaw_deg": 10}
  })", dir);
  CHECK(c.bindings[static_cast<std::size_t>(ProviderRole::Tracker)] == "file:" + (fs::path(dir) / "tracks").string());
  CHECK(c.bindings[static_cast<std::size_t>(ProviderRole::Planner)] == "stub");
  CHECK(c.output_root == (fs::path(dir) / "out").string());
  CHECK(c.seed == 12);
  CHECK(c.episodes == 3);
  CHECK(c.workers == 2);
  CHECK(c.grounding.num_points == 64);
  CHECK(c.stub.num_points == 64);
  CHECK(c.ik.ang_tol == doctest::Approx(0.5 * 3.14159265358979 / 180.0));
  CHECK(c.stub.max_yaw_rad == doctest::Approx(10 * 3.14159265358979 / 180.0));
  CHECK(fs::path(c.chain_path).filename() == "chain_6dof.json");
  fs::remove_all(dir);
}

TEST_CASE("config: errors are ConfigError") {
  const std::string d = ".";
  CHECK(code_of([&] { parse_pipeline_config("{", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"sede": 1})", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"grounding": {"smoth_window": 3}})", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"grounding": {"smooth_window": 4}})", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"workers": 0})", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"seed": -1})", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"chain": "missing_chain.json"})", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"providers": {"painter": "stub"}})", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"providers": {"tracker": "file:/nonexistent/x"}})", d); }) ==
        ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"providers": {"tracker": "gpu"}})", d); }) == ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"stub": {"corruption_fraction": 1.0}})", d); }) ==
        ErrorCode::ConfigError);
  CHECK(code_of([&] { parse_pipeline_config(R"({"workspace": {"min": [0,0,0], "max": [0,1,1]}})", d); }) ==
        ErrorCode::ConfigError);
  CHECK(code_of([] { load_pipeline_config("/nonexistent/pipeline.json"); }) == ErrorCode::ConfigError);
}

TEST_CASE("episode seeds are stable and distinct") {
  CHECK(episode_seed(1, 0) == episode_seed(1, 0));
  std::set<std::uint64_t> seen;
  for (std::uint64_t g = 0; g < 4; ++g) {
    for (std::int64_t i = 0; i < 250; ++i) seen.insert(episode_seed(g, i));
  }
  CHECK(seen.size() == 1000);
}

TEST_CASE("robot base sits beside the carry path, facing it") {
  const Vec3 pick(0.2, 0.1, 0.8), place(0.3, 0.1, 0.8);
  const Pose base = place_robot_base(pick, place, 0.75, 0.35);
  CHECK(base.translation.z() == doctest::Approx(0.75));
  const Vec3 mid = 0.5 * (pick + place);
  const Vec3 off = base.translation - Vec3(mid.x(), mid.y(), 0.75);
  CHECK(off.norm() == doctest::Approx(0.35));
  CHECK(std::abs(off.dot(place - pick)) < 1e-12);
  // The base X axis points back at the path midpoint.
  const Vec3 fwd = base.rotation.rotate(Vec3::UnitX());
  CHECK(fwd.dot(-off.normalized()) == doctest::Approx(1.0));
  CHECK(std::abs(base.rotation.rotate(Vec3::UnitZ()).z() - 1.0) < 1e-12);
}

TEST_CASE("single episodes reproduce in isolation") {
  const PipelineContext ctx{PipelineConfig()};
  for (std::int64_t i : {0, 3, 17}) {
    const EpisodeRun a = run_episode(ctx, i, std::nullopt);
    const EpisodeRun b = run_episode(ctx, i, std::nullopt);
    REQUIRE(a.ok);
    CHECK(a.seed == episode_seed(0, i));
    CHECK(encode_episode_records(*a.episode) == encode_episode_records(*b.episode));
    CHECK(encode_episode_meta(*a.episode) == encode_episode_meta(*b.episode));
  }
}

TEST_CASE("generated episodes: rigid grasp, IK within tolerance, one log line per stage") {
  PipelineConfig cfg;
  cfg.seed = 3;
  const PipelineContext ctx{cfg};
  const std::vector<std::string> stages{"plan", "assets", "layout", "video", "observe", "grounding", "grasp", "ik", "emit"};
  for (std::int64_t i = 0; i < 20; ++i) {
    std::vector<StageLog> logs;
    const EpisodeRun run = run_episode(ctx, i, std::nullopt, [&](const StageLog& s) { logs.push_back(s); });
    REQUIRE_MESSAGE(run.ok, run.failed_stage);
    CHECK(testutil::rigidity_drift(run) < 1e-9);
    CHECK(run.joints.max_position_error <= cfg.ik.pos_tol);
    CHECK(run.joints.max_angle_error <= cfg.ik.ang_tol);
    REQUIRE(logs.size() == stages.size());
    for (std::size_t k = 0; k < logs.size(); ++k) {
      CHECK(logs[k].stage == stages[k]);
      CHECK(logs[k].outcome == "ok");
      CHECK(logs[k].episode == i);
      CHECK(logs[k].format().find("stage=" + stages[k]) != std::string::npos);
    }
    for (std::size_t k = 0; k < run.joints.steps.size(); ++k) {
      CHECK_NOTHROW(check_joint_limits(run.chain, run.joints.steps[k]));
    }
  }
}

TEST_CASE("a failing stage skips the episode without aborting the batch") {
  const std::string empty = testutil::scratch_dir("pipeline_empty_tracker");
  PipelineConfig cfg;
  cfg.bindings[static_cast<std::size_t>(ProviderRole::Tracker)] = "file:" + empty;
  cfg.output_root = testutil::scratch_dir("pipeline_failing");
  cfg.episodes = 4;
  std::mutex m;
  std::vector<StageLog> logs;
  const PipelineSummary s = run_pipeline(cfg, [&](const StageLog& l) {
    std::lock_guard<std::mutex> lock(m);
    logs.push_back(l);
  });
  CHECK(s.requested == 4);
  CHECK(s.emitted == 0);
  REQUIRE(s.failures.size() == 4);
  for (const EpisodeRun& f : s.failures) {
    CHECK(f.failed_stage == "observe");
    REQUIRE(f.error);
    CHECK(f.error->code() == ErrorCode::MissingArtifact);
  }
  int failed_lines = 0;
  for (const StageLog& l : logs) failed_lines += l.outcome == "MissingArtifact";
  CHECK(failed_lines == 4);
  CHECK(read_dataset_info(cfg.output_root).num_episodes == 0);
  fs::remove_all(empty);
  fs::remove_all(cfg.output_root);
}

TEST_CASE("20% corrupted tracks: at least 95 of 100 episodes emitted") {
  PipelineConfig cfg;
  cfg.output_root = testutil::scratch_dir("pipeline_corrupt");
  cfg.episodes = 100;
  cfg.seed = 9;
  cfg.stub.noise.corruption_fraction = 0.2;
  const PipelineSummary s = run_pipeline(cfg);
  CHECK(s.emitted >= 95);
  for (const EpisodeRun& f : s.failures) CHECK(!f.failed_stage.empty());
  const ValidationReport r = validate_dataset(cfg.output_root);
  CHECK_MESSAGE(r.passed(), r.summary());
  CHECK(static_cast<int>(r.passed_count()) == s.emitted);
  fs::remove_all(cfg.output_root);
}

TEST_CASE("run_pipeline refuses a root that already holds episodes") {
  PipelineConfig cfg;
  cfg.output_root = testutil::scratch_dir("pipeline_twice");
  cfg.episodes = 1;
  REQUIRE(run_pipeline(cfg).emitted == 1);
  CHECK(code_of([&] { run_pipeline(cfg); }) == ErrorCode::ConfigError);
  cfg.episodes = 0;
  cfg.output_root = testutil::scratch_dir("pipeline_zero");
  const PipelineSummary s = run_pipeline(cfg);
  CHECK(s.emitted == 0);
  CHECK(validate_dataset(cfg.output_root).passed());
  fs::remove_all(cfg.output_root);
  fs::remove_all(testutil::scratch_dir("pipeline_twice"));
}

TEST_CASE("workers own disjoint ids and match the single-worker output") {
  PipelineConfig cfg;
  cfg.episodes = 6;
  cfg.output_root = testutil::scratch_dir("pipeline_w1");
  run_pipeline(cfg);
  cfg.workers = 3;
  const std::string w1 = cfg.output_root;
  cfg.output_root = testutil::scratch_dir("pipeline_w3");
  const PipelineSummary s = run_pipeline(cfg);
  CHECK(s.info.episode_ids == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5});
  for (std::int64_t i = 0; i < 6; ++i) CHECK(load_episode(w1, i) == load_episode(cfg.output_root, i));
  fs::remove_all(w1);
  fs::remove_all(cfg.output_root);
}
