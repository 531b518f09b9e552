#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groundtrace/kinematics.hpp"
#include "groundtrace/layout.hpp"

namespace groundtrace {

/// One timestep of an episode file.
struct EpisodeStep {
  double timestamp_s = 0.0;
  std::array<double, 3> position_m{};
  std::array<double, 4> quaternion_wxyz{1.0, 0.0, 0.0, 0.0};
  int gripper = 0;  // 0 open, 1 closed
  std::vector<double> joints;

  Pose pose() const;
  friend bool operator==(const EpisodeStep&, const EpisodeStep&) = default;
};

struct EpisodeContext {
  std::string prompt;
  std::string manifest_hash;
  std::string scene_file;  // relative to the dataset root
  std::uint64_t seed = 0;

  friend bool operator==(const EpisodeContext&, const EpisodeContext&) = default;
};

struct EpisodeQuality {
  std::vector<double> per_frame_rms;  // m
  std::vector<int> dropped_tracks;
  double ik_max_position_error = 0.0;  // m
  double ik_max_angle_error = 0.0;     // rad

  friend bool operator==(const EpisodeQuality&, const EpisodeQuality&) = default;
};

struct PhaseCounts {
  int approach = 0;
  int manipulate = 0;
  int release = 0;

  int total() const { return approach + manipulate + release; }
  friend bool operator==(const PhaseCounts&, const PhaseCounts&) = default;
};

struct Episode {
  std::int64_t episode_id = 0;
  int sub_task_index = 0;
  EpisodeContext context;
  std::vector<EpisodeStep> steps;
  /// One entry per sub-task; empty for hand-built episodes.
  std::vector<PhaseCounts> phases;
  /// First step index of every sub-task.
  std::vector<int> sub_task_starts{0};
  EpisodeQuality quality;
  /// Robot base in world; joint values are relative to it.
  std::array<double, 3> base_position_m{};
  std::array<double, 4> base_quaternion_wxyz{1.0, 0.0, 0.0, 0.0};

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Pairs an end-effector trajectory with its joint solution. SchemaError on
/// length mismatch.
Episode make_episode(std::int64_t id, const EpisodeContext& context, const EeTrajectory& ee,
                     const JointTrajectory& joints, const EpisodeQuality& quality,
                     const Pose& robot_base = Pose::identity());

/// Finite values only; consistent lengths. SchemaError.
void validate_episode(const Episode& episode);

/// Canonical text: fields in fixed order, every real rounded to 9 significant
/// digits and printed in its shortest round-trip form.
std::string encode_episode_records(const Episode& episode);
std::string encode_episode_meta(const Episode& episode);
/// SyntaxError / SchemaError.
Episode parse_episode(const std::string& records, const std::string& meta);

std::string episode_file_stem(std::int64_t id);  // "ep_000042"

struct DatasetInfo {
  std::string version = "groundtrace-dataset";
  int format_version = 1;
  std::int64_t num_episodes = 0;
  std::vector<std::int64_t> episode_ids;
  std::string chain_config_hash;
  std::uint64_t seed = 0;
  // Wall-clock fields; excluded from determinism comparisons.
  std::string created_wall_clock;
  double elapsed_s = 0.0;
  double generation_rate = 0.0;  // episodes per hour
};

inline const std::vector<std::string>& wall_clock_fields() {
  static const std::vector<std::string> f{"created_wall_clock", "elapsed_s", "generation_rate"};
  return f;
}

/// Creates root/episodes and root/scenes and writes root/chain.json.
void init_dataset(const std::string& root, const KinematicChain& chain);

/// Writes root/scenes/<hash>.json (content addressed) and returns the
/// root-relative path.
std::string store_scene(const std::string& root, const SceneLayout& scene);

/// Writes episodes/ep_<id>.jsonl and .meta.json atomically. DuplicateEpisode
/// if either exists; IoFailure on write errors. Returns the written paths.
std::vector<std::string> emit_episode(const Episode& episode, const std::string& root);

Episode load_episode(const std::string& root, std::int64_t id);

/// Scans root/episodes and writes root/manifest.json; num_episodes and
/// episode_ids come from disk.
DatasetInfo finalize_dataset(const std::string& root, std::uint64_t seed, double elapsed_s);

DatasetInfo read_dataset_info(const std::string& root);

/// Concatenates sub-task episodes. Timestamps of each later segment are
/// shifted so the sequence stays strictly increasing. DiscontinuousChain when
/// an end-effector position gap exceeds `max_gap_m`; SemanticError when the
/// contexts differ or joint dimensions disagree.
Episode chain_subtasks(const std::vector<Episode>& episodes, double max_gap_m = 0.005);

struct EpisodeReport {
  std::int64_t episode_id = 0;
  bool passed = true;
  std::vector<std::string> reasons;
};

struct ValidationReport {
  std::vector<std::string> manifest_failures;
  std::vector<EpisodeReport> episodes;

  bool passed() const;
  std::size_t passed_count() const;
  std::string summary() const;
};

/// Never throws for dataset content problems. Episode reasons: ParseError,
/// NonFinite, LengthMismatch, MonotoneTimestamps, JointLimits,
/// GripperTransitions, PhaseCounts, MissingScene. Manifest reasons:
/// MissingManifest, ManifestSchema, EpisodeCount, EpisodeIds, MissingChain,
/// ChainHash.
ValidationReport validate_dataset(const std::string& root);

}  // namespace groundtrace
