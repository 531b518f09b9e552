#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "groundtrace/errors.hpp"
#include "groundtrace/fixture.hpp"
#include "groundtrace/grounding.hpp"
#include "groundtrace/kinematics.hpp"
#include "groundtrace/layout.hpp"
#include "groundtrace/manifest.hpp"

namespace groundtrace {

enum class ProviderRole {
  Planner,
  ImageSynth,
  Segmenter,
  Reconstructor,
  StyleRefiner,
  VideoGen,
  Tracker,
  DepthEstimator,
  GraspGen,
};

inline constexpr std::size_t kNumProviderRoles = 9;

std::string_view to_string(ProviderRole role);
/// ConfigError for an unknown name.
ProviderRole role_from_string(std::string_view name);
const std::array<ProviderRole, kNumProviderRoles>& all_provider_roles();

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ProviderRole role() const = 0;
};

/// Output of the video generator: either a motion script rendered on demand
/// (stubs) or a directory of pre-computed per-frame artifacts (file providers).
class VideoClip {
 public:
  static VideoClip from_script(FixtureSpec spec);
  static VideoClip from_directory(std::string dir, Pose camera_pose);

  const std::string& reference() const { return reference_; }
  /// Camera frame in world (Z forward, X right, Y down).
  const Pose& camera_pose() const { return camera_pose_; }
  const std::optional<FixtureSpec>& script() const { return script_; }
  const std::string& directory() const { return directory_; }

  /// Renders the script once per clip; shared by the stub tracker, segmenter
  /// and depth estimator. SemanticError for directory clips.
  const Fixture& rendered() const;

 private:
  std::string reference_;
  Pose camera_pose_;
  std::optional<FixtureSpec> script_;
  std::string directory_;
  struct Cache {
    std::once_flag once;
    std::shared_ptr<const Fixture> fixture;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

class PlannerProvider : public Provider {
 public:
  ProviderRole role() const override { return ProviderRole::Planner; }
  virtual AssetManifest plan(const std::string& prompt, std::uint64_t seed) const = 0;
};

/// Image synthesis and style refinement produce images this engine never
/// inspects; they hand back an artifact reference.
class ImageProvider : public Provider {
 public:
  virtual std::string produce(const std::string& key, std::uint64_t seed) const = 0;
};

class ReconstructorProvider : public Provider {
 public:
  ProviderRole role() const override { return ProviderRole::Reconstructor; }
  /// Raw (unscaled) bounding extent of an asset.
  virtual Vec3 reconstruct(const AssetEntry& entry, std::uint64_t seed) const = 0;
};

struct VideoRequest {
  SceneLayout scene;
  std::string target;
  std::string receptacle;
  std::uint64_t seed = 0;
};

class VideoProvider : public Provider {
 public:
  ProviderRole role() const override { return ProviderRole::VideoGen; }
  virtual VideoClip generate(const VideoRequest& request) const = 0;
};

class SegmenterProvider : public Provider {
 public:
  ProviderRole role() const override { return ProviderRole::Segmenter; }
  /// Frame-0 mask of the target.
  virtual MaskImage segment(const VideoClip& clip) const = 0;
};

struct TrackSet {
  int num_frames = 0;
  int num_points = 0;
  CameraIntrinsics intrinsics;
  std::vector<Pixel> uv;
  std::vector<std::uint8_t> visible;
};

class TrackerProvider : public Provider {
 public:
  ProviderRole role() const override { return ProviderRole::Tracker; }
  virtual TrackSet track(const VideoClip& clip, const MaskImage& mask) const = 0;
};

class DepthProvider : public Provider {
 public:
  ProviderRole role() const override { return ProviderRole::DepthEstimator; }
  virtual std::vector<DepthFrame> estimate(const VideoClip& clip, int num_frames) const = 0;
};

class GraspProvider : public Provider {
 public:
  ProviderRole role() const override { return ProviderRole::GraspGen; }
  virtual GraspPose propose(const PlacedObject& target, std::uint64_t seed) const = 0;
};

/// Type-erased provider. as<T>() raises RoleMismatch when the wrapped
/// provider does not implement T.
class ProviderHandle {
 public:
  ProviderHandle() = default;
  explicit ProviderHandle(std::shared_ptr<const Provider> p) : provider_(std::move(p)) {}

  bool bound() const { return provider_ != nullptr; }
  ProviderRole role() const;

  template <class T>
  const T& as() const {
    const T* typed = dynamic_cast<const T*>(provider_.get());
    if (typed == nullptr) {
      throw Error(ErrorCode::RoleMismatch,
                  provider_ ? "provider bound as " + std::string(to_string(provider_->role())) +
                                  " does not serve this request"
                            : "no provider bound");
    }
    return *typed;
  }

 private:
  std::shared_ptr<const Provider> provider_;
};

/// Per-role file artifacts (relative to the directory):
///   planner: manifest.json; reconstructor: extents.json {name: [x,y,z]};
///   image_synth / style_refiner: <key>; video_gen: camera.json {pose};
///   segmenter: mask.msk; tracker: tracks.jsonl; depth_estimator: depth_NNNNN.dpf;
///   grasp_gen: grasp.json.
/// An optional provider.json {"role": "..."} must agree with `role`
/// (RoleMismatch). Missing artifacts raise MissingArtifact when called.
ProviderHandle load_file_provider(ProviderRole role, const std::string& directory);

struct StubOptions {
  int num_frames = 30;
  int num_points = 128;
  FixtureNoise noise{0.3, 0.001, 0.0};
  double reconstruct_scale_min = 0.5;
  double reconstruct_scale_max = 2.0;
  double move_min_m = 0.05;
  double move_max_m = 0.12;
  double lift_m = 0.04;
  double max_yaw_rad = 0.5;
};

ProviderHandle make_stub_provider(ProviderRole role, const StubOptions& options = {});

/// One handle per role.
class ProviderSet {
 public:
  /// RoleMismatch when handle.role() != role.
  void bind(ProviderRole role, ProviderHandle handle);
  const ProviderHandle& get(ProviderRole role) const;
  /// ConfigError naming the first unbound role.
  void require_complete() const;

  template <class T>
  const T& as(ProviderRole role) const {
    return get(role).as<T>();
  }

 private:
  std::array<ProviderHandle, kNumProviderRoles> handles_;
};

ProviderSet make_stub_providers(const StubOptions& options = {});

/// Binds a "stub" or "file:<dir>" description. ConfigError otherwise.
ProviderHandle make_provider(ProviderRole role, const std::string& binding,
                             const StubOptions& options = {});

/// Tracker + segmenter + depth output assembled into a bundle.
TrackBundle observe(const ProviderSet& providers, const VideoClip& clip);

}  // namespace groundtrace
