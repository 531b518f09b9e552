#include "groundtrace/providers.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "groundtrace/formats.hpp"
#include "groundtrace/hash.hpp"
#include "groundtrace/json_io.hpp"

namespace groundtrace {

namespace fs = std::filesystem;

namespace {

constexpr std::array<ProviderRole, kNumProviderRoles> kRoles{
    ProviderRole::Planner,      ProviderRole::ImageSynth, ProviderRole::Segmenter,
    ProviderRole::Reconstructor, ProviderRole::StyleRefiner, ProviderRole::VideoGen,
    ProviderRole::Tracker,      ProviderRole::DepthEstimator, ProviderRole::GraspGen};

constexpr std::array<std::string_view, kNumProviderRoles> kRoleNames{
    "planner", "image_synth", "segmenter",      "reconstructor", "style_refiner",
    "video_gen", "tracker",   "depth_estimator", "grasp_gen"};

std::string in_dir(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// --- file providers ---------------------------------------------------------

class FilePlanner final : public PlannerProvider {
 public:
  explicit FilePlanner(std::string dir) : dir_(std::move(dir)) {}
  AssetManifest plan(const std::string&, std::uint64_t) const override {
    return load_manifest(in_dir(dir_, "manifest.json"));
  }

 private:
  std::string dir_;
};

class FileImage final : public ImageProvider {
 public:
  FileImage(ProviderRole role, std::string dir) : role_(role), dir_(std::move(dir)) {}
  ProviderRole role() const override { return role_; }
  std::string produce(const std::string& key, std::uint64_t) const override {
    const std::string path = in_dir(dir_, key);
    if (!fs::is_regular_file(path)) throw Error(ErrorCode::MissingArtifact, path);
    return path;
  }

 private:
  ProviderRole role_;
  std::string dir_;
};

class FileReconstructor final : public ReconstructorProvider {
 public:
  explicit FileReconstructor(std::string dir) : dir_(std::move(dir)) {}
  Vec3 reconstruct(const AssetEntry& entry, std::uint64_t) const override {
    const std::string path = in_dir(dir_, "extents.json");
    const json doc = parse_json(read_text_file(path), ErrorCode::SyntaxError, path);
    if (!doc.is_object() || !doc.contains(entry.name)) {
      throw Error(ErrorCode::MissingArtifact, path + ": no extent for '" + entry.name + "'");
    }
    const Vec3 e = vec3_from_json(doc[entry.name], ErrorCode::SchemaError, entry.name);
    if (!(e.minCoeff() > 0.0) || !is_finite(e)) {
      throw Error(ErrorCode::SchemaError, path + ": extent of '" + entry.name + "' must be positive");
    }
    return e;
  }

 private:
  std::string dir_;
};

class FileVideo final : public VideoProvider {
 public:
  explicit FileVideo(std::string dir) : dir_(std::move(dir)) {}
  VideoClip generate(const VideoRequest&) const override {
    const std::string path = in_dir(dir_, "camera.json");
    const json doc = parse_json(read_text_file(path), ErrorCode::SyntaxError, path);
    if (!doc.is_object() || !doc.contains("pose")) {
      throw Error(ErrorCode::SchemaError, path + ": expected {\"pose\": ...}");
    }
    return VideoClip::from_directory(dir_, pose_from_json(doc["pose"], ErrorCode::SchemaError, path));
  }

 private:
  std::string dir_;
};

class FileSegmenter final : public SegmenterProvider {
 public:
  explicit FileSegmenter(std::string dir) : dir_(std::move(dir)) {}
  MaskImage segment(const VideoClip&) const override {
    return decode_mask(read_text_file(in_dir(dir_, "mask.msk")));
  }

 private:
  std::string dir_;
};

class FileTracker final : public TrackerProvider {
 public:
  explicit FileTracker(std::string dir) : dir_(std::move(dir)) {}
  TrackSet track(const VideoClip&, const MaskImage&) const override {
    TrackBundle b;
    decode_tracks(read_text_file(in_dir(dir_, "tracks.jsonl")), b);
    return {b.num_frames, b.num_points, b.intrinsics, std::move(b.uv), std::move(b.visible)};
  }

 private:
  std::string dir_;
};

class FileDepth final : public DepthProvider {
 public:
  explicit FileDepth(std::string dir) : dir_(std::move(dir)) {}
  std::vector<DepthFrame> estimate(const VideoClip&, int num_frames) const override {
    std::vector<DepthFrame> out;
    out.reserve(static_cast<std::size_t>(std::max(0, num_frames)));
    for (int t = 0; t < num_frames; ++t) {
      out.push_back(decode_depth(read_text_file(in_dir(dir_, depth_file_name(t)))));
    }
    return out;
  }

 private:
  std::string dir_;
};

class FileGrasp final : public GraspProvider {
 public:
  explicit FileGrasp(std::string dir) : dir_(std::move(dir)) {}
  GraspPose propose(const PlacedObject&, std::uint64_t) const override {
    return parse_grasp(read_text_file(in_dir(dir_, "grasp.json")));
  }

 private:
  std::string dir_;
};

// --- stubs ----------------------------------------------------------------

struct StubAsset {
  const char* name;
  Vec3 lo, hi;
  const char* style;
};

const std::array<StubAsset, 6> kStubAccessories{{
    {"mug", Vec3(0.07, 0.07, 0.08), Vec3(0.09, 0.09, 0.11), "ceramic"},
    {"box", Vec3(0.06, 0.06, 0.05), Vec3(0.11, 0.11, 0.10), "cardboard"},
    {"can", Vec3(0.06, 0.06, 0.09), Vec3(0.07, 0.07, 0.12), "metal"},
    {"block", Vec3(0.05, 0.05, 0.05), Vec3(0.08, 0.08, 0.08), "wooden"},
    {"jar", Vec3(0.07, 0.07, 0.09), Vec3(0.09, 0.09, 0.13), "glass"},
    {"book", Vec3(0.14, 0.10, 0.03), Vec3(0.20, 0.14, 0.04), "paper"},
}};

Vec3 draw_extent(std::mt19937_64& rng, const Vec3& lo, const Vec3& hi) {
  Vec3 e;
  for (int i = 0; i < 3; ++i) e[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
  return e;
}

class StubPlanner final : public PlannerProvider {
 public:
  AssetManifest plan(const std::string& prompt, std::uint64_t seed) const override {
    std::mt19937_64 rng(mix_seed(seed, 101));
    AssetManifest m;
    m.prompt = prompt;
    m.seed = static_cast<std::int64_t>(seed >> 1);
    AssetEntry table;
    table.name = "table";
    table.category = Category::Anchor;
    table.description = "work table";
    table.style_tags = {"wooden"};
    table.nominal_extent = draw_extent(rng, Vec3(1.0, 0.7, 0.70), Vec3(1.4, 1.0, 0.80));
    m.entries.push_back(table);

    std::vector<std::size_t> kinds(kStubAccessories.size());
    for (std::size_t i = 0; i < kinds.size(); ++i) kinds[i] = i;
    std::shuffle(kinds.begin(), kinds.end(), rng);
    const int count = 1 + std::uniform_int_distribution<int>(0, 3)(rng);
    for (int i = 0; i < count; ++i) {
      const StubAsset& a = kStubAccessories[kinds[static_cast<std::size_t>(i)]];
      AssetEntry e;
      e.name = a.name;
      e.category = Category::Accessory;
      e.description = std::string(a.style) + " " + a.name;
      e.style_tags = {a.style};
      e.nominal_extent = draw_extent(rng, a.lo, a.hi);
      e.parent = "table";
      m.entries.push_back(e);
    }
    m.target = m.entries[1].name;
    m.receptacle = "table";
    return m;
  }
};

class StubImage final : public ImageProvider {
 public:
  explicit StubImage(ProviderRole role) : role_(role) {}
  ProviderRole role() const override { return role_; }
  std::string produce(const std::string& key, std::uint64_t seed) const override {
    return "stub:" + std::string(to_string(role_)) + "/" + hex64(mix_seed(seed, fnv1a64(key)));
  }

 private:
  ProviderRole role_;
};

class StubReconstructor final : public ReconstructorProvider {
 public:
  explicit StubReconstructor(const StubOptions& o) : lo_(o.reconstruct_scale_min), hi_(o.reconstruct_scale_max) {}
  Vec3 reconstruct(const AssetEntry& entry, std::uint64_t seed) const override {
    // Arbitrary mesh units: nominal geometry times a seeded scale.
    std::mt19937_64 rng(mix_seed(seed, fnv1a64(entry.name)));
    const double s = std::exp(std::uniform_real_distribution<double>(std::log(lo_), std::log(hi_))(rng));
    return entry.nominal_extent * s;
  }

 private:
  double lo_, hi_;
};

class StubVideo final : public VideoProvider {
 public:
  explicit StubVideo(const StubOptions& o) : o_(o) {}

  VideoClip generate(const VideoRequest& req) const override {
    const PlacedObject* target = req.scene.find(req.target);
    if (target == nullptr) throw Error(ErrorCode::SemanticError, "no target '" + req.target + "'");
    const PlacedObject* base = req.scene.find(req.receptacle);
    std::mt19937_64 rng(mix_seed(req.seed, 201));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    // Pick up, carry across the receptacle, put down: a three-segment script.
    // Draws that would push the target through a neighbour are redrawn.
    const Pose start = target->pose;
    const int last = o_.num_frames - 1;
    const int lift_end = std::max(1, last / 4);
    const int carry_end = std::max(lift_end + 1, (3 * last) / 4);
    const Vec3 up(0.0, 0.0, o_.lift_m);

    FixtureSpec spec;
    spec.scene = req.scene;
    spec.target = req.target;
    spec.num_frames = o_.num_frames;
    spec.num_points = o_.num_points;
    spec.intrinsics = default_fixture_intrinsics();
    spec.camera = top_down_camera(req.scene, req.target);
    spec.noise = o_.noise;
    spec.seed = mix_seed(req.seed, 202);
    for (int attempt = 0; attempt < kMaxScriptDraws; ++attempt) {
      const double dir = 2.0 * std::numbers::pi * u01(rng);
      const double len = o_.move_min_m + (o_.move_max_m - o_.move_min_m) * u01(rng);
      Vec3 goal = start.translation + len * Vec3(std::cos(dir), std::sin(dir), 0.0);
      if (base != nullptr) {
        const Aabb top = base->aabb();
        const Vec3 half = 0.5 * target->extent;
        for (int i = 0; i < 2; ++i) {
          const double lo = top.min[i] + half[i], hi = top.max[i] - half[i];
          if (lo <= hi) goal[i] = std::clamp(goal[i], lo, hi);
        }
      }
      const double yaw = o_.max_yaw_rad * (2.0 * u01(rng) - 1.0);
      const UnitQuat turned = UnitQuat::from_axis_angle(Vec3::UnitZ(), yaw) * start.rotation;
      spec.motion = {{0, start},
                     {lift_end, {start.translation + up, start.rotation}},
                     {carry_end, {goal + up, turned}},
                     {last, {goal, turned}}};
      if (carry_end >= last) spec.motion.pop_back();
      if (!first_penetration(spec)) return VideoClip::from_script(std::move(spec));
    }
    throw Error(ErrorCode::SemanticError, "no collision-free carry for '" + req.target + "' in " +
                                              std::to_string(kMaxScriptDraws) + " draws");
  }

 private:
  static constexpr int kMaxScriptDraws = 32;
  StubOptions o_;
};

class StubSegmenter final : public SegmenterProvider {
 public:
  MaskImage segment(const VideoClip& clip) const override { return clip.rendered().bundle.mask; }
};

class StubTracker final : public TrackerProvider {
 public:
  TrackSet track(const VideoClip& clip, const MaskImage&) const override {
    const TrackBundle& b = clip.rendered().bundle;
    return {b.num_frames, b.num_points, b.intrinsics, b.uv, b.visible};
  }
};

class StubDepth final : public DepthProvider {
 public:
  std::vector<DepthFrame> estimate(const VideoClip& clip, int num_frames) const override {
    const TrackBundle& b = clip.rendered().bundle;
    if (num_frames != b.num_frames) {
      throw Error(ErrorCode::SchemaError, "depth requested for " + std::to_string(num_frames) +
                                              " frames, clip has " + std::to_string(b.num_frames));
    }
    return b.depth;
  }
};

class StubGrasp final : public GraspProvider {
 public:
  GraspPose propose(const PlacedObject& target, std::uint64_t) const override {
    return top_down_grasp(target.extent);
  }
};

}  // namespace

std::string_view to_string(ProviderRole role) { return kRoleNames[static_cast<std::size_t>(role)]; }

ProviderRole role_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kRoles.size(); ++i) {
    if (kRoleNames[i] == name) return kRoles[i];
  }
  throw Error(ErrorCode::ConfigError, "unknown provider role '" + std::string(name) + "'");
}

const std::array<ProviderRole, kNumProviderRoles>& all_provider_roles() { return kRoles; }

VideoClip VideoClip::from_script(FixtureSpec spec) {
  VideoClip c;
  c.camera_pose_ = spec.camera;
  c.reference_ = "stub:video_gen/" + hex64(spec.seed);
  c.script_ = std::move(spec);
  return c;
}

VideoClip VideoClip::from_directory(std::string dir, Pose camera_pose) {
  VideoClip c;
  c.reference_ = dir;
  c.directory_ = std::move(dir);
  c.camera_pose_ = camera_pose;
  return c;
}

const Fixture& VideoClip::rendered() const {
  if (!script_) throw Error(ErrorCode::SemanticError, "clip '" + reference_ + "' has no motion script");
  std::call_once(cache_->once, [&] { cache_->fixture = std::make_shared<const Fixture>(synth_fixture(*script_)); });
  if (!cache_->fixture) throw Error(ErrorCode::SemanticError, "clip rendering failed earlier");
  return *cache_->fixture;
}

ProviderRole ProviderHandle::role() const {
  if (!provider_) throw Error(ErrorCode::ConfigError, "no provider bound");
  return provider_->role();
}

ProviderHandle load_file_provider(ProviderRole role, const std::string& directory) {
  if (!fs::is_directory(directory)) {
    throw Error(ErrorCode::ConfigError, "provider directory '" + directory + "' does not exist");
  }
  const std::string marker = in_dir(directory, "provider.json");
  if (fs::exists(marker)) {
    const json doc = parse_json(read_text_file(marker), ErrorCode::ConfigError, marker);
    if (!doc.is_object() || !doc.contains("role") || !doc["role"].is_string()) {
      throw Error(ErrorCode::ConfigError, marker + ": expected {\"role\": name}");
    }
    const std::string declared = doc["role"].get<std::string>();
    if (declared != to_string(role)) {
      throw Error(ErrorCode::RoleMismatch, directory + " holds " + declared + " artifacts, bound as " +
                                               std::string(to_string(role)));
    }
  }
  std::shared_ptr<const Provider> p;
  switch (role) {
    case ProviderRole::Planner: p = std::make_shared<FilePlanner>(directory); break;
    case ProviderRole::ImageSynth:
    case ProviderRole::StyleRefiner: p = std::make_shared<FileImage>(role, directory); break;
    case ProviderRole::Reconstructor: p = std::make_shared<FileReconstructor>(directory); break;
    case ProviderRole::VideoGen: p = std::make_shared<FileVideo>(directory); break;
    case ProviderRole::Segmenter: p = std::make_shared<FileSegmenter>(directory); break;
    case ProviderRole::Tracker: p = std::make_shared<FileTracker>(directory); break;
    case ProviderRole::DepthEstimator: p = std::make_shared<FileDepth>(directory); break;
    case ProviderRole::GraspGen: p = std::make_shared<FileGrasp>(directory); break;
  }
  return ProviderHandle(std::move(p));
}

ProviderHandle make_stub_provider(ProviderRole role, const StubOptions& options) {
  std::shared_ptr<const Provider> p;
  switch (role) {
    case ProviderRole::Planner: p = std::make_shared<StubPlanner>(); break;
    case ProviderRole::ImageSynth:
    case ProviderRole::StyleRefiner: p = std::make_shared<StubImage>(role); break;
    case ProviderRole::Reconstructor: p = std::make_shared<StubReconstructor>(options); break;
    case ProviderRole::VideoGen: p = std::make_shared<StubVideo>(options); break;
    case ProviderRole::Segmenter: p = std::make_shared<StubSegmenter>(); break;
    case ProviderRole::Tracker: p = std::make_shared<StubTracker>(); break;
    case ProviderRole::DepthEstimator: p = std::make_shared<StubDepth>(); break;
    case ProviderRole::GraspGen: p = std::make_shared<StubGrasp>(); break;
  }
  return ProviderHandle(std::move(p));
}

void ProviderSet::bind(ProviderRole role, ProviderHandle handle) {
  if (handle.role() != role) {
    throw Error(ErrorCode::RoleMismatch, std::string(to_string(handle.role())) + " provider bound as " +
                                             std::string(to_string(role)));
  }
  handles_[static_cast<std::size_t>(role)] = std::move(handle);
}

const ProviderHandle& ProviderSet::get(ProviderRole role) const {
  return handles_[static_cast<std::size_t>(role)];
}

void ProviderSet::require_complete() const {
  for (ProviderRole r : kRoles) {
    if (!get(r).bound()) throw Error(ErrorCode::ConfigError, "no provider bound for " + std::string(to_string(r)));
  }
}

ProviderSet make_stub_providers(const StubOptions& options) {
  ProviderSet set;
  for (ProviderRole r : kRoles) set.bind(r, make_stub_provider(r, options));
  return set;
}

ProviderHandle make_provider(ProviderRole role, const std::string& binding, const StubOptions& options) {
  if (binding == "stub") return make_stub_provider(role, options);
  if (binding.rfind("file:", 0) == 0 && binding.size() > 5) return load_file_provider(role, binding.substr(5));
  throw Error(ErrorCode::ConfigError, "provider binding '" + binding + "' for " + std::string(to_string(role)) +
                                          ": expected stub or file:<dir>");
}

TrackBundle observe(const ProviderSet& providers, const VideoClip& clip) {
  TrackBundle b;
  b.mask = providers.as<SegmenterProvider>(ProviderRole::Segmenter).segment(clip);
  TrackSet tracks = providers.as<TrackerProvider>(ProviderRole::Tracker).track(clip, b.mask);
  b.num_frames = tracks.num_frames;
  b.num_points = tracks.num_points;
  b.intrinsics = tracks.intrinsics;
  b.uv = std::move(tracks.uv);
  b.visible = std::move(tracks.visible);
  b.depth = providers.as<DepthProvider>(ProviderRole::DepthEstimator).estimate(clip, b.num_frames);
  validate_bundle(b);
  return b;
}

}  // namespace groundtrace
