#include "groundtrace/layout.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "groundtrace/errors.hpp"
#include "groundtrace/hash.hpp"
#include "groundtrace/json_io.hpp"

namespace groundtrace {

bool operator==(const PlacedObject& a, const PlacedObject& b) {
  return a.name == b.name && a.pose == b.pose && a.extent == b.extent &&
         a.category == b.category && a.support == b.support && a.settled == b.settled;
}

bool operator==(const SceneLayout& a, const SceneLayout& b) {
  return a.objects == b.objects && a.ground_z == b.ground_z && a.workspace.min == b.workspace.min &&
         a.workspace.max == b.workspace.max && a.seed == b.seed &&
         a.settle_report == b.settle_report;
}

const PlacedObject* SceneLayout::find(const std::string& name) const {
  for (const auto& o : objects) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

PlacedObject* SceneLayout::find(const std::string& name) {
  for (auto& o : objects) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

Aabb default_workspace() { return {Vec3(-1.5, -1.5, 0.0), Vec3(1.5, 1.5, 2.0)}; }

ScaleResult scale_to_metric(const Vec3& extent_raw, const Vec3& nominal) {
  const double product =
      (nominal.x() / extent_raw.x()) * (nominal.y() / extent_raw.y()) * (nominal.z() / extent_raw.z());
  const double factor = std::cbrt(product);
  return {extent_raw * factor, factor};
}

double jitter_radius(int attempt, const LayoutParams& params) {
  return params.jitter_r0 + attempt * params.jitter_dr;
}

namespace {

// Stream ids for the per-stage generators derived from the layout seed.
constexpr std::uint64_t kAnchorStream = 1;
constexpr std::uint64_t kAccessoryStream = 2;
constexpr std::uint64_t kJitterStream = 3;

std::mt19937_64 stage_rng(std::int64_t seed, std::uint64_t stream) {
  return std::mt19937_64(mix_seed(static_cast<std::uint64_t>(seed), stream));
}

[[noreturn]] void exhausted(const std::string& name, const std::string& why) {
  throw Error(ErrorCode::PlacementExhausted, "object '" + name + "': " + why);
}

const Vec3& extent_of(const ExtentMap& extents, const AssetEntry& e) {
  const auto it = extents.find(e.name);
  if (it == extents.end()) return e.nominal_extent;
  return it->second;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Half-range over which a child's center may move while its footprint stays on
// the parent's top face (zero when the child is wider than the parent).
Vec3 slack_on(const PlacedObject& parent, const Vec3& child_extent) {
  Vec3 s = 0.5 * (parent.extent - child_extent);
  s = s.cwiseMax(0.0);
  s.z() = 0.0;
  return s;
}

void clamp_to_parent(PlacedObject& child, const PlacedObject& parent) {
  const Vec3 s = slack_on(parent, child.extent);
  for (int a = 0; a < 2; ++a) {
    const double c = parent.pose.translation[a];
    child.pose.translation[a] = std::clamp(child.pose.translation[a], c - s[a], c + s[a]);
  }
}

std::vector<std::size_t> children_of(const SceneLayout& layout, std::size_t idx) {
  std::vector<std::size_t> out;
  const std::string& name = layout.objects[idx].name;
  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    if (layout.objects[i].support && *layout.objects[i].support == name) out.push_back(i);
  }
  return out;
}

// Shifts an object and everything resting on it, transitively.
void shift_subtree(SceneLayout& layout, std::size_t idx, const Vec3& delta, int depth = 0) {
  if (depth > static_cast<int>(layout.objects.size())) {
    throw Error(ErrorCode::CyclicSupport, "object '" + layout.objects[idx].name + "'");
  }
  layout.objects[idx].pose.translation += delta;
  for (std::size_t c : children_of(layout, idx)) shift_subtree(layout, c, delta, depth + 1);
}

std::size_t index_of(const SceneLayout& layout, const std::string& name) {
  for (std::size_t i = 0; i < layout.objects.size(); ++i) {
    if (layout.objects[i].name == name) return i;
  }
  return layout.objects.size();
}

bool directly_supports(const PlacedObject& a, const PlacedObject& b) {
  return (b.support && *b.support == a.name) || (a.support && *a.support == b.name);
}

}  // namespace

std::vector<std::size_t> support_order(const SceneLayout& layout) {
  const std::size_t n = layout.objects.size();
  std::vector<int> state(n, 0);  // 0 new, 1 visiting, 2 done
  std::vector<std::size_t> order;
  order.reserve(n);
  auto visit = [&](auto&& self, std::size_t i) -> void {
    if (state[i] == 2) return;
    if (state[i] == 1) {
      throw Error(ErrorCode::CyclicSupport, "object '" + layout.objects[i].name + "' supports itself");
    }
    state[i] = 1;
    if (const auto& s = layout.objects[i].support) {
      const std::size_t p = index_of(layout, *s);
      if (p == n) {
        throw Error(ErrorCode::SemanticError,
                    "object '" + layout.objects[i].name + "' rests on missing '" + *s + "'");
      }
      self(self, p);
    }
    state[i] = 2;
    order.push_back(i);
  };
  for (std::size_t i = 0; i < n; ++i) visit(visit, i);
  return order;
}

SceneLayout place_anchors(const AssetManifest& manifest, const ExtentMap& extents,
                          const Aabb& workspace, std::int64_t seed, const LayoutParams& params) {
  SceneLayout layout;
  layout.workspace = workspace;
  layout.seed = seed;
  auto rng = stage_rng(seed, kAnchorStream);
  const Vec3 ws = workspace.extent();

  for (const auto& entry : manifest.entries) {
    if (entry.category != Category::Anchor) continue;
    const Vec3& ext = extent_of(extents, entry);
    if (ext.x() > ws.x() || ext.y() > ws.y()) exhausted(entry.name, "footprint exceeds workspace");

    PlacedObject obj;
    obj.name = entry.name;
    obj.extent = ext;
    obj.category = Category::Anchor;
    obj.pose.translation.z() = layout.ground_z + 0.5 * ext.z();

    bool placed = false;
    for (int attempt = 0; attempt < params.max_attempts && !placed; ++attempt) {
      obj.pose.translation.x() =
          uniform(rng, workspace.min.x() + 0.5 * ext.x(), workspace.max.x() - 0.5 * ext.x());
      obj.pose.translation.y() =
          uniform(rng, workspace.min.y() + 0.5 * ext.y(), workspace.max.y() - 0.5 * ext.y());
      const Aabb box = obj.aabb();
      placed = std::none_of(layout.objects.begin(), layout.objects.end(), [&](const auto& other) {
        return aabb_intersect(box, other.aabb(), params.overlap_tolerance);
      });
    }
    if (!placed) {
      exhausted(entry.name, "no free ground position after " + std::to_string(params.max_attempts) +
                                " attempts");
    }
    layout.objects.push_back(std::move(obj));
  }
  return layout;
}

SceneLayout place_accessories(const SceneLayout& partial, const AssetManifest& manifest,
                              const ExtentMap& extents, std::int64_t seed,
                              const LayoutParams& params) {
  SceneLayout layout = partial;
  auto rng = stage_rng(seed, kAccessoryStream);

  // Depth-first over parent links so supports are placed first.
  std::map<std::string, int> state;
  auto place = [&](auto&& self, const AssetEntry& entry) -> void {
    if (layout.find(entry.name)) return;
    int& st = state[entry.name];
    if (st == 1) {
      throw Error(ErrorCode::CyclicSupport, "object '" + entry.name + "' is part of a support cycle");
    }
    st = 1;
    const AssetEntry* parent_entry = entry.parent ? manifest.find(*entry.parent) : nullptr;
    if (!parent_entry) {
      throw Error(ErrorCode::SemanticError, "object '" + entry.name + "' has no placed support");
    }
    if (parent_entry->category == Category::Accessory) self(self, *parent_entry);
    const PlacedObject* parent = layout.find(parent_entry->name);
    if (!parent) {
      throw Error(ErrorCode::SemanticError,
                  "object '" + entry.name + "': support '" + parent_entry->name + "' not placed");
    }

    PlacedObject obj;
    obj.name = entry.name;
    obj.extent = extent_of(extents, entry);
    obj.category = Category::Accessory;
    obj.support = parent->name;
    const Vec3 s = slack_on(*parent, obj.extent);
    const Vec3& pc = parent->pose.translation;
    obj.pose.translation = Vec3(uniform(rng, pc.x() - s.x(), pc.x() + s.x()),
                                uniform(rng, pc.y() - s.y(), pc.y() + s.y()),
                                parent->top_z() + params.delta + 0.5 * obj.extent.z());
    layout.objects.push_back(std::move(obj));
    st = 2;
  };
  for (const auto& entry : manifest.entries) {
    if (entry.category == Category::Accessory) place(place, entry);
  }
  return resolve_collisions(layout, seed, params);
}

SceneLayout resolve_collisions(const SceneLayout& input, std::int64_t seed,
                               const LayoutParams& params) {
  SceneLayout layout = input;
  auto rng = stage_rng(seed, kJitterStream);
  std::vector<int> attempts(layout.objects.size(), 0);
  const std::size_t n = layout.objects.size();

  auto first_overlap = [&]() -> std::optional<std::pair<std::size_t, std::size_t>> {
    for (std::size_t i = 0; i < n; ++i) {
      const Aabb bi = layout.objects[i].aabb();
      for (std::size_t j = i + 1; j < n; ++j) {
        if (aabb_intersect(bi, layout.objects[j].aabb(), params.overlap_tolerance)) {
          return std::pair{i, j};
        }
      }
    }
    return std::nullopt;
  };

  while (const auto pair = first_overlap()) {
    const auto [i, j] = *pair;
    std::size_t mover = j;
    if (layout.objects[j].category != Category::Accessory) mover = i;
    PlacedObject& obj = layout.objects[mover];
    if (obj.category != Category::Accessory) {
      exhausted(obj.name, "overlaps anchor '" + layout.objects[j].name + "' and anchors never move");
    }
    if (attempts[mover] >= params.max_attempts) {
      exhausted(obj.name, "still overlaps '" + layout.objects[mover == j ? i : j].name + "' after " +
                              std::to_string(params.max_attempts) + " jitter attempts");
    }
    const double radius = jitter_radius(attempts[mover]++, params);
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double r = radius * std::sqrt(uniform(rng, 0.0, 1.0));

    PlacedObject moved = obj;
    moved.pose.translation.x() += r * std::cos(angle);
    moved.pose.translation.y() += r * std::sin(angle);
    if (obj.support) {
      const PlacedObject* parent = layout.find(*obj.support);
      if (parent) clamp_to_parent(moved, *parent);
    }
    const Vec3 delta = moved.pose.translation - obj.pose.translation;
    shift_subtree(layout, mover, delta);
  }
  return layout;
}

SceneLayout settle(const SceneLayout& input, const LayoutParams& params) {
  SceneLayout layout = input;
  const std::size_t n = layout.objects.size();
  const std::vector<std::size_t> order = support_order(layout);
  std::vector<double> penetration(n, 0.0), correction(n, 0.0);

  auto check_correction = [&](std::size_t i, double amount) {
    if (amount > params.settle_max_correction) {
      throw Error(ErrorCode::SettleFailed, "object '" + layout.objects[i].name +
                                               "' needs a correction of " + std::to_string(amount) +
                                               " m");
    }
  };

  // Drop every object onto its support (anchors onto the ground).
  for (std::size_t i : order) {
    PlacedObject& obj = layout.objects[i];
    const double support_top =
        obj.support ? layout.find(*obj.support)->top_z() : layout.ground_z;
    const double target_z = support_top + 0.5 * obj.extent.z();
    const double dz = std::abs(target_z - obj.pose.translation.z());
    check_correction(i, dz);
    correction[i] += dz;
    obj.pose.translation.z() = target_z;
  }

  // Separate residual penetrations along the axis of least overlap.
  constexpr double kContact = 1e-9;
  constexpr int kMaxPasses = 16;
  bool clean = false;
  for (int pass = 0; pass < kMaxPasses && !clean; ++pass) {
    clean = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        PlacedObject& a = layout.objects[i];
        PlacedObject& b = layout.objects[j];
        if (directly_supports(a, b)) continue;
        if (a.category == Category::Anchor && b.category == Category::Anchor) continue;
        const Vec3 overlap = aabb_overlap(a.aabb(), b.aabb());
        if (!(overlap.array() > kContact).all()) continue;
        clean = false;
        const int axis = overlap.x() <= overlap.y() ? 0 : 1;
        const double pen = overlap[axis];
        penetration[i] = std::max(penetration[i], pen);
        penetration[j] = std::max(penetration[j], pen);
        const double dir = b.pose.translation[axis] >= a.pose.translation[axis] ? 1.0 : -1.0;
        Vec3 step = Vec3::Zero();
        if (a.category == Category::Accessory && b.category == Category::Accessory) {
          step[axis] = 0.5 * pen * dir;
          check_correction(i, correction[i] + 0.5 * pen);
          check_correction(j, correction[j] + 0.5 * pen);
          correction[i] += 0.5 * pen;
          correction[j] += 0.5 * pen;
          shift_subtree(layout, i, -step);
          shift_subtree(layout, j, step);
        } else {
          const std::size_t mover = a.category == Category::Accessory ? i : j;
          const double sign = mover == j ? dir : -dir;
          step[axis] = pen * sign;
          check_correction(mover, correction[mover] + pen);
          correction[mover] += pen;
          shift_subtree(layout, mover, step);
        }
      }
    }
  }
  if (!clean) throw Error(ErrorCode::SettleFailed, "penetrations remain after settling passes");

  layout.settle_report.clear();
  for (std::size_t i = 0; i < n; ++i) {
    PlacedObject& obj = layout.objects[i];
    obj.settled = true;
    const double support_top =
        obj.support ? layout.find(*obj.support)->top_z() : layout.ground_z;
    layout.settle_report.push_back(
        {obj.name, penetration[i], obj.bottom_z() - support_top, correction[i]});
  }
  return layout;
}

SceneLayout solve_layout(const AssetManifest& manifest, const ExtentMap& extents,
                         const Aabb& workspace, std::int64_t seed, const LayoutParams& params) {
  SceneLayout layout = place_anchors(manifest, extents, workspace, seed, params);
  layout = place_accessories(layout, manifest, extents, seed, params);
  return settle(layout, params);
}

// --- scene file -----------------------------------------------------------

std::string write_scene(const SceneLayout& layout) {
  ordered_json doc;
  doc["seed"] = layout.seed;
  doc["ground_z"] = layout.ground_z;
  doc["workspace"] = {{"min", vec3_to_json(layout.workspace.min)},
                      {"max", vec3_to_json(layout.workspace.max)}};
  doc["objects"] = ordered_json::array();
  for (const auto& o : layout.objects) {
    ordered_json j;
    j["name"] = o.name;
    j["category"] = std::string(to_string(o.category));
    j["support"] = o.support ? ordered_json(*o.support) : ordered_json(nullptr);
    j["extent_m"] = vec3_to_json(o.extent);
    j["position_m"] = vec3_to_json(o.pose.translation);
    const auto& q = o.pose.rotation;
    j["quaternion_wxyz"] = ordered_json::array({q.w(), q.x(), q.y(), q.z()});
    j["settled"] = o.settled;
    doc["objects"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

SceneLayout parse_scene(const std::string& text) {
  const json doc = parse_json(text, ErrorCode::SyntaxError, "scene");
  SceneLayout layout;
  try {
    layout.seed = doc.at("seed").get<std::int64_t>();
    layout.ground_z = doc.at("ground_z").get<double>();
    layout.workspace.min = vec3_from_json(doc.at("workspace").at("min"), ErrorCode::SchemaError,
                                          "workspace.min");
    layout.workspace.max = vec3_from_json(doc.at("workspace").at("max"), ErrorCode::SchemaError,
                                          "workspace.max");
    for (const auto& j : doc.at("objects")) {
      PlacedObject o;
      o.name = j.at("name").get<std::string>();
      const std::string cat = j.at("category").get<std::string>();
      if (cat != "anchor" && cat != "accessory") {
        throw Error(ErrorCode::SchemaError, "object '" + o.name + "': bad category");
      }
      o.category = cat == "anchor" ? Category::Anchor : Category::Accessory;
      if (j.at("support").is_string()) o.support = j["support"].get<std::string>();
      o.extent = vec3_from_json(j.at("extent_m"), ErrorCode::SchemaError, o.name + ".extent_m");
      o.pose = pose_from_json(j, ErrorCode::SchemaError, o.name);
      o.settled = j.at("settled").get<bool>();
      layout.objects.push_back(std::move(o));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("scene: ") + e.what());
  }
  return layout;
}

SceneLayout load_scene(const std::string& path) { return parse_scene(read_text_file(path)); }

}  // namespace groundtrace
