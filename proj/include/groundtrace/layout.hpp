#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "groundtrace/geometry.hpp"
#include "groundtrace/manifest.hpp"

namespace groundtrace {

struct LayoutParams {
  double delta = 0.002;             // stacking clearance above the support, m
  double overlap_tolerance = 1e-4;  // m
  double jitter_r0 = 0.005;         // m
  double jitter_dr = 0.005;         // m per attempt
  int max_attempts = 100;           // per object
  double settle_max_correction = 0.05;
};

struct PlacedObject {
  std::string name;
  Pose pose;
  Vec3 extent = Vec3::Ones();
  Category category = Category::Anchor;
  std::optional<std::string> support;  // nullopt: the ground plane
  bool settled = false;

  Aabb aabb() const { return Aabb::from_center_extent(pose.translation, extent); }
  double bottom_z() const { return pose.translation.z() - 0.5 * extent.z(); }
  double top_z() const { return pose.translation.z() + 0.5 * extent.z(); }

  friend bool operator==(const PlacedObject& a, const PlacedObject& b);
};

struct SettleRecord {
  std::string name;
  double max_penetration = 0.0;  // largest XY penetration found before correction
  double support_gap = 0.0;      // after settling
  double correction = 0.0;       // total translation applied

  friend bool operator==(const SettleRecord&, const SettleRecord&) = default;
};

struct SceneLayout {
  std::vector<PlacedObject> objects;
  double ground_z = 0.0;
  Aabb workspace;
  std::int64_t seed = 0;
  std::vector<SettleRecord> settle_report;

  const PlacedObject* find(const std::string& name) const;
  PlacedObject* find(const std::string& name);

  friend bool operator==(const SceneLayout& a, const SceneLayout& b);
};

using ExtentMap = std::map<std::string, Vec3>;

/// 3 x 3 x 2 m box, floor at Z = 0, centered on the origin in XY.
Aabb default_workspace();

struct ScaleResult {
  Vec3 extent;
  double factor = 1.0;
};

/// Uniform rescale by the geometric mean of nominal / raw over the three axes.
ScaleResult scale_to_metric(const Vec3& extent_raw, const Vec3& nominal);

/// Jitter radius used on the k-th (0-based) re-sampling attempt of an object.
double jitter_radius(int attempt, const LayoutParams& params);

SceneLayout place_anchors(const AssetManifest& manifest, const ExtentMap& extents,
                          const Aabb& workspace, std::int64_t seed,
                          const LayoutParams& params = {});

SceneLayout place_accessories(const SceneLayout& partial, const AssetManifest& manifest,
                              const ExtentMap& extents, std::int64_t seed,
                              const LayoutParams& params = {});

SceneLayout resolve_collisions(const SceneLayout& layout, std::int64_t seed,
                               const LayoutParams& params = {});

SceneLayout settle(const SceneLayout& layout, const LayoutParams& params = {});

/// place_anchors -> place_accessories (which resolves collisions) -> settle.
SceneLayout solve_layout(const AssetManifest& manifest, const ExtentMap& extents,
                         const Aabb& workspace, std::int64_t seed,
                         const LayoutParams& params = {});

/// Object indices ordered so that every support precedes what it supports.
/// Throws CyclicSupport.
std::vector<std::size_t> support_order(const SceneLayout& layout);

std::string write_scene(const SceneLayout& layout);
SceneLayout parse_scene(const std::string& text);
SceneLayout load_scene(const std::string& path);

}  // namespace groundtrace
