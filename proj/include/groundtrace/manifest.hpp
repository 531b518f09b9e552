#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "groundtrace/geometry.hpp"

namespace groundtrace {

enum class Category { Anchor, Accessory };

std::string_view to_string(Category c);

struct AssetEntry {
  std::string name;
  Category category = Category::Anchor;
  std::string description;
  std::vector<std::string> style_tags;
  Vec3 nominal_extent = Vec3::Ones();  // full box dimensions, meters
  std::optional<std::string> parent;
  std::vector<std::string> forbidden_materials;

  friend bool operator==(const AssetEntry& a, const AssetEntry& b);
};

struct AssetManifest {
  std::string prompt;
  std::vector<AssetEntry> entries;
  std::string target;
  std::string receptacle;
  std::int64_t seed = 0;

  const AssetEntry* find(std::string_view name) const;

  friend bool operator==(const AssetManifest& a, const AssetManifest& b);
};

inline constexpr double kMinExtent = 0.001;  // exclusive
inline constexpr double kMaxExtent = 10.0;   // inclusive

/// Parses and validates a manifest document (UTF-8 JSON). Throws Error with
/// SyntaxError, SchemaError or SemanticError; never returns a partial manifest.
AssetManifest parse_manifest(std::string_view document);
AssetManifest load_manifest(const std::string& path);

/// Semantic checks only (names, parents, extents, target/receptacle roles).
void validate_manifest(const AssetManifest& manifest);

/// Canonical JSON form; parse_manifest(write_manifest(m)) == m.
std::string write_manifest(const AssetManifest& manifest);

const std::vector<std::string>& default_banned_materials();

/// Moves banned tags out of style_tags into forbidden_materials. Idempotent.
AssetEntry apply_negative_constraints(const AssetEntry& entry,
                                      const std::vector<std::string>& banned);

AssetManifest apply_negative_constraints(const AssetManifest& manifest,
                                         const std::vector<std::string>& banned);

/// Hex FNV-1a digest of the canonical manifest document.
std::string manifest_hash(const AssetManifest& manifest);

}  // namespace groundtrace
