#include "groundtrace/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "groundtrace/errors.hpp"
#include "groundtrace/hash.hpp"
#include "groundtrace/json_io.hpp"

namespace groundtrace {

std::string_view to_string(Category c) {
  return c == Category::Anchor ? "anchor" : "accessory";
}

bool operator==(const AssetEntry& a, const AssetEntry& b) {
  return a.name == b.name && a.category == b.category && a.description == b.description &&
         a.style_tags == b.style_tags && a.nominal_extent == b.nominal_extent &&
         a.parent == b.parent && a.forbidden_materials == b.forbidden_materials;
}

bool operator==(const AssetManifest& a, const AssetManifest& b) {
  return a.prompt == b.prompt && a.entries == b.entries && a.target == b.target &&
         a.receptacle == b.receptacle && a.seed == b.seed;
}

const AssetEntry* AssetManifest::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& msg) {
  throw Error(ErrorCode::SchemaError, where + ": " + msg);
}

[[noreturn]] void semantic_error(const std::string& where, const std::string& msg) {
  throw Error(ErrorCode::SemanticError, where + ": " + msg);
}

void check_keys(const json& obj, const std::set<std::string>& required,
                const std::set<std::string>& optional, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!required.contains(key) && !optional.contains(key)) {
      schema_error(where, "unknown field '" + key + "'");
    }
  }
  for (const auto& key : required) {
    if (!obj.contains(key)) schema_error(where, "missing field '" + key + "'");
  }
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_string()) schema_error(where, "field '" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::string> get_string_list(const json& obj, const std::string& key,
                                         const std::string& where) {
  const json& v = obj.at(key);
  if (!v.is_array()) schema_error(where, "field '" + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) schema_error(where, "field '" + key + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

AssetEntry parse_entry(const json& j, std::size_t index) {
  std::string where = "entries[" + std::to_string(index) + "]";
  if (!j.is_object()) schema_error(where, "entry must be an object");
  if (j.contains("name") && j["name"].is_string()) {
    where = "entry '" + j["name"].get<std::string>() + "'";
  }
  check_keys(j,
             {"name", "category", "description", "style_tags", "nominal_extent_m", "parent"},
             {"forbidden_materials"}, where);

  AssetEntry e;
  e.name = get_string(j, "name", where);
  const std::string cat = get_string(j, "category", where);
  if (cat == "anchor") {
    e.category = Category::Anchor;
  } else if (cat == "accessory") {
    e.category = Category::Accessory;
  } else {
    schema_error(where, "field 'category' must be \"anchor\" or \"accessory\"");
  }
  e.description = get_string(j, "description", where);
  e.style_tags = get_string_list(j, "style_tags", where);
  e.nominal_extent = vec3_from_json(j["nominal_extent_m"], ErrorCode::SchemaError,
                                    where + ": field 'nominal_extent_m'");
  const json& parent = j["parent"];
  if (parent.is_string()) {
    e.parent = parent.get<std::string>();
  } else if (!parent.is_null()) {
    schema_error(where, "field 'parent' must be a string or null");
  }
  if (j.contains("forbidden_materials")) {
    e.forbidden_materials = get_string_list(j, "forbidden_materials", where);
  }
  return e;
}

bool valid_identifier(const std::string& s) {
  if (s.empty() || s.size() > 64) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

}  // namespace

void validate_manifest(const AssetManifest& m) {
  std::set<std::string> names;
  bool has_anchor = false;
  for (const auto& e : m.entries) {
    const std::string where = "entry '" + e.name + "'";
    if (!valid_identifier(e.name)) semantic_error(where, "field 'name' is not a short identifier");
    if (!names.insert(e.name).second) semantic_error(where, "field 'name' is duplicated");
    for (int i = 0; i < 3; ++i) {
      const double x = e.nominal_extent[i];
      if (!std::isfinite(x) || x <= kMinExtent || x > kMaxExtent) {
        semantic_error(where, "field 'nominal_extent_m' must lie in (0.001, 10.0] m on every axis");
      }
    }
    if (e.category == Category::Anchor) {
      has_anchor = true;
      if (e.parent) semantic_error(where, "field 'parent' must be null for anchors");
    }
  }
  for (const auto& e : m.entries) {
    if (e.category != Category::Accessory) continue;
    const std::string where = "entry '" + e.name + "'";
    if (!e.parent) semantic_error(where, "field 'parent' is required for accessories");
    // Existence only: support cycles are diagnosed by the layout solver.
    if (!names.contains(*e.parent)) {
      semantic_error(where, "field 'parent' names missing entry '" + *e.parent + "'");
    }
  }
  if (!has_anchor) semantic_error("manifest", "at least one anchor is required");
  const AssetEntry* target = m.find(m.target);
  if (!target) semantic_error("manifest", "field 'target' names missing entry '" + m.target + "'");
  if (target->category != Category::Accessory) {
    semantic_error("manifest", "field 'target' must name an accessory");
  }
  if (!m.find(m.receptacle)) {
    semantic_error("manifest", "field 'receptacle' names missing entry '" + m.receptacle + "'");
  }
  if (m.receptacle == m.target) {
    semantic_error("manifest", "field 'receptacle' must differ from 'target'");
  }
}

AssetManifest parse_manifest(std::string_view document) {
  const json doc = parse_json(std::string(document), ErrorCode::SyntaxError, "manifest");
  if (!doc.is_object()) schema_error("manifest", "top level must be an object");
  check_keys(doc, {"prompt", "seed", "target", "receptacle", "entries"}, {}, "manifest");

  AssetManifest m;
  m.prompt = get_string(doc, "prompt", "manifest");
  if (!doc["seed"].is_number_integer()) schema_error("manifest", "field 'seed' must be an integer");
  m.seed = doc["seed"].get<std::int64_t>();
  m.target = get_string(doc, "target", "manifest");
  m.receptacle = get_string(doc, "receptacle", "manifest");
  if (!doc["entries"].is_array()) schema_error("manifest", "field 'entries' must be an array");
  std::size_t i = 0;
  for (const auto& e : doc["entries"]) m.entries.push_back(parse_entry(e, i++));
  validate_manifest(m);
  return m;
}

AssetManifest load_manifest(const std::string& path) { return parse_manifest(read_text_file(path)); }

std::string write_manifest(const AssetManifest& m) {
  ordered_json doc;
  doc["prompt"] = m.prompt;
  doc["seed"] = m.seed;
  doc["target"] = m.target;
  doc["receptacle"] = m.receptacle;
  doc["entries"] = ordered_json::array();
  for (const auto& e : m.entries) {
    ordered_json j;
    j["name"] = e.name;
    j["category"] = std::string(to_string(e.category));
    j["description"] = e.description;
    j["style_tags"] = e.style_tags;
    j["nominal_extent_m"] = vec3_to_json(e.nominal_extent);
    j["parent"] = e.parent ? ordered_json(*e.parent) : ordered_json(nullptr);
    j["forbidden_materials"] = e.forbidden_materials;
    doc["entries"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

const std::vector<std::string>& default_banned_materials() {
  static const std::vector<std::string> banned{"mirror", "glass", "chrome", "transparent"};
  return banned;
}

AssetEntry apply_negative_constraints(const AssetEntry& entry,
                                      const std::vector<std::string>& banned) {
  AssetEntry out = entry;
  out.style_tags.clear();
  for (const auto& tag : entry.style_tags) {
    if (std::find(banned.begin(), banned.end(), tag) == banned.end()) {
      out.style_tags.push_back(tag);
      continue;
    }
    auto& forbidden = out.forbidden_materials;
    if (std::find(forbidden.begin(), forbidden.end(), tag) == forbidden.end()) {
      forbidden.push_back(tag);
    }
  }
  return out;
}

AssetManifest apply_negative_constraints(const AssetManifest& manifest,
                                         const std::vector<std::string>& banned) {
  AssetManifest out = manifest;
  for (auto& e : out.entries) e = apply_negative_constraints(e, banned);
  return out;
}

std::string manifest_hash(const AssetManifest& manifest) {
  return hex64(fnv1a64(write_manifest(manifest)));
}

}  // namespace groundtrace
