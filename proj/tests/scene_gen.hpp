#pragma once

#include <random>
#include <string>

#include "groundtrace/layout.hpp"
#include "groundtrace/manifest.hpp"

namespace testutil {

// Random manifest with 2..12 objects: 1-3 anchors, the rest accessories that
// rest on anchors or (occasionally) on other accessories.
inline groundtrace::AssetManifest random_manifest(std::uint64_t seed) {
  using namespace groundtrace;
  std::mt19937_64 rng(seed * 7919 + 13);
  std::uniform_int_distribution<int> total_d(2, 12);
  const int total = total_d(rng);
  const int anchors = std::min(total - 1, std::uniform_int_distribution<int>(1, 3)(rng));
  std::uniform_real_distribution<double> anchor_xy(0.4, 1.4), anchor_z(0.4, 1.0);
  std::uniform_real_distribution<double> acc_xy(0.03, 0.3), acc_z(0.02, 0.25);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  AssetManifest m;
  m.prompt = "random scene " + std::to_string(seed);
  m.seed = static_cast<std::int64_t>(seed);
  for (int i = 0; i < anchors; ++i) {
    AssetEntry e;
    e.name = "anchor" + std::to_string(i);
    e.category = Category::Anchor;
    e.nominal_extent = Vec3(anchor_xy(rng), anchor_xy(rng), anchor_z(rng));
    m.entries.push_back(e);
  }
  for (int i = anchors; i < total; ++i) {
    AssetEntry e;
    e.name = "item" + std::to_string(i);
    e.category = Category::Accessory;
    e.nominal_extent = Vec3(acc_xy(rng), acc_xy(rng), acc_z(rng));
    const bool stack = i > anchors && unit(rng) < 0.15;
    if (stack) {
      e.parent = "item" + std::to_string(std::uniform_int_distribution<int>(anchors, i - 1)(rng));
    } else {
      e.parent = "anchor" + std::to_string(std::uniform_int_distribution<int>(0, anchors - 1)(rng));
    }
    m.entries.push_back(e);
  }
  m.target = m.entries[anchors].name;
  m.receptacle = m.entries[0].name;
  return m;
}

// Brute-force pairwise overlap count, written independently of the solver.
inline int overlapping_pairs(const groundtrace::SceneLayout& layout, double tol) {
  int count = 0;
  const auto& objs = layout.objects;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    for (std::size_t j = i + 1; j < objs.size(); ++j) {
      bool all = true;
      for (int a = 0; a < 3; ++a) {
        const double lo1 = objs[i].pose.translation[a] - objs[i].extent[a] / 2;
        const double hi1 = objs[i].pose.translation[a] + objs[i].extent[a] / 2;
        const double lo2 = objs[j].pose.translation[a] - objs[j].extent[a] / 2;
        const double hi2 = objs[j].pose.translation[a] + objs[j].extent[a] / 2;
        const double overlap = std::min(hi1, hi2) - std::max(lo1, lo2);
        if (!(overlap > tol + 1e-12)) all = false;
      }
      if (all) ++count;
    }
  }
  return count;
}

}  // namespace testutil
