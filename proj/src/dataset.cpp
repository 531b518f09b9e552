#include "groundtrace/dataset.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <sstream>

#include "groundtrace/errors.hpp"
#include "groundtrace/hash.hpp"
#include "groundtrace/json_io.hpp"

namespace groundtrace {

namespace fs = std::filesystem;

namespace {

// Rounds to 9 significant digits; the JSON writer then prints the shortest
// decimal that reads back as the same double, so re-emission is byte-stable.
double round9(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

template <std::size_t N>
ordered_json rounded(const std::array<double, N>& a) {
  ordered_json j = ordered_json::array();
  for (double v : a) j.push_back(round9(v));
  return j;
}

ordered_json rounded(const std::vector<double>& a) {
  ordered_json j = ordered_json::array();
  for (double v : a) j.push_back(round9(v));
  return j;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::SchemaError, where + ": missing '" + key + "'");
  }
  return obj[key];
}

double number(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number()) throw Error(ErrorCode::SchemaError, where + ": '" + key + "' must be a number");
  return v.get<double>();
}

std::int64_t integer(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_number_integer()) throw Error(ErrorCode::SchemaError, where + ": '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string text(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) throw Error(ErrorCode::SchemaError, where + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<double> numbers(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_array()) throw Error(ErrorCode::SchemaError, where + ": '" + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& x : v) {
    if (!x.is_number()) throw Error(ErrorCode::SchemaError, where + ": '" + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

void expect_keys(const json& obj, std::size_t n, const std::string& where) {
  if (obj.size() != n) throw Error(ErrorCode::SchemaError, where + ": unexpected keys");
}

bool finite(const EpisodeStep& s) {
  auto ok = [](double v) { return std::isfinite(v); };
  return ok(s.timestamp_s) && std::all_of(s.position_m.begin(), s.position_m.end(), ok) &&
         std::all_of(s.quaternion_wxyz.begin(), s.quaternion_wxyz.end(), ok) &&
         std::all_of(s.joints.begin(), s.joints.end(), ok);
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path episodes_dir(const std::string& root) { return fs::path(root) / "episodes"; }

std::vector<std::int64_t> episode_ids_on_disk(const std::string& root) {
  std::vector<std::int64_t> ids;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(episodes_dir(root), ec)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < 10 || name.rfind("ep_", 0) != 0 || entry.path().extension() != ".jsonl") continue;
    const std::string digits = name.substr(3, name.size() - 3 - 6);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
    ids.push_back(std::stoll(digits));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string chain_hash_of(const std::string& chain_text) { return hex64(fnv1a64(chain_text)); }

}  // namespace

Pose EpisodeStep::pose() const {
  return {Vec3(position_m[0], position_m[1], position_m[2]),
          UnitQuat(quaternion_wxyz[0], quaternion_wxyz[1], quaternion_wxyz[2], quaternion_wxyz[3])};
}

Episode make_episode(std::int64_t id, const EpisodeContext& context, const EeTrajectory& ee,
                     const JointTrajectory& joints, const EpisodeQuality& quality,
                     const Pose& robot_base) {
  if (ee.steps.size() != joints.steps.size() || ee.timestamps.size() != ee.steps.size()) {
    throw Error(ErrorCode::SchemaError, "trajectory lengths disagree");
  }
  Episode ep;
  ep.episode_id = id;
  ep.context = context;
  ep.quality = quality;
  ep.phases = {{ee.approach_steps, ee.manipulate_steps, ee.release_steps}};
  ep.base_position_m = {robot_base.translation.x(), robot_base.translation.y(), robot_base.translation.z()};
  ep.base_quaternion_wxyz = {robot_base.rotation.w(), robot_base.rotation.x(), robot_base.rotation.y(),
                             robot_base.rotation.z()};
  ep.steps.reserve(ee.steps.size());
  for (std::size_t k = 0; k < ee.steps.size(); ++k) {
    EpisodeStep s;
    s.timestamp_s = ee.timestamps[k];
    const Pose& p = ee.steps[k].pose;
    s.position_m = {p.translation.x(), p.translation.y(), p.translation.z()};
    s.quaternion_wxyz = {p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z()};
    s.gripper = static_cast<int>(ee.steps[k].gripper);
    s.joints.assign(joints.steps[k].data(), joints.steps[k].data() + joints.steps[k].size());
    ep.steps.push_back(std::move(s));
  }
  validate_episode(ep);
  return ep;
}

void validate_episode(const Episode& episode) {
  const std::string where = "episode " + std::to_string(episode.episode_id);
  if (episode.episode_id < 0) throw Error(ErrorCode::SchemaError, where + ": negative id");
  for (std::size_t k = 0; k < episode.steps.size(); ++k) {
    const EpisodeStep& s = episode.steps[k];
    if (!finite(s)) throw Error(ErrorCode::SchemaError, where + ": non-finite value", static_cast<std::int64_t>(k));
    if (s.gripper != 0 && s.gripper != 1) {
      throw Error(ErrorCode::SchemaError, where + ": gripper must be 0 or 1", static_cast<std::int64_t>(k));
    }
    if (s.joints.size() != episode.steps.front().joints.size()) {
      throw Error(ErrorCode::SchemaError, where + ": joint count changes", static_cast<std::int64_t>(k));
    }
  }
  auto ok = [](double v) { return std::isfinite(v); };
  if (!std::all_of(episode.quality.per_frame_rms.begin(), episode.quality.per_frame_rms.end(), ok) ||
      !ok(episode.quality.ik_max_position_error) || !ok(episode.quality.ik_max_angle_error)) {
    throw Error(ErrorCode::SchemaError, where + ": non-finite quality metric");
  }
  if (!episode.phases.empty()) {
    int total = 0;
    for (const PhaseCounts& p : episode.phases) total += p.total();
    if (total != static_cast<int>(episode.steps.size())) {
      throw Error(ErrorCode::SchemaError, where + ": phase counts do not sum to the step count");
    }
  }
  if (episode.sub_task_starts.empty() || episode.sub_task_starts.front() != 0 ||
      !std::is_sorted(episode.sub_task_starts.begin(), episode.sub_task_starts.end())) {
    throw Error(ErrorCode::SchemaError, where + ": sub_task_starts must begin at 0 and increase");
  }
}

std::string encode_episode_records(const Episode& episode) {
  std::string out;
  for (const EpisodeStep& s : episode.steps) {
    ordered_json j;
    j["timestamp_s"] = round9(s.timestamp_s);
    j["position_m"] = rounded(s.position_m);
    j["quaternion_wxyz"] = rounded(s.quaternion_wxyz);
    j["gripper"] = s.gripper;
    j["joints"] = rounded(s.joints);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string encode_episode_meta(const Episode& episode) {
  ordered_json j;
  j["episode_id"] = episode.episode_id;
  j["sub_task_index"] = episode.sub_task_index;
  j["num_steps"] = episode.steps.size();
  j["context"] = {{"prompt", episode.context.prompt},
                  {"manifest_hash", episode.context.manifest_hash},
                  {"scene_file", episode.context.scene_file},
                  {"seed", episode.context.seed}};
  j["robot_base"] = {{"position_m", rounded(episode.base_position_m)},
                     {"quaternion_wxyz", rounded(episode.base_quaternion_wxyz)}};
  j["sub_task_starts"] = episode.sub_task_starts;
  ordered_json phases = ordered_json::array();
  for (const PhaseCounts& p : episode.phases) {
    phases.push_back({{"approach", p.approach}, {"manipulate", p.manipulate}, {"release", p.release}});
  }
  j["phases"] = phases;
  j["quality"] = {{"per_frame_rms_m", rounded(episode.quality.per_frame_rms)},
                  {"dropped_tracks", episode.quality.dropped_tracks},
                  {"ik_max_position_error_m", round9(episode.quality.ik_max_position_error)},
                  {"ik_max_angle_error_rad", round9(episode.quality.ik_max_angle_error)}};
  return j.dump(2) + "\n";
}

Episode parse_episode(const std::string& records, const std::string& meta) {
  Episode ep;
  const json m = parse_json(meta, ErrorCode::SyntaxError, "episode meta");
  const std::string where = "episode meta";
  if (!m.is_object()) throw Error(ErrorCode::SchemaError, where + ": expected an object");
  expect_keys(m, 8, where);
  ep.episode_id = integer(m, "episode_id", where);
  ep.sub_task_index = static_cast<int>(integer(m, "sub_task_index", where));
  const std::int64_t num_steps = integer(m, "num_steps", where);
  const json& c = field(m, "context", where);
  expect_keys(c, 4, "context");
  ep.context.prompt = text(c, "prompt", "context");
  ep.context.manifest_hash = text(c, "manifest_hash", "context");
  ep.context.scene_file = text(c, "scene_file", "context");
  const json& seed = field(c, "seed", "context");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    throw Error(ErrorCode::SchemaError, "context: 'seed' must be a non-negative integer");
  }
  ep.context.seed = seed.get<std::uint64_t>();
  const json& base = field(m, "robot_base", where);
  expect_keys(base, 2, "robot_base");
  const auto bp = numbers(base, "position_m", "robot_base");
  const auto bq = numbers(base, "quaternion_wxyz", "robot_base");
  if (bp.size() != 3 || bq.size() != 4) throw Error(ErrorCode::SchemaError, "robot_base: bad pose arity");
  std::copy(bp.begin(), bp.end(), ep.base_position_m.begin());
  std::copy(bq.begin(), bq.end(), ep.base_quaternion_wxyz.begin());
  ep.sub_task_starts.clear();
  for (double v : numbers(m, "sub_task_starts", where)) ep.sub_task_starts.push_back(static_cast<int>(v));
  const json& phases = field(m, "phases", where);
  if (!phases.is_array()) throw Error(ErrorCode::SchemaError, where + ": 'phases' must be an array");
  for (const json& p : phases) {
    expect_keys(p, 3, "phases");
    ep.phases.push_back({static_cast<int>(integer(p, "approach", "phases")),
                         static_cast<int>(integer(p, "manipulate", "phases")),
                         static_cast<int>(integer(p, "release", "phases"))});
  }
  const json& q = field(m, "quality", where);
  expect_keys(q, 4, "quality");
  ep.quality.per_frame_rms = numbers(q, "per_frame_rms_m", "quality");
  for (double v : numbers(q, "dropped_tracks", "quality")) ep.quality.dropped_tracks.push_back(static_cast<int>(v));
  ep.quality.ik_max_position_error = number(q, "ik_max_position_error_m", "quality");
  ep.quality.ik_max_angle_error = number(q, "ik_max_angle_error_rad", "quality");

  std::istringstream in(records);
  std::string line;
  std::int64_t k = 0;
  while (std::getline(in, line)) {
    const std::string at = "record " + std::to_string(k);
    const json r = parse_json(line, ErrorCode::SyntaxError, at);
    if (!r.is_object()) throw Error(ErrorCode::SchemaError, at + ": expected an object", k);
    expect_keys(r, 5, at);
    EpisodeStep s;
    s.timestamp_s = number(r, "timestamp_s", at);
    const auto p = numbers(r, "position_m", at);
    const auto qv = numbers(r, "quaternion_wxyz", at);
    if (p.size() != 3 || qv.size() != 4) throw Error(ErrorCode::SchemaError, at + ": bad pose arity", k);
    std::copy(p.begin(), p.end(), s.position_m.begin());
    std::copy(qv.begin(), qv.end(), s.quaternion_wxyz.begin());
    s.gripper = static_cast<int>(integer(r, "gripper", at));
    s.joints = numbers(r, "joints", at);
    ep.steps.push_back(std::move(s));
    ++k;
  }
  if (k != num_steps) {
    throw Error(ErrorCode::SchemaError, "episode has " + std::to_string(k) + " records, meta says " +
                                            std::to_string(num_steps));
  }
  return ep;
}

std::string episode_file_stem(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ep_%06lld", static_cast<long long>(id));
  return buf;
}

void init_dataset(const std::string& root, const KinematicChain& chain) {
  std::error_code ec;
  fs::create_directories(fs::path(root) / "episodes", ec);
  fs::create_directories(fs::path(root) / "scenes", ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create dataset root " + root + ": " + ec.message());
  write_file_atomic((fs::path(root) / "chain.json").string(), write_chain(chain));
}

std::string store_scene(const std::string& root, const SceneLayout& scene) {
  const std::string doc = write_scene(scene);
  const std::string rel = "scenes/" + hex64(fnv1a64(doc)) + ".json";
  const fs::path path = fs::path(root) / rel;
  if (!fs::exists(path)) write_file_atomic(path.string(), doc);
  return rel;
}

std::vector<std::string> emit_episode(const Episode& episode, const std::string& root) {
  validate_episode(episode);
  const fs::path dir = episodes_dir(root);
  const std::string stem = episode_file_stem(episode.episode_id);
  const fs::path records = dir / (stem + ".jsonl");
  const fs::path meta = dir / (stem + ".meta.json");
  if (fs::exists(records) || fs::exists(meta)) {
    throw Error(ErrorCode::DuplicateEpisode, "episode " + std::to_string(episode.episode_id) + " already exists",
                episode.episode_id);
  }
  // Meta first: a records file only ever appears next to its meta.
  write_file_atomic(meta.string(), encode_episode_meta(episode));
  write_file_atomic(records.string(), encode_episode_records(episode));
  return {records.string(), meta.string()};
}

Episode load_episode(const std::string& root, std::int64_t id) {
  const fs::path dir = episodes_dir(root);
  const std::string stem = episode_file_stem(id);
  return parse_episode(read_text_file((dir / (stem + ".jsonl")).string()),
                       read_text_file((dir / (stem + ".meta.json")).string()));
}

DatasetInfo finalize_dataset(const std::string& root, std::uint64_t seed, double elapsed_s) {
  DatasetInfo info;
  info.episode_ids = episode_ids_on_disk(root);
  info.num_episodes = static_cast<std::int64_t>(info.episode_ids.size());
  info.chain_config_hash = chain_hash_of(read_text_file((fs::path(root) / "chain.json").string()));
  info.seed = seed;
  info.created_wall_clock = utc_now();
  info.elapsed_s = elapsed_s;
  info.generation_rate = elapsed_s > 0.0 ? info.num_episodes * 3600.0 / elapsed_s : 0.0;

  ordered_json j;
  j["version"] = info.version;
  j["format_version"] = info.format_version;
  j["num_episodes"] = info.num_episodes;
  j["episode_ids"] = info.episode_ids;
  j["chain_config_hash"] = info.chain_config_hash;
  j["seed"] = info.seed;
  j["created_wall_clock"] = info.created_wall_clock;
  j["elapsed_s"] = round9(info.elapsed_s);
  j["generation_rate"] = round9(info.generation_rate);
  write_file_atomic((fs::path(root) / "manifest.json").string(), j.dump(2) + "\n");
  return info;
}

DatasetInfo read_dataset_info(const std::string& root) {
  const std::string path = (fs::path(root) / "manifest.json").string();
  const json j = parse_json(read_text_file(path), ErrorCode::SyntaxError, path);
  DatasetInfo info;
  info.version = text(j, "version", path);
  info.format_version = static_cast<int>(integer(j, "format_version", path));
  info.num_episodes = integer(j, "num_episodes", path);
  for (double v : numbers(j, "episode_ids", path)) info.episode_ids.push_back(static_cast<std::int64_t>(v));
  info.chain_config_hash = text(j, "chain_config_hash", path);
  info.seed = field(j, "seed", path).get<std::uint64_t>();
  info.created_wall_clock = text(j, "created_wall_clock", path);
  info.elapsed_s = number(j, "elapsed_s", path);
  info.generation_rate = number(j, "generation_rate", path);
  return info;
}

Episode chain_subtasks(const std::vector<Episode>& episodes, double max_gap_m) {
  if (episodes.empty()) throw Error(ErrorCode::SemanticError, "nothing to chain");
  Episode out = episodes.front();
  for (std::size_t i = 1; i < episodes.size(); ++i) {
    const Episode& next = episodes[i];
    const auto idx = static_cast<std::int64_t>(i);
    if (!(next.context == out.context)) {
      throw Error(ErrorCode::SemanticError, "sub-task " + std::to_string(i) + " has a different context", idx);
    }
    if (next.steps.empty()) continue;
    if (out.steps.empty()) {
      throw Error(ErrorCode::SemanticError, "cannot chain after an empty sub-task", idx);
    }
    if (next.steps.front().joints.size() != out.steps.front().joints.size()) {
      throw Error(ErrorCode::SemanticError, "sub-task " + std::to_string(i) + " has a different joint count", idx);
    }
    const EpisodeStep& last = out.steps.back();
    const EpisodeStep& first = next.steps.front();
    const double gap = (last.pose().translation - first.pose().translation).norm();
    if (gap > max_gap_m) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "sub-task %zu starts %.4f m from the previous end", i, gap);
      throw Error(ErrorCode::DiscontinuousChain, buf, idx);
    }
    double dt = 0.0;
    if (next.steps.size() >= 2) dt = next.steps[1].timestamp_s - next.steps[0].timestamp_s;
    if (!(dt > 0.0) && out.steps.size() >= 2) dt = last.timestamp_s - out.steps[out.steps.size() - 2].timestamp_s;
    if (!(dt > 0.0)) dt = 1.0;
    const double shift = last.timestamp_s + dt - first.timestamp_s;
    const int base = static_cast<int>(out.steps.size());
    for (int s : next.sub_task_starts) out.sub_task_starts.push_back(base + s);
    for (EpisodeStep s : next.steps) {
      s.timestamp_s += shift;
      out.steps.push_back(std::move(s));
    }
    out.phases.insert(out.phases.end(), next.phases.begin(), next.phases.end());
    out.quality.per_frame_rms.insert(out.quality.per_frame_rms.end(), next.quality.per_frame_rms.begin(),
                                     next.quality.per_frame_rms.end());
    out.quality.dropped_tracks.insert(out.quality.dropped_tracks.end(), next.quality.dropped_tracks.begin(),
                                      next.quality.dropped_tracks.end());
    out.quality.ik_max_position_error = std::max(out.quality.ik_max_position_error, next.quality.ik_max_position_error);
    out.quality.ik_max_angle_error = std::max(out.quality.ik_max_angle_error, next.quality.ik_max_angle_error);
  }
  return out;
}

bool ValidationReport::passed() const {
  return manifest_failures.empty() &&
         std::all_of(episodes.begin(), episodes.end(), [](const EpisodeReport& e) { return e.passed; });
}

std::size_t ValidationReport::passed_count() const {
  return static_cast<std::size_t>(
      std::count_if(episodes.begin(), episodes.end(), [](const EpisodeReport& e) { return e.passed; }));
}

std::string ValidationReport::summary() const {
  std::ostringstream out;
  for (const std::string& f : manifest_failures) out << "manifest: FAIL " << f << "\n";
  for (const EpisodeReport& e : episodes) {
    out << episode_file_stem(e.episode_id) << ": " << (e.passed ? "pass" : "FAIL");
    for (const std::string& r : e.reasons) out << " " << r;
    out << "\n";
  }
  out << passed_count() << "/" << episodes.size() << " episodes pass, manifest "
      << (manifest_failures.empty() ? "ok" : "FAIL") << "\n";
  return out.str();
}

ValidationReport validate_dataset(const std::string& root) {
  ValidationReport report;
  const std::vector<std::int64_t> ids = episode_ids_on_disk(root);

  std::optional<KinematicChain> chain;
  std::string chain_text;
  try {
    chain_text = read_text_file((fs::path(root) / "chain.json").string());
    chain = parse_chain(chain_text);
  } catch (const Error&) {
    report.manifest_failures.push_back("MissingChain");
  }
  try {
    const DatasetInfo info = read_dataset_info(root);
    if (info.num_episodes != static_cast<std::int64_t>(ids.size())) report.manifest_failures.push_back("EpisodeCount");
    if (info.episode_ids != ids) report.manifest_failures.push_back("EpisodeIds");
    if (chain && info.chain_config_hash != chain_hash_of(chain_text)) report.manifest_failures.push_back("ChainHash");
  } catch (const Error& e) {
    report.manifest_failures.push_back(e.code() == ErrorCode::MissingArtifact ? "MissingManifest" : "ManifestSchema");
  } catch (const json::exception&) {
    report.manifest_failures.push_back("ManifestSchema");
  }

  for (std::int64_t id : ids) {
    EpisodeReport r;
    r.episode_id = id;
    auto fail = [&r](const char* reason) {
      r.passed = false;
      if (std::find(r.reasons.begin(), r.reasons.end(), reason) == r.reasons.end()) r.reasons.push_back(reason);
    };
    Episode ep;
    try {
      ep = load_episode(root, id);
    } catch (const Error&) {
      fail("ParseError");
      report.episodes.push_back(r);
      continue;
    } catch (const json::exception&) {
      fail("ParseError");
      report.episodes.push_back(r);
      continue;
    }
    if (ep.episode_id != id) fail("ParseError");
    const std::size_t dof = chain ? static_cast<std::size_t>(chain->dof()) : ep.steps.empty() ? 0 : ep.steps[0].joints.size();
    int transitions = 0;
    for (std::size_t k = 0; k < ep.steps.size(); ++k) {
      const EpisodeStep& s = ep.steps[k];
      if (!finite(s)) fail("NonFinite");
      if (s.joints.size() != dof) fail("LengthMismatch");
      if (k > 0 && !(s.timestamp_s > ep.steps[k - 1].timestamp_s)) fail("MonotoneTimestamps");
      if (s.gripper != 0 && s.gripper != 1) fail("GripperTransitions");
      if (k > 0 && s.gripper != ep.steps[k - 1].gripper) ++transitions;
      if (chain && s.joints.size() == dof) {
        try {
          check_joint_limits(*chain, Eigen::Map<const Eigen::VectorXd>(s.joints.data(), static_cast<Eigen::Index>(dof)));
        } catch (const Error&) {
          fail("JointLimits");
        }
      }
    }
    if (!ep.phases.empty()) {
      int total = 0;
      std::vector<int> starts;
      for (const PhaseCounts& p : ep.phases) {
        starts.push_back(total);
        total += p.total();
      }
      if (total != static_cast<int>(ep.steps.size()) || starts != ep.sub_task_starts) fail("PhaseCounts");
      const bool open_ends = !ep.steps.empty() && ep.steps.front().gripper == 0 && ep.steps.back().gripper == 0;
      if (transitions != 2 * static_cast<int>(ep.phases.size()) || !open_ends) fail("GripperTransitions");
    }
    if (!ep.context.scene_file.empty() && !fs::is_regular_file(fs::path(root) / ep.context.scene_file)) {
      fail("MissingScene");
    }
    report.episodes.push_back(r);
  }
  return report;
}

}  // namespace groundtrace
