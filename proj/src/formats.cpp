#include "groundtrace/formats.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "groundtrace/json_io.hpp"

namespace groundtrace {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

// Returns (width, height) after checking magic and payload length.
std::pair<int, int> read_header(std::string_view bytes, std::string_view magic, std::size_t elem,
                                const char* what) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != magic) {
    throw Error(ErrorCode::SchemaError, std::string(what) + ": bad magic or truncated header");
  }
  const std::uint32_t w = get_u32(bytes, 4), h = get_u32(bytes, 8);
  if (w == 0 || h == 0 || w > (1u << 15) || h > (1u << 15)) {
    throw Error(ErrorCode::SchemaError, std::string(what) + ": implausible dimensions");
  }
  const std::size_t expected = 12 + static_cast<std::size_t>(w) * h * elem;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::SchemaError, std::string(what) + ": payload is " +
                                            std::to_string(bytes.size()) + " bytes, expected " +
                                            std::to_string(expected));
  }
  return {static_cast<int>(w), static_cast<int>(h)};
}

}  // namespace

std::string encode_depth(const DepthFrame& frame) {
  std::string out = "DPF1";
  put_u32(out, static_cast<std::uint32_t>(frame.width));
  put_u32(out, static_cast<std::uint32_t>(frame.height));
  out.reserve(out.size() + frame.values.size() * 4);
  for (float f : frame.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

DepthFrame decode_depth(std::string_view bytes) {
  const auto [w, h] = read_header(bytes, "DPF1", 4, "depth frame");
  DepthFrame frame(w, h);
  for (std::size_t i = 0; i < frame.values.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
    if (!std::isfinite(f) || f < 0.0f) {
      throw Error(ErrorCode::SchemaError, "depth frame: negative or non-finite value at pixel " +
                                              std::to_string(i));
    }
    frame.values[i] = f;
  }
  return frame;
}

std::string encode_mask(const MaskImage& mask) {
  std::string out = "MSK1";
  put_u32(out, static_cast<std::uint32_t>(mask.width));
  put_u32(out, static_cast<std::uint32_t>(mask.height));
  for (auto b : mask.bits) out.push_back(b ? 1 : 0);
  return out;
}

MaskImage decode_mask(std::string_view bytes) {
  const auto [w, h] = read_header(bytes, "MSK1", 1, "mask");
  MaskImage mask(w, h);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    const auto b = static_cast<unsigned char>(bytes[12 + i]);
    if (b > 1) throw Error(ErrorCode::SchemaError, "mask: byte values must be 0 or 1");
    mask.bits[i] = b;
  }
  return mask;
}

std::string encode_tracks(const TrackBundle& bundle) {
  std::string out;
  ordered_json header;
  header["num_frames"] = bundle.num_frames;
  header["num_points"] = bundle.num_points;
  header["intrinsics"] = intrinsics_to_json(bundle.intrinsics);
  out += header.dump() + "\n";
  for (int t = 0; t < bundle.num_frames; ++t) {
    for (int i = 0; i < bundle.num_points; ++i) {
      const std::size_t k = bundle.index(t, i);
      ordered_json rec;
      rec["frame"] = t;
      rec["point_id"] = i;
      rec["u"] = bundle.uv[k].u;
      rec["v"] = bundle.uv[k].v;
      rec["visible"] = bundle.visible[k] != 0;
      out += rec.dump() + "\n";
    }
  }
  return out;
}

void decode_tracks(std::string_view text, TrackBundle& bundle) {
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&](std::string_view& line) {
    while (pos < text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) return true;
    }
    return false;
  };
  auto parse_line = [&](std::string_view line) {
    return parse_json(std::string(line), ErrorCode::SyntaxError,
                      "tracks line " + std::to_string(line_no));
  };
  auto int_field = [&](const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer()) {
      throw Error(ErrorCode::SchemaError,
                  "tracks line " + std::to_string(line_no) + ": '" + key + "' must be an integer");
    }
    return j[key].get<std::int64_t>();
  };

  std::string_view line;
  if (!next_line(line)) throw Error(ErrorCode::SchemaError, "tracks file is empty");
  const json header = parse_line(line);
  if (!header.is_object() || !header.contains("intrinsics")) {
    throw Error(ErrorCode::SchemaError, "tracks header must hold num_frames, num_points, intrinsics");
  }
  const auto frames = int_field(header, "num_frames");
  const auto points = int_field(header, "num_points");
  if (frames < 1 || points < 0 || frames * std::max<std::int64_t>(points, 1) > 50'000'000) {
    throw Error(ErrorCode::SchemaError, "tracks header has implausible counts");
  }
  bundle.num_frames = static_cast<int>(frames);
  bundle.num_points = static_cast<int>(points);
  bundle.intrinsics = intrinsics_from_json(header["intrinsics"], ErrorCode::SchemaError);
  const std::size_t n = static_cast<std::size_t>(frames * points);
  bundle.uv.assign(n, Pixel{0.0, 0.0});
  bundle.visible.assign(n, 0);
  std::vector<std::uint8_t> seen(n, 0);

  while (next_line(line)) {
    const json rec = parse_line(line);
    if (!rec.is_object()) {
      throw Error(ErrorCode::SchemaError, "tracks line " + std::to_string(line_no) + " is not an object");
    }
    const auto t = int_field(rec, "frame");
    const auto i = int_field(rec, "point_id");
    if (t < 0 || t >= frames || i < 0 || i >= points) {
      throw Error(ErrorCode::SchemaError,
                  "tracks line " + std::to_string(line_no) + ": frame or point_id out of range");
    }
    if (!rec.contains("u") || !rec["u"].is_number() || !rec.contains("v") || !rec["v"].is_number() ||
        !rec.contains("visible") || !rec["visible"].is_boolean()) {
      throw Error(ErrorCode::SchemaError,
                  "tracks line " + std::to_string(line_no) + ": needs numeric u, v and boolean visible");
    }
    const std::size_t k = bundle.index(static_cast<int>(t), static_cast<int>(i));
    if (seen[k]) {
      throw Error(ErrorCode::SchemaError, "tracks line " + std::to_string(line_no) +
                                              ": duplicate record for frame " + std::to_string(t) +
                                              " point " + std::to_string(i));
    }
    seen[k] = 1;
    bundle.uv[k] = {rec["u"].get<double>(), rec["v"].get<double>()};
    bundle.visible[k] = rec["visible"].get<bool>() ? 1 : 0;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!seen[k]) {
      throw Error(ErrorCode::SchemaError, "tracks file lacks frame " +
                                              std::to_string(k / points) + " point " +
                                              std::to_string(k % points));
    }
  }
}

std::string depth_file_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "depth_%05d.dpf", frame);
  return buf;
}

void write_bundle(const std::string& dir, const TrackBundle& bundle) {
  const std::filesystem::path root(dir);
  write_file_atomic((root / "tracks.jsonl").string(), encode_tracks(bundle));
  write_file_atomic((root / "mask.msk").string(), encode_mask(bundle.mask));
  for (int t = 0; t < static_cast<int>(bundle.depth.size()); ++t) {
    write_file_atomic((root / depth_file_name(t)).string(), encode_depth(bundle.depth[t]));
  }
}

TrackBundle read_bundle(const std::string& dir) {
  const std::filesystem::path root(dir);
  TrackBundle bundle;
  decode_tracks(read_text_file((root / "tracks.jsonl").string()), bundle);
  bundle.mask = decode_mask(read_text_file((root / "mask.msk").string()));
  for (int t = 0; t < bundle.num_frames; ++t) {
    bundle.depth.push_back(decode_depth(read_text_file((root / depth_file_name(t)).string())));
  }
  return bundle;
}

}  // namespace groundtrace
