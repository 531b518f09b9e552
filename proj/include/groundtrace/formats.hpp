#pragma once

#include <string>
#include <string_view>

#include "groundtrace/grounding.hpp"

namespace groundtrace {

// DPF1: "DPF1", u32 width, u32 height, width*height float32, little-endian.
std::string encode_depth(const DepthFrame& frame);
DepthFrame decode_depth(std::string_view bytes);

// MSK1: "MSK1", u32 width, u32 height, width*height bytes (0/1).
std::string encode_mask(const MaskImage& mask);
MaskImage decode_mask(std::string_view bytes);

// Track JSON-lines: header {num_frames, num_points, intrinsics}, then one
// {frame, point_id, u, v, visible} record per frame and point.
std::string encode_tracks(const TrackBundle& bundle);
/// Fills num_frames, num_points, uv, visible and intrinsics; depth and mask untouched.
void decode_tracks(std::string_view text, TrackBundle& bundle);

std::string depth_file_name(int frame);

/// Bundle directory: tracks.jsonl, mask.msk, depth_XXXXX.dpf per frame.
void write_bundle(const std::string& dir, const TrackBundle& bundle);
TrackBundle read_bundle(const std::string& dir);

}  // namespace groundtrace
