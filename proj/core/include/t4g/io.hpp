#pragma once

// File formats.
//
//   T4GF feature file: magic "T4GF", version, N, H, W, C (six little-endian
//        u32, 24 bytes) followed by N*H*W*C little-endian float32.
//   T4GW flow file:    magic "T4GW", version, N, H, W, pad(0), then (N-1)*H*W*2
//        forward floats followed by (N-1)*H*W*2 backward floats.
//   Track file:        JSON object {num_frames, height, width, tracks[]} where
//        each track is {query_frame, positions: [[x, y], ...], visible: [...]}.
//        An optional "metadata" object is written verbatim and ignored on read.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "t4g/types.hpp"

namespace t4g {

inline constexpr std::uint32_t kFormatVersion = 1;

FeatureVolume read_feature_volume(const std::filesystem::path& path);
void write_feature_volume(const FeatureVolume& volume, const std::filesystem::path& path);

FlowPyramid read_flows(const std::filesystem::path& path);
void write_flows(const FlowPyramid& flows, const std::filesystem::path& path);

TrackSet read_tracks(const std::filesystem::path& path);
/// `metadata_json`, when non-empty, must be a JSON object; it is embedded
/// under the "metadata" key.
void write_tracks(const TrackSet& tracks, const std::filesystem::path& path,
                  std::string_view metadata_json = {});

TrackSet tracks_from_json(std::string_view text);
std::string tracks_to_json(const TrackSet& tracks, std::string_view metadata_json = {});

/// Masks are stored as a single-channel T4GF volume with 0/1 entries.
MaskStack read_masks(const std::filesystem::path& path);
void write_masks(const MaskStack& masks, const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace t4g
