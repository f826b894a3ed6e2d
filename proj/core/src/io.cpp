#include "t4g/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "t4g/error.hpp"

namespace t4g {

namespace {

using json = nlohmann::json;

constexpr std::array<char, 4> kFeatureMagic{'T', '4', 'G', 'F'};
constexpr std::array<char, 4> kFlowMagic{'T', '4', 'G', 'W'};
constexpr std::size_t kHeaderBytes = 24;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::vector<unsigned char>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io, "short write to " + path.string());
}

struct Header {
  std::array<std::uint32_t, 4> dims{};
};

Header parse_header(const std::vector<unsigned char>& bytes, const std::array<char, 4>& magic,
                    const std::filesystem::path& path) {
  if (bytes.size() < kHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), magic.data(), 4) != 0) {
      fail(ErrorCode::format, path.string() + ": bad magic");
    }
    fail(ErrorCode::length, path.string() + ": truncated header");
  }
  if (std::memcmp(bytes.data(), magic.data(), 4) != 0) {
    fail(ErrorCode::format, path.string() + ": bad magic");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFormatVersion) {
    fail(ErrorCode::format, path.string() + ": unsupported version " + std::to_string(version));
  }
  Header h;
  for (int i = 0; i < 4; ++i) h.dims[i] = get_u32(bytes.data() + 8 + 4 * i);
  return h;
}

void check_payload(std::size_t have, std::size_t floats, const std::filesystem::path& path) {
  const std::size_t want = kHeaderBytes + floats * 4;
  if (have != want) {
    fail(ErrorCode::length, path.string() + ": payload is " + std::to_string(have) +
                                " bytes, expected " + std::to_string(want));
  }
}

void append_field(std::vector<unsigned char>& out, const FlowField& f) {
  for (float v : f.data) put_f32(out, v);
}

FlowField parse_field(const unsigned char* p, int h, int w) {
  FlowField f(h, w);
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = get_f32(p + 4 * i);
  return f;
}

json metadata_object(std::string_view metadata_json) {
  json meta = json::parse(metadata_json.begin(), metadata_json.end(), nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) {
    fail(ErrorCode::format, "track metadata must be a JSON object");
  }
  return meta;
}

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    fail(ErrorCode::format, where + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::format, where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

FeatureVolume read_feature_volume(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  const Header h = parse_header(bytes, kFeatureMagic, path);
  const std::size_t count =
      static_cast<std::size_t>(h.dims[0]) * h.dims[1] * h.dims[2] * h.dims[3];
  check_payload(bytes.size(), count, path);
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = get_f32(bytes.data() + kHeaderBytes + 4 * i);
  FeatureVolume volume(static_cast<int>(h.dims[0]), static_cast<int>(h.dims[1]),
                       static_cast<int>(h.dims[2]), static_cast<int>(h.dims[3]), std::move(data));
  validate(volume);
  return volume;
}

void write_feature_volume(const FeatureVolume& volume, const std::filesystem::path& path) {
  validate(volume);
  std::vector<unsigned char> out;
  out.reserve(kHeaderBytes + volume.size() * 4);
  out.insert(out.end(), kFeatureMagic.begin(), kFeatureMagic.end());
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(volume.frames()));
  put_u32(out, static_cast<std::uint32_t>(volume.height()));
  put_u32(out, static_cast<std::uint32_t>(volume.width()));
  put_u32(out, static_cast<std::uint32_t>(volume.channels()));
  for (float v : volume.values()) put_f32(out, v);
  write_bytes(path, out);
}

FlowPyramid read_flows(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  const Header h = parse_header(bytes, kFlowMagic, path);
  if (h.dims[0] < 1) fail(ErrorCode::validation, path.string() + ": zero frames");
  const int n = static_cast<int>(h.dims[0]);
  const int height = static_cast<int>(h.dims[1]);
  const int width = static_cast<int>(h.dims[2]);
  const std::size_t per_field = static_cast<std::size_t>(height) * width * 2;
  check_payload(bytes.size(), 2 * per_field * static_cast<std::size_t>(n - 1), path);

  FlowPyramid flows;
  flows.num_frames = n;
  flows.resolution = {height, width};
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (int i = 0; i + 1 < n; ++i, p += per_field * 4) flows.forward.push_back(parse_field(p, height, width));
  for (int i = 0; i + 1 < n; ++i, p += per_field * 4) flows.backward.push_back(parse_field(p, height, width));
  validate(flows);
  return flows;
}

void write_flows(const FlowPyramid& flows, const std::filesystem::path& path) {
  validate(flows);
  std::vector<unsigned char> out;
  out.insert(out.end(), kFlowMagic.begin(), kFlowMagic.end());
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(flows.num_frames));
  put_u32(out, static_cast<std::uint32_t>(flows.resolution.height));
  put_u32(out, static_cast<std::uint32_t>(flows.resolution.width));
  put_u32(out, 0);
  for (const auto& f : flows.forward) append_field(out, f);
  for (const auto& f : flows.backward) append_field(out, f);
  write_bytes(path, out);
}

TrackSet tracks_from_json(std::string_view text) {
  const json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorCode::format, "track file is not a JSON object");

  TrackSet set;
  set.num_frames = required<int>(doc, "num_frames", "track file");
  set.resolution.height = required<int>(doc, "height", "track file");
  set.resolution.width = required<int>(doc, "width", "track file");
  const json tracks = required<json>(doc, "tracks", "track file");
  if (!tracks.is_array()) fail(ErrorCode::format, "track file: 'tracks' must be an array");

  for (std::size_t t = 0; t < tracks.size(); ++t) {
    const std::string where = "track " + std::to_string(t);
    const json& item = tracks[t];
    Track track;
    track.query_frame = required<int>(item, "query_frame", where);
    const json positions = required<json>(item, "positions", where);
    const json visible = required<json>(item, "visible", where);
    if (!positions.is_array() || !visible.is_array()) {
      fail(ErrorCode::format, where + ": positions/visible must be arrays");
    }
    for (const json& p : positions) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        fail(ErrorCode::format, where + ": each position must be [x, y]");
      }
      track.positions.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    for (const json& v : visible) {
      if (!v.is_boolean()) fail(ErrorCode::format, where + ": visible entries must be booleans");
      track.visible.push_back(v.get<bool>());
    }
    set.tracks.push_back(std::move(track));
  }
  validate(set);
  return set;
}

std::string tracks_to_json(const TrackSet& set, std::string_view metadata_json) {
  validate(set);
  json doc = json::object();
  doc["num_frames"] = set.num_frames;
  doc["height"] = set.resolution.height;
  doc["width"] = set.resolution.width;
  json tracks = json::array();
  for (const Track& track : set.tracks) {
    json positions = json::array();
    for (const Point& p : track.positions) positions.push_back({p.x, p.y});
    json visible = json::array();
    for (bool v : track.visible) visible.push_back(v);
    tracks.push_back({{"query_frame", track.query_frame},
                      {"positions", std::move(positions)},
                      {"visible", std::move(visible)}});
  }
  doc["tracks"] = std::move(tracks);
  if (!metadata_json.empty()) doc["metadata"] = metadata_object(metadata_json);
  return doc.dump(1) + "\n";
}

TrackSet read_tracks(const std::filesystem::path& path) { return tracks_from_json(read_text_file(path)); }

void write_tracks(const TrackSet& set, const std::filesystem::path& path,
                  std::string_view metadata_json) {
  write_text_file(path, tracks_to_json(set, metadata_json));
}

MaskStack read_masks(const std::filesystem::path& path) { return to_masks(read_feature_volume(path)); }

void write_masks(const MaskStack& masks, const std::filesystem::path& path) {
  write_feature_volume(to_features(masks), path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorCode::io, "short write to " + path.string());
}

}  // namespace t4g
