#pragma once

// Procedural rigid-sprite scenes with exact tracks, flows, masks and
// occlusion flags, plus matching feature volumes and their corruption.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "t4g/matching.hpp"
#include "t4g/types.hpp"

namespace t4g {

enum class SpriteShape { disc, box };

struct Sprite {
  SpriteShape shape = SpriteShape::disc;
  double size = 4.0;  // radius or half side, pixels
  Point position;     // centre at frame 0
  Point velocity;     // pixels per frame
  int depth = 0;      // smaller is closer to the camera
  std::uint64_t texture_seed = 0;

  friend bool operator==(const Sprite&, const Sprite&) = default;
};

struct SceneSpec {
  int num_frames = 8;
  Resolution pixels{24, 32};
  std::vector<Sprite> sprites;
  Point pan;  // background velocity, pixels per frame
  std::uint64_t background_seed = 0;
  std::uint64_t seed = 0;
  int track_stride = 2;  // pixels between ground-truth seeds

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

void validate(const SceneSpec& spec);

inline constexpr int kBackground = -1;

/// Index of the sprite seen at pixel p in frame n, or kBackground.
int visible_object(const SceneSpec& spec, Point p, int frame);

struct RenderedScene {
  MaskStack masks;
  TrackSet tracks;  // seeded on the stride grid at frame 0
  std::vector<std::vector<bool>> occluded;  // per track and frame: inside the image but covered
  FlowPyramid flows;
  std::vector<double> fg_area;
};

RenderedScene render_scene(const SceneSpec& spec);

enum class CodeKind {
  orthogonal,  // a distinct one-hot vector per texture node
  dense,       // |gaussian| unit vectors, rejection-sampled on pairwise distance
};

struct FeatureOptions {
  int channels = 16;
  int cell_px = 1;  // pixels per feature cell and per texture node
  CodeKind codes = CodeKind::dense;
  double min_code_distance = 0.1;  // dense codes only
};

/// Feature grid of H/cell_px x W/cell_px cells. Each cell carries the
/// bilinear blend of the texture codes around its scene point, so features
/// move with their object.
FeatureVolume ideal_features(const SceneSpec& spec, const FeatureOptions& options);

struct CorruptionSpec {
  double drift_rate = 0.15;
  double noise_sigma = 0.2;
  int onset_frame = 1;

  friend bool operator==(const CorruptionSpec&, const CorruptionSpec&) = default;
};

/// From onset_frame on: f' = (1 - a) f + a Q f + sigma * noise with
/// a = min(1, drift_rate * (n - onset + 1)) and Q a seeded random rotation.
FeatureVolume corrupt_features(const FeatureVolume& volume, const CorruptionSpec& spec, std::uint64_t seed);

struct SceneGenConfig {
  int num_frames = 8;
  Resolution pixels{24, 32};
  int cell_px = 2;
  int num_sprites = 2;
  int min_size_cells = 2;
  int max_size_cells = 4;
  int max_speed_cells = 1;
  int max_pan_cells = 1;

  friend bool operator==(const SceneGenConfig&, const SceneGenConfig&) = default;
};

/// Positions, sizes and velocities are whole multiples of cell_px.
SceneSpec random_scene(const SceneGenConfig& config, std::uint64_t seed);

struct BenchmarkConfig {
  int n_scenes = 10;
  std::uint64_t seed = 0;
  SceneGenConfig scene;
  FeatureOptions features{512, 2, CodeKind::orthogonal, 0.1};
  CorruptionSpec corruption;
  std::size_t loss_pairs = 512;
};

std::string scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const std::string& text);

/// Writes scene_<i>/{ideal.t4gf, corrupted.t4gf, tracks.json, flows.t4gw,
/// masks.t4gf, scene.json} and manifest.json under `dir`. The manifest
/// records the corr_loss of ideal and corrupted features under an identity
/// refiner, measured on each scene.
void make_benchmark(const std::filesystem::path& dir, const BenchmarkConfig& config);

struct BenchmarkScene {
  std::string name;
  SceneSpec spec;
  FeatureVolume ideal;
  FeatureVolume corrupted;
  TrackSet tracks;
  FlowPyramid flows;
  MaskStack masks;
  std::vector<double> fg_area;
};

std::vector<BenchmarkScene> load_benchmark(const std::filesystem::path& dir);

}  // namespace t4g
