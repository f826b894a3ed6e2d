#include "t4g/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <tuple>

#include "json.hpp"
#include "t4g/corrloss.hpp"
#include "t4g/error.hpp"
#include "t4g/io.hpp"
#include "t4g/parallel.hpp"

namespace t4g {

namespace {

using json = nlohmann::json;

bool covers(const Sprite& s, Point p, int frame) {
  const Point d = p - (s.position + static_cast<double>(frame) * s.velocity);
  if (s.shape == SpriteShape::disc) return d.x * d.x + d.y * d.y <= s.size * s.size;
  return std::max(std::abs(d.x), std::abs(d.y)) <= s.size;
}

Point velocity_of(const SceneSpec& spec, int object) {
  return object == kBackground ? spec.pan : spec.sprites[object].velocity;
}

Point origin_of(const SceneSpec& spec, int object, int frame) {
  const double n = frame;
  return object == kBackground ? n * spec.pan : spec.sprites[object].position + n * spec.sprites[object].velocity;
}

// Lazily assigned texture codes keyed by (object, node x, node y).
class Codebook {
 public:
  Codebook(const FeatureOptions& options, std::uint64_t seed) : options_(options) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(options.channels)};
    rng_.seed(seq);
    if (options.codes == CodeKind::orthogonal) {
      free_.resize(options.channels);
      for (int c = 0; c < options.channels; ++c) free_[c] = c;
      std::shuffle(free_.begin(), free_.end(), rng_);
    }
  }

  const std::vector<double>& code(int object, long nx, long ny) {
    const auto key = std::make_tuple(object, nx, ny);
    auto it = index_.find(key);
    if (it == index_.end()) it = index_.emplace(key, create()).first;
    return codes_[it->second];
  }

 private:
  std::size_t create() {
    const int c = options_.channels;
    std::vector<double> v(c, 0.0);
    if (options_.codes == CodeKind::orthogonal) {
      if (free_.empty()) {
        fail(ErrorCode::invalid_argument, "orthogonal codes need more than " + std::to_string(c) +
                                              " channels for this scene");
      }
      v[free_.back()] = 1.0;
      free_.pop_back();
    } else {
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (int attempt = 0;; ++attempt) {
        if (attempt == 10000) fail(ErrorCode::invalid_argument, "cannot place a distinct dense code");
        double n2 = 0.0;
        for (double& x : v) {
          x = std::abs(gauss(rng_));
          n2 += x * x;
        }
        const double n = std::sqrt(n2);
        if (!(n > 0.0)) continue;
        for (double& x : v) x /= n;
        if (far_enough(v)) break;
      }
    }
    codes_.push_back(std::move(v));
    return codes_.size() - 1;
  }

  bool far_enough(const std::vector<double>& v) const {
    const double limit = options_.min_code_distance * options_.min_code_distance;
    for (const auto& other : codes_) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) d2 += (v[i] - other[i]) * (v[i] - other[i]);
      if (d2 <= limit) return false;
    }
    return true;
  }

  FeatureOptions options_;
  std::mt19937_64 rng_;
  std::vector<int> free_;
  std::vector<std::vector<double>> codes_;
  std::map<std::tuple<int, long, long>, std::size_t> index_;
};

std::vector<double> random_rotation(int c, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Columns of q, stored column-major, orthonormalised by modified Gram-Schmidt.
  std::vector<double> q(static_cast<std::size_t>(c) * c);
  for (int col = 0; col < c; ++col) {
    double* v = q.data() + static_cast<std::size_t>(col) * c;
    for (;;) {
      for (int i = 0; i < c; ++i) v[i] = gauss(rng);
      for (int prev = 0; prev < col; ++prev) {
        const double* u = q.data() + static_cast<std::size_t>(prev) * c;
        double d = 0.0;
        for (int i = 0; i < c; ++i) d += u[i] * v[i];
        for (int i = 0; i < c; ++i) v[i] -= d * u[i];
      }
      double n2 = 0.0;
      for (int i = 0; i < c; ++i) n2 += v[i] * v[i];
      if (n2 > 1e-12) {
        const double n = std::sqrt(n2);
        for (int i = 0; i < c; ++i) v[i] /= n;
        break;
      }
    }
  }
  return q;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

json sprite_json(const Sprite& s) {
  return {{"shape", s.shape == SpriteShape::disc ? "disc" : "box"},
          {"size", s.size},
          {"position", {s.position.x, s.position.y}},
          {"velocity", {s.velocity.x, s.velocity.y}},
          {"depth", s.depth},
          {"texture_seed", s.texture_seed}};
}

Point point_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

Tensor relu_tensor(const FeatureVolume& v) {
  Tensor t = to_tensor(v);
  for (double& x : t.values()) x = x > 0.0 ? x : 0.0;
  return t;
}

}  // namespace

void validate(const SceneSpec& spec) {
  if (spec.num_frames < 1) fail(ErrorCode::validation, "scene needs at least one frame");
  if (spec.pixels.height < 1 || spec.pixels.width < 1) fail(ErrorCode::validation, "scene canvas must be positive");
  if (spec.track_stride < 1) fail(ErrorCode::validation, "track stride must be >= 1");
  if (!std::isfinite(spec.pan.x) || !std::isfinite(spec.pan.y)) fail(ErrorCode::validation, "pan must be finite");
  for (std::size_t i = 0; i < spec.sprites.size(); ++i) {
    const Sprite& s = spec.sprites[i];
    const std::string where = "sprite " + std::to_string(i);
    if (!(s.size > 0.0)) fail(ErrorCode::validation, where + ": size must be > 0");
    if (!(2.0 * s.size < std::min(spec.pixels.height, spec.pixels.width))) {
      fail(ErrorCode::validation, where + ": larger than the canvas");
    }
    if (!std::isfinite(s.velocity.x) || !std::isfinite(s.velocity.y) || !spec.pixels.contains(s.position)) {
      fail(ErrorCode::validation, where + ": must start inside the canvas with a finite velocity");
    }
  }
}

int visible_object(const SceneSpec& spec, Point p, int frame) {
  int best = kBackground;
  for (std::size_t i = 0; i < spec.sprites.size(); ++i) {
    if (!covers(spec.sprites[i], p, frame)) continue;
    if (best == kBackground || spec.sprites[i].depth < spec.sprites[best].depth) best = static_cast<int>(i);
  }
  return best;
}

RenderedScene render_scene(const SceneSpec& spec) {
  validate(spec);
  const Resolution res = spec.pixels;
  const int frames = spec.num_frames;
  RenderedScene out;

  std::vector<int> objects(static_cast<std::size_t>(frames) * res.height * res.width);
  const auto obj = [&](int n, int y, int x) -> int& {
    return objects[(static_cast<std::size_t>(n) * res.height + y) * res.width + x];
  };
  out.masks = MaskStack(frames, res);
  for (int n = 0; n < frames; ++n) {
    for (int y = 0; y < res.height; ++y) {
      for (int x = 0; x < res.width; ++x) {
        obj(n, y, x) = visible_object(spec, {static_cast<double>(x), static_cast<double>(y)}, n);
        out.masks.set(n, y, x, obj(n, y, x) != kBackground);
      }
    }
    out.fg_area.push_back(out.masks.area(n));
  }

  out.flows.num_frames = frames;
  out.flows.resolution = res;
  for (int n = 0; n + 1 < frames; ++n) {
    FlowField fwd(res.height, res.width), bwd(res.height, res.width);
    for (int y = 0; y < res.height; ++y) {
      for (int x = 0; x < res.width; ++x) {
        fwd.set(y, x, velocity_of(spec, obj(n, y, x)));
        bwd.set(y, x, -1.0 * velocity_of(spec, obj(n + 1, y, x)));
      }
    }
    out.flows.forward.push_back(std::move(fwd));
    out.flows.backward.push_back(std::move(bwd));
  }

  out.tracks.num_frames = frames;
  out.tracks.resolution = res;
  for (int y = 0; y < res.height; y += spec.track_stride) {
    for (int x = 0; x < res.width; x += spec.track_stride) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      const int o = obj(0, y, x);
      const Point v = velocity_of(spec, o);
      Track track;
      std::vector<bool> occluded;
      for (int n = 0; n < frames; ++n) {
        const Point q = p + static_cast<double>(n) * v;
        const bool inside = res.contains(q);
        const bool visible = inside && visible_object(spec, q, n) == o;
        track.positions.push_back(q);
        track.visible.push_back(visible);
        occluded.push_back(inside && !visible);
      }
      out.tracks.tracks.push_back(std::move(track));
      out.occluded.push_back(std::move(occluded));
    }
  }
  validate(out.tracks);
  return out;
}

FeatureVolume ideal_features(const SceneSpec& spec, const FeatureOptions& options) {
  validate(spec);
  if (options.channels < 2) fail(ErrorCode::invalid_argument, "features need at least 2 channels");
  if (options.cell_px < 1 || spec.pixels.height % options.cell_px != 0 || spec.pixels.width % options.cell_px != 0) {
    fail(ErrorCode::invalid_argument, "cell_px must divide the canvas");
  }
  if (!(options.min_code_distance >= 0.0)) fail(ErrorCode::invalid_argument, "min_code_distance must be >= 0");

  const int gh = spec.pixels.height / options.cell_px;
  const int gw = spec.pixels.width / options.cell_px;
  const double cell = options.cell_px;
  std::uint64_t code_seed = spec.seed ^ (spec.background_seed * 0x9E3779B97F4A7C15ULL);
  for (const Sprite& s : spec.sprites) code_seed = code_seed * 0x100000001B3ULL ^ s.texture_seed;
  Codebook book(options, code_seed);
  FeatureVolume volume(spec.num_frames, gh, gw, options.channels);
  for (int n = 0; n < spec.num_frames; ++n) {
    for (int gy = 0; gy < gh; ++gy) {
      for (int gx = 0; gx < gw; ++gx) {
        const Point p{gx * cell, gy * cell};
        const int o = visible_object(spec, p, n);
        const Point u = p - origin_of(spec, o, n);
        const double ux = u.x / cell, uy = u.y / cell;
        const long ix = static_cast<long>(std::floor(ux)), iy = static_cast<long>(std::floor(uy));
        const double fx = ux - ix, fy = uy - iy;
        const double weights[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
        const long nodes[4][2] = {{ix, iy}, {ix + 1, iy}, {ix, iy + 1}, {ix + 1, iy + 1}};
        auto dst = volume.cell(n, gy, gx);
        std::vector<double> acc(options.channels, 0.0);
        for (int k = 0; k < 4; ++k) {
          if (weights[k] == 0.0) continue;
          const std::vector<double>& c = book.code(o, nodes[k][0], nodes[k][1]);
          for (int ch = 0; ch < options.channels; ++ch) acc[ch] += weights[k] * c[ch];
        }
        for (int ch = 0; ch < options.channels; ++ch) dst[ch] = static_cast<float>(acc[ch]);
      }
    }
  }
  return volume;
}

FeatureVolume corrupt_features(const FeatureVolume& volume, const CorruptionSpec& spec, std::uint64_t seed) {
  validate(volume);
  if (!(spec.drift_rate >= 0.0) || !(spec.noise_sigma >= 0.0) || spec.onset_frame < 0) {
    fail(ErrorCode::invalid_argument, "corruption magnitudes must be nonnegative");
  }
  const int c = volume.channels();
  std::mt19937_64 rng(seed);
  const std::vector<double> q = random_rotation(c, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);

  FeatureVolume out = volume;
  std::vector<double> f(c), rotated(c);
  for (int n = spec.onset_frame; n < volume.frames(); ++n) {
    const double a = std::min(1.0, spec.drift_rate * (n - spec.onset_frame + 1));
    for (int y = 0; y < volume.height(); ++y) {
      for (int x = 0; x < volume.width(); ++x) {
        const auto src = volume.cell(n, y, x);
        for (int i = 0; i < c; ++i) f[i] = src[i];
        std::fill(rotated.begin(), rotated.end(), 0.0);
        if (a > 0.0) {
          for (int j = 0; j < c; ++j) {
            if (f[j] == 0.0) continue;
            const double* col = q.data() + static_cast<std::size_t>(j) * c;
            for (int i = 0; i < c; ++i) rotated[i] += col[i] * f[j];
          }
        }
        auto dst = out.cell(n, y, x);
        for (int i = 0; i < c; ++i) {
          double v = (1.0 - a) * f[i] + a * rotated[i];
          if (spec.noise_sigma > 0.0) v += spec.noise_sigma * gauss(rng);
          dst[i] = static_cast<float>(v);
        }
      }
    }
  }
  return out;
}

SceneSpec random_scene(const SceneGenConfig& config, std::uint64_t seed) {
  const int cell = config.cell_px;
  if (cell < 1 || config.num_frames < 1 || config.num_sprites < 0 || config.min_size_cells < 1 ||
      config.max_size_cells < config.min_size_cells || config.max_speed_cells < 0 || config.max_pan_cells < 0) {
    fail(ErrorCode::invalid_argument, "invalid scene generator config");
  }
  if (config.pixels.height % cell != 0 || config.pixels.width % cell != 0) {
    fail(ErrorCode::invalid_argument, "cell_px must divide the canvas");
  }
  std::mt19937_64 rng(seed);
  SceneSpec spec;
  spec.num_frames = config.num_frames;
  spec.pixels = config.pixels;
  spec.seed = seed;
  spec.track_stride = cell;
  spec.background_seed = rng();
  spec.pan = {static_cast<double>(cell * uniform_int(rng, -config.max_pan_cells, config.max_pan_cells)),
              static_cast<double>(cell * uniform_int(rng, -config.max_pan_cells, config.max_pan_cells))};
  const int gh = config.pixels.height / cell, gw = config.pixels.width / cell;
  for (int k = 0; k < config.num_sprites; ++k) {
    const int max_cells = std::min(config.max_size_cells, (std::min(gh, gw) - 1) / 2);
    if (max_cells < config.min_size_cells) fail(ErrorCode::invalid_argument, "sprites do not fit the canvas");
    Sprite s;
    const int size_cells = uniform_int(rng, config.min_size_cells, max_cells);
    s.size = static_cast<double>(size_cells * cell);
    s.shape = uniform_int(rng, 0, 1) == 0 ? SpriteShape::disc : SpriteShape::box;
    s.position = {static_cast<double>(cell * uniform_int(rng, size_cells, gw - 1 - size_cells)),
                  static_cast<double>(cell * uniform_int(rng, size_cells, gh - 1 - size_cells))};
    s.velocity = {static_cast<double>(cell * uniform_int(rng, -config.max_speed_cells, config.max_speed_cells)),
                  static_cast<double>(cell * uniform_int(rng, -config.max_speed_cells, config.max_speed_cells))};
    s.depth = k;
    s.texture_seed = rng();
    spec.sprites.push_back(s);
  }
  validate(spec);
  return spec;
}

std::string scene_to_json(const SceneSpec& spec) {
  json sprites = json::array();
  for (const Sprite& s : spec.sprites) sprites.push_back(sprite_json(s));
  const json doc = {{"num_frames", spec.num_frames},
                    {"height", spec.pixels.height},
                    {"width", spec.pixels.width},
                    {"pan", {spec.pan.x, spec.pan.y}},
                    {"background_seed", spec.background_seed},
                    {"seed", spec.seed},
                    {"track_stride", spec.track_stride},
                    {"sprites", sprites}};
  return doc.dump(1) + "\n";
}

SceneSpec scene_from_json(const std::string& text) {
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorCode::format, "scene file is not a JSON object");
  try {
    SceneSpec spec;
    spec.num_frames = doc.at("num_frames").get<int>();
    spec.pixels = {doc.at("height").get<int>(), doc.at("width").get<int>()};
    spec.pan = point_from(doc.at("pan"));
    spec.background_seed = doc.at("background_seed").get<std::uint64_t>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    spec.track_stride = doc.at("track_stride").get<int>();
    for (const json& s : doc.at("sprites")) {
      Sprite sprite;
      const std::string shape = s.at("shape").get<std::string>();
      if (shape != "disc" && shape != "box") fail(ErrorCode::format, "unknown sprite shape " + shape);
      sprite.shape = shape == "disc" ? SpriteShape::disc : SpriteShape::box;
      sprite.size = s.at("size").get<double>();
      sprite.position = point_from(s.at("position"));
      sprite.velocity = point_from(s.at("velocity"));
      sprite.depth = s.at("depth").get<int>();
      sprite.texture_seed = s.at("texture_seed").get<std::uint64_t>();
      spec.sprites.push_back(sprite);
    }
    validate(spec);
    return spec;
  } catch (const json::exception& e) {
    fail(ErrorCode::format, std::string("malformed scene file: ") + e.what());
  }
}

void make_benchmark(const std::filesystem::path& dir, const BenchmarkConfig& config) {
  if (config.n_scenes < 0) fail(ErrorCode::invalid_argument, "n_scenes must be >= 0");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create " + dir.string());

  std::mt19937_64 rng(config.seed);
  std::vector<std::uint64_t> seeds(config.n_scenes);
  for (auto& s : seeds) s = rng();

  std::vector<json> entries(config.n_scenes);
  parallel_for(seeds.size(), [&](std::size_t i) {
    const std::string name = "scene_" + std::to_string(i);
    const std::filesystem::path sub = dir / name;
    std::filesystem::create_directories(sub);
    const SceneSpec spec = random_scene(config.scene, seeds[i]);
    const RenderedScene scene = render_scene(spec);
    const FeatureVolume ideal = ideal_features(spec, config.features);
    const FeatureVolume corrupted = corrupt_features(ideal, config.corruption, seeds[i] + 1);

    write_feature_volume(ideal, sub / "ideal.t4gf");
    write_feature_volume(corrupted, sub / "corrupted.t4gf");
    write_tracks(scene.tracks, sub / "tracks.json",
                 json{{"scene", name}, {"seed", seeds[i]}}.dump());
    write_flows(scene.flows, sub / "flows.t4gw");
    write_masks(scene.masks, sub / "masks.t4gf");
    json scene_doc = json::parse(scene_to_json(spec));
    scene_doc["fg_area"] = scene.fg_area;
    write_text_file(sub / "scene.json", scene_doc.dump(1) + "\n");

    json entry = {{"name", name}, {"seed", seeds[i]}};
    const PairSample pairs = sample_pairs(scene.tracks, &scene.masks, config.loss_pairs, 0.5, seeds[i] + 2);
    if (!pairs.pairs.empty()) {
      const double ideal_loss = corr_loss_value(relu_tensor(ideal), spec.pixels, pairs.pairs, {}, {});
      const double corrupted_loss = corr_loss_value(relu_tensor(corrupted), spec.pixels, pairs.pairs, {}, {});
      entry["ideal_corr_loss"] = ideal_loss;
      entry["corrupted_corr_loss"] = corrupted_loss;
      entry["corruption_increases_loss"] = corrupted_loss > ideal_loss;
    }
    entries[i] = std::move(entry);
  });

  const json features = {{"channels", config.features.channels},
                         {"cell_px", config.features.cell_px},
                         {"codes", config.features.codes == CodeKind::orthogonal ? "orthogonal" : "dense"},
                         {"min_code_distance", config.features.min_code_distance}};
  const json scene_cfg = {{"num_frames", config.scene.num_frames},
                          {"height", config.scene.pixels.height},
                          {"width", config.scene.pixels.width},
                          {"cell_px", config.scene.cell_px},
                          {"num_sprites", config.scene.num_sprites},
                          {"min_size_cells", config.scene.min_size_cells},
                          {"max_size_cells", config.scene.max_size_cells},
                          {"max_speed_cells", config.scene.max_speed_cells},
                          {"max_pan_cells", config.scene.max_pan_cells}};
  const json corruption = {{"drift_rate", config.corruption.drift_rate},
                           {"noise_sigma", config.corruption.noise_sigma},
                           {"onset_frame", config.corruption.onset_frame}};
  const json manifest = {{"format", "t4g-benchmark"},
                         {"version", kFormatVersion},
                         {"seed", config.seed},
                         {"n_scenes", config.n_scenes},
                         {"scene_config", scene_cfg},
                         {"features", features},
                         {"corruption", corruption},
                         {"loss_pairs", config.loss_pairs},
                         {"scenes", entries}};
  write_text_file(dir / "manifest.json", manifest.dump(1) + "\n");
}

std::vector<BenchmarkScene> load_benchmark(const std::filesystem::path& dir) {
  const json manifest = json::parse(read_text_file(dir / "manifest.json"), nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object() || !manifest.contains("scenes")) {
    fail(ErrorCode::format, (dir / "manifest.json").string() + ": not a benchmark manifest");
  }
  std::vector<BenchmarkScene> scenes;
  for (const json& entry : manifest.at("scenes")) {
    BenchmarkScene s;
    s.name = entry.at("name").get<std::string>();
    const std::filesystem::path sub = dir / s.name;
    const std::string scene_text = read_text_file(sub / "scene.json");
    s.spec = scene_from_json(scene_text);
    s.fg_area = json::parse(scene_text).at("fg_area").get<std::vector<double>>();
    s.ideal = read_feature_volume(sub / "ideal.t4gf");
    s.corrupted = read_feature_volume(sub / "corrupted.t4gf");
    s.tracks = read_tracks(sub / "tracks.json");
    s.flows = read_flows(sub / "flows.t4gw");
    s.masks = read_masks(sub / "masks.t4gf");
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace t4g
