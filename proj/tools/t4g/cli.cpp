#include "cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "t4g/corrloss.hpp"
#include "t4g/error.hpp"
#include "t4g/flowchain.hpp"
#include "t4g/io.hpp"
#include "t4g/matching.hpp"
#include "t4g/metrics.hpp"
#include "t4g/micronet.hpp"
#include "t4g/synthgen.hpp"

namespace t4g::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Resolved settings for one command: built-in defaults, then the --config
// file, then explicit flags.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {}

  template <typename T>
  void add(const std::string& key, const json& fallback, const std::string& help) {
    values_[key] = fallback;
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app_->add_option("--" + dashed(key), *holder, help);
    overrides_.push_back([opt, holder, key](json& j) {
      if (opt->count() > 0) j[key] = *holder;
    });
  }

  void add_flag(const std::string& key, bool fallback, const std::string& help) {
    values_[key] = fallback;
    auto holder = std::make_shared<bool>(fallback);
    CLI::Option* opt = app_->add_flag("--" + dashed(key) + ",!--no-" + dashed(key), *holder, help);
    overrides_.push_back([opt, holder, key](json& j) {
      if (opt->count() > 0) j[key] = *holder;
    });
  }

  void add_config_option() { app_->add_option("--config", config_path_, "JSON file of settings"); }

  json resolve() const {
    json out = values_;
    if (!config_path_.empty()) {
      const std::string text = read_text_file(config_path_);
      const json file = json::parse(text, nullptr, false);
      if (file.is_discarded() || !file.is_object()) fail(ErrorCode::format, config_path_ + ": not a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (!out.contains(key)) fail(ErrorCode::format, config_path_ + ": unknown setting \"" + key + "\"");
        if (!compatible(out[key], value)) fail(ErrorCode::format, config_path_ + ": wrong type for \"" + key + "\"");
        out[key] = value;
      }
    }
    for (const auto& apply : overrides_) apply(out);
    return out;
  }

 private:
  static std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }

  static bool compatible(const json& fallback, const json& value) {
    if (fallback.is_null()) return value.is_null() || value.is_number();
    if (fallback.is_number()) return value.is_number();
    return fallback.type() == value.type();
  }

  CLI::App* app_;
  json values_ = json::object();
  std::vector<std::function<void(json&)>> overrides_;
  std::string config_path_;
};

template <typename T>
T get(const json& config, const char* key) {
  try {
    return config.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::format, std::string("setting \"") + key + "\" has the wrong type");
  }
}

NegativeWeightPolicy weight_policy(const std::string& name) {
  if (name == "clamp_to_zero") return NegativeWeightPolicy::clamp_to_zero;
  if (name == "raw") return NegativeWeightPolicy::raw;
  fail(ErrorCode::invalid_argument, "weights must be clamp_to_zero or raw, got " + name);
}

void add_match_settings(Settings& s) {
  s.add<double>("radius", 35.0, "soft-argmax window radius in feature cells");
  s.add<double>("occlusion_threshold", 0.6, "peak similarity below which a point is occluded");
  s.add<std::string>("weights", "clamp_to_zero", "negative weight policy: clamp_to_zero or raw");
}

MatchConfig match_config(const json& c) {
  MatchConfig m;
  m.window_radius = get<double>(c, "radius");
  m.occlusion_threshold = get<double>(c, "occlusion_threshold");
  m.negative_weights = weight_policy(get<std::string>(c, "weights"));
  validate(m);
  return m;
}

json metadata(const char* command, const json& config) { return {{"command", command}, {"config", config}}; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io, "cannot create " + dir.string());
}

// synth

struct SynthArgs {
  std::string out;
};

void run_synth(const SynthArgs& args, const json& c, std::ostream& out) {
  BenchmarkConfig b;
  b.n_scenes = get<int>(c, "n_scenes");
  b.seed = get<std::uint64_t>(c, "seed");
  b.scene.num_frames = get<int>(c, "num_frames");
  b.scene.pixels = {get<int>(c, "height"), get<int>(c, "width")};
  b.scene.cell_px = get<int>(c, "cell_px");
  b.scene.num_sprites = get<int>(c, "num_sprites");
  b.scene.min_size_cells = get<int>(c, "min_size_cells");
  b.scene.max_size_cells = get<int>(c, "max_size_cells");
  b.scene.max_speed_cells = get<int>(c, "max_speed_cells");
  b.scene.max_pan_cells = get<int>(c, "max_pan_cells");
  b.features.channels = get<int>(c, "channels");
  b.features.cell_px = b.scene.cell_px;
  const std::string codes = get<std::string>(c, "codes");
  if (codes != "orthogonal" && codes != "dense") fail(ErrorCode::invalid_argument, "codes must be orthogonal or dense");
  b.features.codes = codes == "orthogonal" ? CodeKind::orthogonal : CodeKind::dense;
  b.features.min_code_distance = get<double>(c, "min_code_distance");
  b.corruption = {get<double>(c, "drift_rate"), get<double>(c, "noise_sigma"), get<int>(c, "onset_frame")};
  const int pairs = get<int>(c, "loss_pairs");
  if (pairs < 0) fail(ErrorCode::invalid_argument, "loss_pairs must be >= 0");
  b.loss_pairs = static_cast<std::size_t>(pairs);

  make_benchmark(args.out, b);
  write_text_file(fs::path(args.out) / "config.json", metadata("synth", c).dump(1) + "\n");
  out << "wrote " << b.n_scenes << " scenes\n";
}

// chain-flows

struct ChainArgs {
  std::string flows;
  std::string masks;
  std::string out;
};

void run_chain(const ChainArgs& args, json c, std::ostream& out) {
  const FlowPyramid flows = read_flows(args.flows);
  ChainConfig chain = get<bool>(c, "scale_thresholds") ? scaled_chain_config(flows.resolution) : ChainConfig{};
  if (!c.at("cycle_threshold").is_null()) chain.cycle_threshold = get<double>(c, "cycle_threshold");
  if (!c.at("reject_distance").is_null()) chain.reject_distance = get<double>(c, "reject_distance");
  chain.long_range_filter = get<bool>(c, "long_range_filter");
  c["cycle_threshold"] = chain.cycle_threshold;
  c["reject_distance"] = chain.reject_distance;

  MaskStack masks;
  if (!args.masks.empty()) masks = read_masks(args.masks);
  const std::vector<Seed> seeds = seeds_from_grid(flows.resolution, get<int>(c, "stride"), get<int>(c, "frame"),
                                                  args.masks.empty() ? nullptr : &masks);
  const TrackSet tracks = chain_tracks(flows, seeds, chain);
  write_tracks(tracks, args.out, metadata("chain-flows", c).dump());
  out << "wrote " << tracks.tracks.size() << " tracks\n";
}

// track

struct TrackArgs {
  std::vector<std::string> features;
  std::string queries;
  std::string checkpoint;
  std::string out;
};

struct QueryFile {
  int num_frames = 0;
  Resolution pixels;
  std::vector<Query> queries;
};

QueryFile read_queries(const std::string& path) {
  const std::string text = read_text_file(path);
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorCode::format, path + ": not a JSON object");
  QueryFile q;
  if (doc.contains("tracks")) {
    const TrackSet tracks = tracks_from_json(text);
    q.num_frames = tracks.num_frames;
    q.pixels = tracks.resolution;
    for (const Track& t : tracks.tracks) q.queries.push_back({t.positions[t.query_frame], t.query_frame});
    return q;
  }
  try {
    q.num_frames = doc.at("num_frames").get<int>();
    q.pixels = {doc.at("height").get<int>(), doc.at("width").get<int>()};
    for (const json& e : doc.at("queries")) {
      q.queries.push_back({{e.at("x").get<double>(), e.at("y").get<double>()}, e.at("frame").get<int>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::format, path + ": malformed query file: " + e.what());
  }
  if (q.num_frames < 1 || q.pixels.height < 1 || q.pixels.width < 1) {
    fail(ErrorCode::validation, path + ": num_frames, height and width must be >= 1");
  }
  return q;
}

void run_track(const TrackArgs& args, const json& c, std::ostream& out) {
  const MatchConfig match = match_config(c);
  const QueryFile q = read_queries(args.queries);

  std::vector<FeatureVolume> parts;
  for (const std::string& path : args.features) parts.push_back(read_feature_volume(path));
  const SegmentPlan plan = plan_segments(q.num_frames, parts.front().frames());
  if (plan.segments.size() != parts.size()) {
    fail(ErrorCode::length, std::to_string(q.num_frames) + " frames in " + std::to_string(parts.front().frames()) +
                                "-frame segments need " + std::to_string(plan.segments.size()) +
                                " feature files, got " + std::to_string(parts.size()));
  }
  Tensor features = to_tensor(assemble_segments(plan, parts));
  if (!args.checkpoint.empty()) {
    const ToyModel model = read_checkpoint(args.checkpoint);
    if (model.encoder.in_channels != features.channels()) {
      fail(ErrorCode::length, "checkpoint expects " + std::to_string(model.encoder.in_channels) +
                                  " channels, features have " + std::to_string(features.channels()));
    }
    features = toy_backbone_forward(model, features).refined();
  }
  const TrackSet tracks = track_zero_shot(features, q.pixels, q.queries, match);
  json meta = metadata("track", c);
  meta["segments"] = plan.segments.size();
  meta["refined"] = !args.checkpoint.empty();
  write_tracks(tracks, args.out, meta.dump());
  out << "wrote " << tracks.tracks.size() << " tracks\n";
}

// eval

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string scene;
  std::string csv;
  std::string out;
};

void run_eval(const EvalArgs& args, const json& c, std::ostream& out) {
  MetricOptions options;
  options.thresholds = get<std::vector<double>>(c, "thresholds");
  options.rescale_to_256 = get<bool>(c, "rescale_to_256");
  const TrackSet pred = read_tracks(args.pred);
  const TrackSet gt = read_tracks(args.gt);

  std::vector<double> fg_area;
  if (!args.scene.empty()) {
    const json scene = json::parse(read_text_file(args.scene), nullptr, false);
    if (scene.is_discarded() || !scene.is_object() || !scene.contains("fg_area")) {
      fail(ErrorCode::format, args.scene + ": no fg_area");
    }
    try {
      fg_area = scene.at("fg_area").get<std::vector<double>>();
    } catch (const json::exception&) {
      fail(ErrorCode::format, args.scene + ": fg_area must be an array of numbers");
    }
  }
  const EvalReport report = args.scene.empty()
                                ? evaluate(pred, gt, options)
                                : evaluate(pred, gt, options, std::span<const double>(fg_area));
  write_text_file(args.out, report_to_json(report, metadata("eval", c).dump()));
  const std::string csv = report_csv_header() + report_csv_row(report, get<std::string>(c, "name"));
  if (!args.csv.empty()) write_text_file(args.csv, csv);
  out << csv;
}

// train-refiner

struct TrainArgs {
  std::string bundle;
  std::string out;
};

void run_train(const TrainArgs& args, const json& c, std::ostream& out) {
  TrainConfig cfg;
  cfg.match = match_config(c);
  cfg.loss.huber_delta = get<double>(c, "huber_delta");
  cfg.loss.lambda = get<double>(c, "lambda");
  const int pairs = get<int>(c, "pairs_per_step");
  if (pairs < 1) fail(ErrorCode::invalid_argument, "pairs_per_step must be >= 1");
  cfg.loss.pairs_per_step = static_cast<std::size_t>(pairs);
  cfg.loss.fg_ratio = get<double>(c, "fg_ratio");
  const std::string reduction = get<std::string>(c, "reduction");
  if (reduction != "mean" && reduction != "sum") fail(ErrorCode::invalid_argument, "reduction must be mean or sum");
  cfg.loss.reduction = reduction == "mean" ? Reduction::mean : Reduction::sum;
  validate(cfg.loss);
  cfg.optim.lr = get<double>(c, "lr");
  cfg.optim.beta1 = get<double>(c, "beta1");
  cfg.optim.beta2 = get<double>(c, "beta2");
  cfg.optim.eps = get<double>(c, "eps");
  cfg.optim.weight_decay = get<double>(c, "weight_decay");
  validate(cfg.optim);
  cfg.propagate_into_backbone = get<bool>(c, "propagate_into_backbone");

  const std::vector<BenchmarkScene> scenes = load_benchmark(args.bundle);
  if (scenes.empty()) fail(ErrorCode::empty_input, args.bundle + ": bundle has no scenes");
  const bool use_masks = get<bool>(c, "use_masks");
  std::vector<TrainSample> dataset;
  for (const BenchmarkScene& s : scenes) {
    dataset.push_back({to_tensor(s.corrupted), to_tensor(s.ideal), s.tracks,
                       use_masks ? std::optional<MaskStack>(s.masks) : std::nullopt});
  }

  TrainSchedule schedule;
  const std::int64_t steps = get<std::int64_t>(c, "steps");
  if (steps < 1) fail(ErrorCode::invalid_argument, "steps must be >= 1");
  const std::int64_t n = static_cast<std::int64_t>(dataset.size());
  schedule.epochs = static_cast<int>((steps + n - 1) / n);
  schedule.max_steps = steps;
  schedule.seed = get<std::uint64_t>(c, "seed");
  schedule.refiner_depth = get<int>(c, "refiner_depth");
  if (schedule.refiner_depth < 1) fail(ErrorCode::invalid_argument, "refiner_depth must be >= 1");

  const TrainResult result = train_refiner(dataset, schedule, cfg);
  const fs::path dir(args.out);
  ensure_dir(dir);
  write_checkpoint(result.model, dir / "checkpoint.t4gc");
  write_text_file(dir / "loss.csv", loss_log_csv(result.log));
  json summary = metadata("train-refiner", c);
  summary["scenes"] = scenes.size();
  summary["steps"] = result.log.size();
  if (!result.log.empty()) {
    const StepLosses& first = result.log.front().losses;
    const StepLosses& last = result.log.back().losses;
    summary["first"] = {{"loss_diff", first.loss_diff}, {"loss_corr", first.loss_corr}, {"joint", first.joint}};
    summary["last"] = {{"loss_diff", last.loss_diff}, {"loss_corr", last.loss_corr}, {"joint", last.joint}};
  }
  write_text_file(dir / "train.json", summary.dump(1) + "\n");
  out << "trained " << result.log.size() << " steps\n";
}

// render

struct RenderArgs {
  std::string tracks;
  std::string svg;
  std::string out;
};

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr std::array<Rgb, 10> kPalette{{{31, 119, 180},
                                        {255, 127, 14},
                                        {44, 160, 44},
                                        {214, 39, 40},
                                        {148, 103, 189},
                                        {140, 86, 75},
                                        {227, 119, 194},
                                        {127, 127, 127},
                                        {188, 189, 34},
                                        {23, 190, 207}}};

Rgb query_color(std::size_t index) {
  std::uint64_t z = static_cast<std::uint64_t>(index) + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  return kPalette[z % kPalette.size()];
}

std::string hex(Rgb c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

class Canvas {
 public:
  Canvas(int width, int height, Rgb fill)
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill) {}

  void dot(double cx, double cy, double radius, Rgb c) {
    const int x0 = static_cast<int>(std::floor(cx - radius)), x1 = static_cast<int>(std::ceil(cx + radius));
    const int y0 = static_cast<int>(std::floor(cy - radius)), y1 = static_cast<int>(std::ceil(cy + radius));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) put(x, y, c);
      }
    }
  }

  void line(double ax, double ay, double bx, double by, Rgb c) {
    const int n = static_cast<int>(std::ceil(std::max(std::abs(bx - ax), std::abs(by - ay)))) + 1;
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      put(static_cast<int>(std::lround(ax + t * (bx - ax))), static_cast<int>(std::lround(ay + t * (by - ay))), c);
    }
  }

  std::string ppm(const std::string& comment) const {
    std::string s = "P6\n# " + comment + "\n" + std::to_string(width_) + " " + std::to_string(height_) + "\n255\n";
    s.reserve(s.size() + pixels_.size() * 3);
    for (const Rgb& p : pixels_) {
      s.push_back(static_cast<char>(p.r));
      s.push_back(static_cast<char>(p.g));
      s.push_back(static_cast<char>(p.b));
    }
    return s;
  }

 private:
  void put(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < width_ && y < height_) pixels_[static_cast<std::size_t>(y) * width_ + x] = c;
  }

  int width_;
  int height_;
  std::vector<Rgb> pixels_;
};

std::string svg_plot(const TrackSet& tracks, int width, int height, double scale) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"#202020\"/>\n";
  for (std::size_t i = 0; i < tracks.tracks.size(); ++i) {
    const Track& t = tracks.tracks[i];
    const std::string color = hex(query_color(i));
    std::string points;
    auto flush = [&] {
      if (!points.empty()) {
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"" << points << "\"/>\n";
      }
      points.clear();
    };
    for (int n = 0; n < tracks.num_frames; ++n) {
      if (!t.visible[n]) {
        flush();
        continue;
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s%.3f,%.3f", points.empty() ? "" : " ", (t.positions[n].x + 0.5) * scale,
                    (t.positions[n].y + 0.5) * scale);
      points += buf;
    }
    flush();
    const Point q = t.positions[t.query_frame];
    char buf[128];
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"%.3f\" fill=\"%s\"/>\n", (q.x + 0.5) * scale,
                  (q.y + 0.5) * scale, 0.5 * scale, color.c_str());
    s << buf;
  }
  s << "</svg>\n";
  return s.str();
}

void run_render(const RenderArgs& args, json c, std::ostream& out) {
  const TrackSet tracks = read_tracks(args.tracks);
  const int scale = get<int>(c, "scale");
  if (scale < 1) fail(ErrorCode::invalid_argument, "scale must be >= 1");
  int height = tracks.resolution.height, width = tracks.resolution.width;
  if (!c.at("height").is_null()) height = get<int>(c, "height");
  if (!c.at("width").is_null()) width = get<int>(c, "width");
  if (height < 1 || width < 1) fail(ErrorCode::invalid_argument, "canvas height and width must be >= 1");
  c["height"] = height;
  c["width"] = width;
  const double radius = get<double>(c, "point_radius");
  const bool trails = get<bool>(c, "trails");

  const fs::path dir(args.out);
  ensure_dir(dir);
  const std::string comment = metadata("render", c).dump();
  auto px = [scale](double v) { return (v + 0.5) * scale - 0.5; };
  for (int n = 0; n < tracks.num_frames; ++n) {
    Canvas canvas(width * scale, height * scale, {32, 32, 32});
    for (std::size_t i = 0; i < tracks.tracks.size(); ++i) {
      const Track& t = tracks.tracks[i];
      const Rgb color = query_color(i);
      if (trails) {
        for (int k = 1; k <= n; ++k) {
          if (!t.visible[k - 1] || !t.visible[k]) continue;
          canvas.line(px(t.positions[k - 1].x), px(t.positions[k - 1].y), px(t.positions[k].x),
                      px(t.positions[k].y), color);
        }
      }
      if (t.visible[n]) canvas.dot(px(t.positions[n].x), px(t.positions[n].y), radius * scale, color);
    }
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.ppm", n);
    write_text_file(dir / name, canvas.ppm(comment));
  }
  if (!args.svg.empty()) write_text_file(args.svg, svg_plot(tracks, width * scale, height * scale, scale));
  out << "wrote " << tracks.num_frames << " frames\n";
}

void print_error(std::ostream& err, std::string_view name, int code, const std::string& message) {
  err << json{{"error", name}, {"code", code}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feature-space point tracking and correspondence training toolkit", "t4g"};
  app.require_subcommand(1);

  auto common = [](CLI::App* sub, Settings& s, std::string& out_path, const char* out_help) {
    s.add<std::uint64_t>("seed", 0, "random seed");
    s.add_config_option();
    sub->add_option("--out", out_path, out_help)->required();
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic benchmark bundle");
  Settings synth_s(synth);
  SynthArgs synth_a;
  common(synth, synth_s, synth_a.out, "bundle directory");
  synth_s.add<int>("n_scenes", 10, "number of scenes");
  synth_s.add<int>("num_frames", 8, "frames per scene");
  synth_s.add<int>("height", 24, "image height in pixels");
  synth_s.add<int>("width", 32, "image width in pixels");
  synth_s.add<int>("cell_px", 2, "pixels per feature cell");
  synth_s.add<int>("num_sprites", 2, "sprites per scene");
  synth_s.add<int>("min_size_cells", 2, "smallest sprite size in cells");
  synth_s.add<int>("max_size_cells", 4, "largest sprite size in cells");
  synth_s.add<int>("max_speed_cells", 1, "largest sprite speed in cells per frame");
  synth_s.add<int>("max_pan_cells", 1, "largest background pan in cells per frame");
  synth_s.add<int>("channels", 512, "feature channels");
  synth_s.add<std::string>("codes", "orthogonal", "texture codes: orthogonal or dense");
  synth_s.add<double>("min_code_distance", 0.1, "minimum distance between dense codes");
  synth_s.add<double>("drift_rate", 0.15, "corruption drift per frame");
  synth_s.add<double>("noise_sigma", 0.2, "corruption noise level");
  synth_s.add<int>("onset_frame", 1, "first corrupted frame");
  synth_s.add<int>("loss_pairs", 512, "pairs for the manifest loss check");

  CLI::App* chain = app.add_subcommand("chain-flows", "build tracks by chaining a flow file");
  Settings chain_s(chain);
  ChainArgs chain_a;
  common(chain, chain_s, chain_a.out, "track file");
  chain->add_option("--flows", chain_a.flows, "flow file")->required();
  chain->add_option("--masks", chain_a.masks, "mask file marking foreground seeds");
  chain_s.add<int>("stride", 2, "seed grid stride in pixels");
  chain_s.add<int>("frame", 0, "seed frame");
  chain_s.add_flag("scale_thresholds", true, "scale thresholds with the image diagonal");
  chain_s.add<double>("cycle_threshold", nullptr, "cycle error threshold in pixels");
  chain_s.add<double>("reject_distance", nullptr, "long-range rejection distance in pixels");
  chain_s.add_flag("long_range_filter", false, "apply the long-range filter");

  CLI::App* track = app.add_subcommand("track", "zero-shot tracking on a feature volume");
  Settings track_s(track);
  TrackArgs track_a;
  common(track, track_s, track_a.out, "track file");
  track->add_option("--features", track_a.features, "feature files, one per segment in order")->required();
  track->add_option("--queries", track_a.queries, "query file or track file")->required();
  track->add_option("--checkpoint", track_a.checkpoint, "track on the refined features of this model");
  add_match_settings(track_s);

  CLI::App* eval = app.add_subcommand("eval", "score predicted tracks against ground truth");
  Settings eval_s(eval);
  EvalArgs eval_a;
  common(eval, eval_s, eval_a.out, "report JSON");
  eval->add_option("--pred", eval_a.pred, "predicted track file")->required();
  eval->add_option("--gt", eval_a.gt, "ground-truth track file")->required();
  eval->add_option("--scene", eval_a.scene, "scene.json with per-frame foreground areas");
  eval->add_option("--csv", eval_a.csv, "CSV report");
  eval_s.add<std::vector<double>>("thresholds", std::vector<double>{1, 2, 4, 8, 16}, "pixel thresholds");
  eval_s.add_flag("rescale_to_256", false, "measure distances in a 256 x 256 frame");
  eval_s.add<std::string>("name", "run", "row name in the CSV");

  CLI::App* train = app.add_subcommand("train-refiner", "train the refiner on a synthetic bundle");
  Settings train_s(train);
  TrainArgs train_a;
  common(train, train_s, train_a.out, "output directory");
  train->add_option("--bundle", train_a.bundle, "bundle directory")->required();
  train_s.add<std::int64_t>("steps", 500, "optimiser steps");
  train_s.add<int>("refiner_depth", 8, "refiner layers");
  train_s.add<double>("lr", 1e-3, "learning rate");
  train_s.add<double>("beta1", 0.9, "first moment decay");
  train_s.add<double>("beta2", 0.999, "second moment decay");
  train_s.add<double>("eps", 1e-8, "denominator epsilon");
  train_s.add<double>("weight_decay", 1e-2, "decoupled weight decay");
  train_s.add<double>("lambda", 8.0, "correspondence loss weight");
  train_s.add<double>("huber_delta", 1.0, "Huber threshold");
  train_s.add<int>("pairs_per_step", 512, "pairs per step");
  train_s.add<double>("fg_ratio", 0.5, "foreground share of pairs");
  train_s.add<std::string>("reduction", "mean", "loss reduction: mean or sum");
  train_s.add_flag("propagate_into_backbone", true, "let the correspondence loss reach the encoder");
  train_s.add_flag("use_masks", true, "balance pairs with the bundle masks");
  add_match_settings(train_s);

  CLI::App* render = app.add_subcommand("render", "draw tracks as PPM frames");
  Settings render_s(render);
  RenderArgs render_a;
  common(render, render_s, render_a.out, "frame directory");
  render->add_option("--tracks", render_a.tracks, "track file")->required();
  render->add_option("--svg", render_a.svg, "also write a trajectory plot");
  render_s.add<int>("scale", 4, "output pixels per image pixel");
  render_s.add<int>("height", nullptr, "canvas height in image pixels");
  render_s.add<int>("width", nullptr, "canvas width in image pixels");
  render_s.add<double>("point_radius", 0.75, "marker radius in image pixels");
  render_s.add_flag("trails", true, "draw the path up to each frame");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", 2, e.what());
    return 2;
  }

  try {
    if (synth->parsed()) run_synth(synth_a, synth_s.resolve(), out);
    if (chain->parsed()) run_chain(chain_a, chain_s.resolve(), out);
    if (track->parsed()) run_track(track_a, track_s.resolve(), out);
    if (eval->parsed()) run_eval(eval_a, eval_s.resolve(), out);
    if (train->parsed()) run_train(train_a, train_s.resolve(), out);
    if (render->parsed()) run_render(render_a, render_s.resolve(), out);
  } catch (const Error& e) {
    print_error(err, to_string(e.code()), static_cast<int>(e.code()), e.detail());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "internal", 1, e.what());
    return 1;
  }
  return 0;
}

}  // namespace t4g::cli
