// Acceptance suite: one PASS/FAIL line per check, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "oracles.hpp"
#include "t4g/corrloss.hpp"
#include "t4g/error.hpp"
#include "t4g/flowchain.hpp"
#include "t4g/io.hpp"
#include "t4g/matching.hpp"
#include "t4g/metrics.hpp"
#include "t4g/micronet.hpp"
#include "t4g/synthgen.hpp"

namespace fs = std::filesystem;
using namespace t4g;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* pattern, double a, double b = 0, double c = 0, double d = 0, double e = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d, e);
  return buf;
}

Tensor random_tensor(std::mt19937_64& rng, int n, int h, int w, int c) {
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t(n, h, w, c);
  for (double& v : t.values()) v = g(rng);
  return t;
}

// 1: analytic gradient against central differences of an independent loss.
Outcome gradient_correctness() {
  Outcome out;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(2, 6), chans(1, 4), npairs(1, 8), frames(2, 3), scale(1, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int accepted = 0, skipped = 0, flat = 0;
  double worst = 0.0;
  // At 1e-3 the truncation error of the central difference alone reaches 1e-4.
  const double h = 1e-5;
  while (accepted < 200 && accepted + skipped < 20000) {
    const int n = frames(rng), gh = dim(rng), gw = dim(rng), c = chans(rng), s = scale(rng);
    const Resolution px{gh * s, gw * s};
    Tensor f(n, gh, gw, c);
    for (double& v : f.values()) v = 2.0 * unit(rng) - 1.0;
    CorrespondenceSet pairs(npairs(rng));
    for (Correspondence& p : pairs) {
      p.query_frame = static_cast<int>(rng() % n);
      p.target_frame = static_cast<int>((p.query_frame + 1 + rng() % (n - 1)) % n);
      p.query = {unit(rng) * px.width * 0.999, unit(rng) * px.height * 0.999};
      p.target = {unit(rng) * px.width * 0.999, unit(rng) * px.height * 0.999};
    }
    MatchConfig match;
    match.window_radius = 1.0 + 4.0 * unit(rng);
    if (kink_margin(f, px, pairs, match) < 1e-2) {
      ++skipped;
      continue;
    }
    oracle::LossSettings os;
    os.radius = match.window_radius;
    const LossResult analytic = corr_loss(f, px, pairs, match, {});
    const double direct = oracle::corr_loss(f, px, pairs, os);
    out.require(std::abs(direct - analytic.value) <= 1e-12 * std::max(1.0, std::abs(direct)),
                "loss value differs from the oracle");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double keep = f.values()[i];
      f.values()[i] = keep + h;
      const double up = oracle::corr_loss(f, px, pairs, os);
      f.values()[i] = keep - h;
      const double down = oracle::corr_loss(f, px, pairs, os);
      f.values()[i] = keep;
      const double fd = (up - down) / (2 * h);
      num = std::max(num, std::abs(fd - analytic.grad.values()[i]));
      den = std::max({den, std::abs(fd), std::abs(analytic.grad.values()[i])});
    }
    // An identically zero gradient leaves only round-off on the fd side.
    const bool zero = std::all_of(analytic.grad.values().begin(), analytic.grad.values().end(),
                                  [](double g) { return g == 0.0; });
    if (zero && num <= 1e-9) {
      ++flat;
    } else {
      worst = std::max(worst, num / den);
    }
    ++accepted;
  }
  const double secs = seconds_since(t0);
  out.require(accepted >= 200, "too few instances away from kinks");
  out.require(worst <= 1e-4, "relative error above 1e-4");
  out.require(secs <= 60.0, "slower than 60 s");
  out.detail = fmt("%.0f instances (%.0f with zero gradient), %.0f skipped near kinks, max relative error %.2e, %.1f s",
                   accepted, flat, skipped, worst, secs) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

// 2: soft-argmax contracts.
Outcome soft_argmax_contracts() {
  Outcome out;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 12);
  std::uniform_real_distribution<double> sim(-1.0, 1.0), radius(0.5, 8.0), unit(0.0, 1.0);

  for (int trial = 0; trial < 1000; ++trial) {
    CostVolume cv{dim(rng), dim(rng), {}};
    cv.values.assign(static_cast<std::size_t>(cv.height) * cv.width, 0.0);
    for (double& v : cv.values) v = -unit(rng);
    const int r = static_cast<int>(rng() % cv.height), c = static_cast<int>(rng() % cv.width);
    cv.values[static_cast<std::size_t>(r) * cv.width + c] = 0.5 + 0.5 * unit(rng);
    const SoftArgmax sa = soft_argmax(cv, {radius(rng), 0.6, NegativeWeightPolicy::clamp_to_zero});
    if (!(sa.position == Point{static_cast<double>(c), static_cast<double>(r)})) {
      out.require(false, "delta peak not returned exactly");
      break;
    }
  }

  double centroid_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    CostVolume cv{dim(rng), dim(rng), {}};
    const double level = 0.05 + 0.9 * unit(rng);
    cv.values.assign(static_cast<std::size_t>(cv.height) * cv.width, level);
    const double R = radius(rng);
    const SoftArgmax sa = soft_argmax(cv, {R, 0.6, NegativeWeightPolicy::clamp_to_zero});
    double sx = 0, sy = 0, k = 0;
    for (int y = 0; y < cv.height; ++y) {
      for (int x = 0; x < cv.width; ++x) {
        if (x * x + y * y <= R * R) sx += x, sy += y, k += 1;
      }
    }
    centroid_err = std::max({centroid_err, std::abs(sa.position.x - sx / k), std::abs(sa.position.y - sy / k)});
  }
  out.require(centroid_err <= 1e-9, "uniform window centroid off");

  CostVolume hand{3, 3, std::vector<double>(9, 0.0)};
  hand.values[1 * 3 + 1] = 1.0;
  hand.values[1 * 3 + 2] = 0.5;
  const SoftArgmax h = soft_argmax(hand, {1.0, 0.6, NegativeWeightPolicy::clamp_to_zero});
  out.require(std::abs(h.position.x - 4.0 / 3.0) <= 1e-9 && std::abs(h.position.y - 1.0) <= 1e-9,
              "3x3 hand case wrong");

  int outside = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    CostVolume cv{dim(rng), dim(rng), {}};
    cv.values.resize(static_cast<std::size_t>(cv.height) * cv.width);
    for (double& v : cv.values) v = sim(rng);
    const double R = radius(rng);
    const SoftArgmax sa = soft_argmax(cv, {R, 0.6, NegativeWeightPolicy::clamp_to_zero});
    int x0 = cv.width, x1 = -1, y0 = cv.height, y1 = -1;
    for (int y = 0; y < cv.height; ++y) {
      for (int x = 0; x < cv.width; ++x) {
        const double dx = x - sa.peak.col, dy = y - sa.peak.row;
        if (dx * dx + dy * dy <= R * R) x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
    }
    if (sa.position.x < x0 || sa.position.x > x1 || sa.position.y < y0 || sa.position.y > y1) ++outside;
  }
  out.require(outside == 0, "prediction left the window bounding box");
  out.detail = fmt("hand case (%.12f, %.12f), centroid error %.1e, %.0f of 10000 outside the box", h.position.x,
                   h.position.y, centroid_err, outside) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

// 3: identity at init, and the routing contract.
Tensor detached_reconstruction(const ToyModel& m, const Tensor& x, const Tensor& refined_const) {
  const Tensor h = conv_forward(m.encoder, x);
  Tensor routed = conv_forward(m.zero.layer, refined_const);
  for (std::size_t i = 0; i < routed.size(); ++i) routed.values()[i] += h.values()[i];
  return conv_forward(m.head, routed);
}

double mse(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.values()[i] - b.values()[i]) * (a.values()[i] - b.values()[i]);
  return s / static_cast<double>(a.size());
}

Outcome identity_and_routing() {
  Outcome out;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // bitwise identity on the tap
  for (int trial = 0; trial < 20; ++trial) {
    const int c = 1 + static_cast<int>(rng() % 6);
    Tensor x = random_tensor(rng, 2, 3 + static_cast<int>(rng() % 5), 3 + static_cast<int>(rng() % 5), c);
    const ToyModel m = ToyModel::identity(c);
    const ToyForward fw = toy_backbone_forward(m, x);
    out.require(refiner_forward(m.refiner, fw.tap) == fw.tap, "refiner is not an identity at init");
    out.require(fw.refined() == fw.tap, "refined features differ from the tap at init");
    out.require(route(fw.tap, m.refiner, m.zero) == fw.tap && fw.routed == fw.tap, "route is not an identity at init");
  }

  // a perturbed model so that every branch carries signal
  const int C = 2, N = 2, H = 4, W = 5;
  ToyModel m = ToyModel::identity(C, 2);
  for (const ParamRef& p : parameters(m)) {
    for (double& v : *p.values) v += 0.2 * (unit(rng) - 0.5);
  }
  Tensor x = random_tensor(rng, N, H, W, C);
  const Tensor clean = random_tensor(rng, N, H, W, C);
  for (double& v : x.values()) v = std::abs(v);
  const Resolution px{H, W};
  CorrespondenceSet pairs;
  for (int k = 0; k < 4; ++k) {
    pairs.push_back({{unit(rng) * (W - 1), unit(rng) * (H - 1)}, 0, {unit(rng) * (W - 1), unit(rng) * (H - 1)}, 1});
  }
  TrainConfig with, without;
  with.loss.lambda = 1.0;
  without.loss.lambda = 0.0;
  const TrainBatch batch{x, clean, px, pairs};
  const ModelGrads g1 = compute_gradients(m, batch, with);
  const ModelGrads g0 = compute_gradients(m, batch, without);
  const std::vector<ParamRef> params = parameters(m);
  const std::size_t depth = m.refiner.layers.size();
  std::vector<std::size_t> refiner_groups, zero_groups;
  for (std::size_t k = 0; k < depth; ++k) refiner_groups.insert(refiner_groups.end(), {2 + 2 * k, 3 + 2 * k});
  zero_groups = {2 + 2 * depth, 3 + 2 * depth};

  for (std::size_t i : refiner_groups) out.require(!g0.groups[i].has_value(), "L_diff reached the refiner");
  for (std::size_t i : zero_groups) {
    out.require(g1.groups[i].has_value() && g0.groups[i].has_value() && *g1.groups[i] == *g0.groups[i],
                "L_corr reached the zero conv");
  }

  // finite differences under the detached forward
  const double step = 1e-5;
  const Tensor refined = toy_backbone_forward(m, x).refined();
  double fd_corr_zero = 0.0, fd_diff_refiner = 0.0, fd_diff_refiner_live = 0.0;
  auto l_corr = [&](const ToyModel& mm) {
    return corr_loss_value(toy_backbone_forward(mm, x).refined(), px, pairs, {}, {});
  };
  auto l_diff_detached = [&](const ToyModel& mm) {
    return mse(detached_reconstruction(mm, x, refined), clean);
  };
  auto l_diff_live = [&](const ToyModel& mm) { return mse(toy_backbone_forward(mm, x).reconstruction, clean); };
  auto central = [&](std::size_t group, std::size_t j, const std::function<double(const ToyModel&)>& f) {
    ToyModel a = m, b = m;
    (*parameters(a)[group].values)[j] += step;
    (*parameters(b)[group].values)[j] -= step;
    return (f(a) - f(b)) / (2 * step);
  };
  for (std::size_t gi : zero_groups) {
    for (std::size_t j = 0; j < params[gi].values->size(); ++j) {
      fd_corr_zero = std::max(fd_corr_zero, std::abs(central(gi, j, l_corr)));
    }
  }
  for (std::size_t gi : refiner_groups) {
    for (std::size_t j = 0; j < params[gi].values->size(); ++j) {
      fd_diff_refiner = std::max(fd_diff_refiner, std::abs(central(gi, j, l_diff_detached)));
      fd_diff_refiner_live = std::max(fd_diff_refiner_live, std::abs(central(gi, j, l_diff_live)));
    }
  }
  out.require(fd_corr_zero == 0.0, "finite-difference dL_corr/dzeta is nonzero");
  out.require(fd_diff_refiner == 0.0, "finite-difference dL_diff/dR is nonzero under the detach");
  out.require(fd_diff_refiner_live > 0.0, "the undetached forward should depend on the refiner");
  out.detail = fmt("bitwise identities hold; FD dL_corr/dzeta %.1e, FD dL_diff/dR %.1e (undetached %.1e)",
                   fd_corr_zero, fd_diff_refiner, fd_diff_refiner_live) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

// 4: flow chaining on exact flows.
Outcome flow_chaining() {
  Outcome out;
  double worst = 0.0;
  std::size_t steps = 0, passed = 0, covisible = 0;
  SceneGenConfig cfg;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const SceneSpec spec = random_scene(cfg, 500 + s);
    const RenderedScene scene = render_scene(spec);
    std::vector<Seed> seeds;
    for (const Track& t : scene.tracks.tracks) seeds.push_back({t.positions[0], 0, false});
    const TrackSet chained = chain_tracks(scene.flows, seeds, ChainConfig{});
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const Track& g = scene.tracks.tracks[i];
      const Track& c = chained.tracks[i];
      for (int n = 0; n < spec.num_frames; ++n) {
        if (g.visible[n] && c.visible[n]) {
          ++covisible;
          worst = std::max(worst, norm(g.positions[n] - c.positions[n]));
        }
      }
      for (int n = 0; n + 1 < spec.num_frames && g.visible[n + 1]; ++n) {
        ++steps;
        passed += c.visible[n + 1] ? 1 : 0;
      }
    }
  }
  out.require(worst <= 1e-6, "chained positions drift from ground truth");
  out.require(passed == steps, "a ground-truth visible step failed the cycle check");

  // single injected backward perturbation
  const SceneSpec spec = random_scene(cfg, 500);
  RenderedScene scene = render_scene(spec);
  std::size_t pick = scene.tracks.tracks.size();
  for (std::size_t i = 0; i < scene.tracks.tracks.size() && pick == scene.tracks.tracks.size(); ++i) {
    const auto& v = scene.tracks.tracks[i].visible;
    if (std::all_of(v.begin(), v.end(), [](bool b) { return b; })) pick = i;
  }
  bool flipped = pick < scene.tracks.tracks.size();
  const int k = 3;
  if (flipped) {
    const Point at = scene.tracks.tracks[pick].positions[k + 1];
    FlowField& back = scene.flows.backward[k];
    const int row = static_cast<int>(at.y), col = static_cast<int>(at.x);
    back.set(row, col, back.at(row, col) + Point{2.0, 0.0});
    const Seed seed{scene.tracks.tracks[pick].positions[0], 0, false};
    const TrackSet t = chain_tracks(scene.flows, std::span<const Seed>(&seed, 1), ChainConfig{});
    for (int n = 0; n < spec.num_frames; ++n) flipped = flipped && t.tracks[0].visible[n] == (n <= k);
  }
  out.require(flipped, "injected perturbation did not end visibility at that frame");
  out.detail = fmt("%.0f co-visible samples, max error %.1e px, %.0f/%.0f visible steps pass", covisible, worst,
                   passed, steps) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

// 5: metric oracle.
TrackSet random_tracks(std::mt19937_64& rng, int tracks, int frames) {
  std::uniform_real_distribution<double> pos(0.0, 31.0), jitter(-12.0, 12.0);
  TrackSet t{frames, {32, 32}, {}};
  for (int i = 0; i < tracks; ++i) {
    Track tr{0, {}, {}};
    for (int n = 0; n < frames; ++n) {
      tr.positions.push_back({pos(rng), pos(rng)});
      tr.visible.push_back(rng() % 3 != 0);
    }
    tr.visible[0] = true;
    t.tracks.push_back(tr);
  }
  return t;
}

Outcome metric_oracle() {
  Outcome out;
  std::mt19937_64 rng(5);
  const TrackSet gt = random_tracks(rng, 6, 7);
  const std::vector<double> area(7, 50.0);
  const EvalReport perfect = evaluate(gt, gt, {}, std::span<const double>(area));
  bool ones = perfect.oa == 1.0 && perfect.aj == 1.0 && perfect.delta_seg == 1.0 && perfect.delta_3px == 1.0 &&
              perfect.delta_avg == 1.0;
  for (double r : perfect.delta_per_threshold) ones = ones && r == 1.0;
  out.require(ones, "perfect predictions do not score 1.0 everywhere");

  TrackSet one{1, {64, 64}, {Track{0, {{10.0, 10.0}}, {true}}}};
  TrackSet off = one;
  off.tracks[0].positions[0] = {13.0, 10.0};
  const double d3 = position_accuracy(off, one).mean;
  out.require(std::abs(d3 - 0.6) <= 1e-15, "3-px single sample does not give 0.6");

  double worst = 0.0;
  int instances = 0;
  std::uniform_real_distribution<double> jitter(-12.0, 12.0);
  for (int trial = 0; trial < 3000; ++trial) {
    const int tracks = 1 + static_cast<int>(rng() % 10);
    const int frames = 1 + static_cast<int>(rng() % (100 / tracks));
    const TrackSet g = random_tracks(rng, tracks, frames);
    TrackSet p = g;
    for (Track& t : p.tracks) {
      for (int n = 0; n < frames; ++n) {
        t.positions[n] = t.positions[n] + Point{jitter(rng), jitter(rng)};
        if (rng() % 4 == 0) t.visible[n] = !t.visible[n];
      }
    }
    const std::vector<double> th{1, 2, 4, 8, 16};
    const double expected = oracle::average_jaccard(p, g, th);
    double got;
    try {
      got = average_jaccard(p, g, {});
    } catch (const Error&) {
      got = std::numeric_limits<double>::quiet_NaN();
    }
    if (std::isnan(expected) != std::isnan(got)) {
      worst = std::numeric_limits<double>::infinity();
    } else if (!std::isnan(expected)) {
      worst = std::max(worst, std::abs(expected - got));
    }
    ++instances;
  }
  out.require(worst <= 1e-12, "average Jaccard disagrees with the enumerator");
  out.detail = fmt("perfect report all ones, 3-px case %.3f, AJ max deviation %.1e over %.0f instances", d3, worst,
                   instances) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

// 6: zero-shot tracking on ideal features.
Outcome zero_shot_ideal() {
  Outcome out;
  const auto t0 = Clock::now();
  const BenchmarkConfig bench;
  MetricOptions options;
  options.thresholds = {2.0, 4.0, 8.0, 16.0};
  double min_delta = 1.0, min_oa = 1.0;
  std::size_t occluded = 0;
  for (int s = 0; s < 10; ++s) {
    const SceneSpec spec = random_scene(bench.scene, 1000 + s);
    const RenderedScene scene = render_scene(spec);
    const FeatureVolume f = ideal_features(spec, bench.features);
    std::vector<Query> queries;
    for (const Track& t : scene.tracks.tracks) queries.push_back({t.positions[0], 0});
    const TrackSet pred = track_zero_shot(f, spec.pixels, queries, {});
    const EvalReport r = evaluate(pred, scene.tracks, options);
    min_delta = std::min(min_delta, r.delta_avg);
    min_oa = std::min(min_oa, r.oa);
    for (const auto& flags : scene.occluded) occluded += static_cast<std::size_t>(std::count(flags.begin(), flags.end(), true));
  }
  const double secs = seconds_since(t0);
  out.require(min_delta >= 0.99, "delta below 0.99");
  out.require(min_oa >= 0.95, "OA below 0.95");
  out.require(occluded > 0, "benchmark has no occlusions");
  out.require(secs <= 120.0, "slower than 2 min");
  out.detail = fmt("min delta_avg %.4f, min OA %.4f over 10 scenes, %.0f occluded samples, %.1f s", min_delta, min_oa,
                   occluded, secs) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

// 7: training improves tracking on held-out corrupted scenes.
Outcome training_improves() {
  Outcome out;
  const auto t0 = Clock::now();
  SceneGenConfig g;
  g.pixels = {12, 20};
  g.cell_px = 1;
  g.min_size_cells = 2;
  g.max_size_cells = 3;
  const FeatureOptions fo{16, 1, CodeKind::dense, 0.1};
  const CorruptionSpec cs{0.15, 0.2, 1};

  struct Scene {
    Tensor noisy, clean;
    TrackSet tracks;
  };
  auto make = [&](std::uint64_t seed) {
    const SceneSpec spec = random_scene(g, seed);
    const FeatureVolume f = ideal_features(spec, fo);
    return Scene{to_tensor(corrupt_features(f, cs, seed + 50)), to_tensor(f), render_scene(spec).tracks};
  };
  std::vector<TrainSample> train;
  for (std::uint64_t s = 0; s < 4; ++s) {
    Scene sc = make(s);
    train.push_back({sc.noisy, sc.clean, sc.tracks, std::nullopt});
  }
  std::vector<Scene> held;
  for (std::uint64_t s = 100; s < 106; ++s) held.push_back(make(s));

  // Fixed evaluation pairs, drawn apart from the training pairs.
  auto pairs_for = [](const TrackSet& t, std::uint64_t seed) { return sample_pairs(t, nullptr, 512, 0.5, seed).pairs; };
  std::vector<CorrespondenceSet> train_pairs, held_pairs;
  for (std::size_t i = 0; i < train.size(); ++i) train_pairs.push_back(pairs_for(train[i].tracks, 800 + i));
  for (std::size_t i = 0; i < held.size(); ++i) held_pairs.push_back(pairs_for(held[i].tracks, 900 + i));
  auto mean_loss = [](const ToyModel& m, const auto& scenes, const std::vector<CorrespondenceSet>& pairs) {
    double loss = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const Tensor refined = toy_backbone_forward(m, scenes[i].noisy).refined();
      loss += corr_loss_value(refined, scenes[i].tracks.resolution, pairs[i], {}, {});
    }
    return loss / static_cast<double>(pairs.size());
  };
  auto held_delta = [&](const ToyModel& m) {
    double delta = 0.0;
    for (const Scene& sc : held) {
      const Tensor refined = toy_backbone_forward(m, sc.noisy).refined();
      std::vector<Query> q;
      for (const Track& t : sc.tracks.tracks) q.push_back({t.positions[0], 0});
      delta += position_accuracy(track_zero_shot(refined, sc.tracks.resolution, q, {}), sc.tracks).mean;
    }
    return delta / static_cast<double>(held.size());
  };

  const ToyModel init = ToyModel::identity(16);
  const double d0 = held_delta(init), l0 = mean_loss(init, train, train_pairs), h0 = mean_loss(init, held, held_pairs);
  TrainSchedule schedule;
  schedule.epochs = 125;
  schedule.max_steps = 500;
  schedule.seed = 0;
  const TrainResult r = train_refiner(train, schedule, TrainConfig{});
  const double d1 = held_delta(r.model), l1 = mean_loss(r.model, train, train_pairs),
               h1 = mean_loss(r.model, held, held_pairs);
  const double secs = seconds_since(t0);
  const double reduction = 1.0 - l1 / l0;
  out.require(r.log.size() <= 500, "more than 500 steps");
  out.require(reduction >= 0.5, "corr_loss reduced by less than 50%");
  out.require(d1 - d0 >= 0.10, "delta gain below 10 points");
  out.require(secs <= 600.0, "slower than 10 min");
  out.detail = fmt("%.0f steps, training corr_loss %.3f -> %.3f (-%.1f%%), ", r.log.size(), l0, l1, 100 * reduction) +
               fmt("held-out corr_loss -%.1f%%, ", 100 * (1.0 - h1 / h0)) +
               fmt("held-out delta_avg %.4f -> %.4f (+%.1f points), %.0f s", d0, d1, 100 * (d1 - d0), secs) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

// 8: segment planning.
bool exact_partition(int M, int N, const SegmentPlan& plan) {
  int next = 0;
  for (const Segment& s : plan.segments) {
    if (s.keep_begin != next || s.keep_end <= s.keep_begin) return false;
    if (s.start_frame < 0 || s.start_frame + s.length > M) return false;
    if (s.length != std::min(M, N)) return false;
    if (s.keep_begin < s.start_frame || s.keep_end > s.start_frame + s.length) return false;
    next = s.keep_end;
  }
  return next == M;
}

Outcome segment_planning() {
  Outcome out;
  const SegmentPlan p = plan_segments(57, 24);
  bool expected = p.segments.size() == 3;
  const int keep[3][2] = {{0, 24}, {24, 48}, {48, 57}};
  for (std::size_t i = 0; expected && i < 3; ++i) {
    expected = p.segments[i].keep_begin == keep[i][0] && p.segments[i].keep_end == keep[i][1];
  }
  out.require(expected, "M=57, N=24 keep ranges wrong");
  std::mt19937_64 rng(3);
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int M = 1 + static_cast<int>(rng() % 300), N = 1 + static_cast<int>(rng() % 64);
    if (!exact_partition(M, N, plan_segments(M, N))) ++bad;
  }
  out.require(bad == 0, "some random plans are not exact partitions");
  out.detail = fmt("57/24 -> [0,24) [24,48) [48,57); %.0f of 1000 random plans broken", bad) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

// 9: determinism of every CLI command.
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back({fs::relative(e.path(), dir).string(), slurp(e.path())});
  }
  std::sort(files.begin(), files.end());
  return files;
}

int cli(const fs::path& cwd, std::vector<std::string> args, std::string& stdout_text) {
  for (std::string& a : args) {
    if (a.rfind("@/", 0) == 0) a = (cwd / a.substr(2)).string();
  }
  std::ostringstream o, e;
  const int code = t4g::cli::run_cli(args, o, e);
  stdout_text = o.str() + e.str();
  return code;
}

Outcome cli_determinism() {
  Outcome out;
  const fs::path root = fs::temp_directory_path() / ("t4g_acceptance_" + std::to_string(::getpid()));
  const std::vector<std::vector<std::string>> commands = {
      {"synth", "--out", "@/bundle", "--n-scenes", "2", "--channels", "16", "--codes", "dense", "--cell-px", "1",
       "--height", "12", "--width", "20", "--min-size-cells", "2", "--max-size-cells", "3", "--seed", "4"},
      {"chain-flows", "--flows", "@/bundle/scene_0/flows.t4gw", "--masks", "@/bundle/scene_0/masks.t4gf", "--out",
       "@/chained.json", "--long-range-filter"},
      {"track", "--features", "@/bundle/scene_0/corrupted.t4gf", "--queries", "@/bundle/scene_0/tracks.json",
       "--out", "@/pred.json"},
      {"eval", "--pred", "@/pred.json", "--gt", "@/bundle/scene_0/tracks.json", "--scene",
       "@/bundle/scene_0/scene.json", "--out", "@/report.json", "--csv", "@/report.csv"},
      {"train-refiner", "--bundle", "@/bundle", "--out", "@/train", "--steps", "12", "--pairs-per-step", "64",
       "--seed", "9"},
      {"track", "--features", "@/bundle/scene_1/corrupted.t4gf", "--queries", "@/bundle/scene_1/tracks.json",
       "--checkpoint", "@/train/checkpoint.t4gc", "--out", "@/refined.json"},
      {"render", "--tracks", "@/pred.json", "--out", "@/frames", "--svg", "@/plot.svg"},
  };
  std::vector<std::vector<std::pair<std::string, std::string>>> runs;
  std::vector<std::string> logs[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path cwd = root / ("run" + std::to_string(run));
    fs::create_directories(cwd);
    for (const auto& c : commands) {
      std::string text;
      if (cli(cwd, c, text) != 0) out.require(false, c[0] + " failed: " + text);
      logs[run].push_back(text);
    }
    runs.push_back(snapshot(cwd));
  }
  std::size_t files = runs[0].size();
  out.require(runs[0] == runs[1], "outputs differ between runs");
  out.require(logs[0] == logs[1], "console output differs between runs");
  std::error_code ec;
  fs::remove_all(root, ec);
  out.detail = fmt("%.0f commands, %.0f output files byte-identical across two runs", commands.size(), files) +
               (out.detail.empty() ? "" : " [" + out.detail + "]");
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks = {
      {"gradient correctness", gradient_correctness},
      {"soft-argmax contracts", soft_argmax_contracts},
      {"identity at init and routing", identity_and_routing},
      {"flow chaining oracle", flow_chaining},
      {"metric oracle", metric_oracle},
      {"zero-shot tracking on ideal features", zero_shot_ideal},
      {"training improves tracking", training_improves},
      {"segment planning", segment_planning},
      {"CLI determinism", cli_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
