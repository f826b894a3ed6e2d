#include "t4g/flowchain.hpp"

#include <cmath>
#include <string>

#include "t4g/error.hpp"
#include "t4g/matching.hpp"
#include "t4g/parallel.hpp"

namespace t4g {

namespace {

bool inside(Resolution res, Point p) { return std::isfinite(p.x) && std::isfinite(p.y) && res.contains(p); }

// One chained step from `from` along `step`, verified against `back`.
// Returns false when the step leaves the image or fails the cycle check.
bool chained_step(Point from, const FlowField& step, const FlowField& back, Resolution res,
                  double threshold, Point& to) {
  to = advect(from, step);
  if (!inside(res, to)) return false;
  const Point cycled = advect(to, back);
  return norm(cycled - from) <= threshold;
}

}  // namespace

Point advect(Point p, const FlowField& field) {
  const Resolution res{field.height, field.width};
  if (!inside(res, p)) {
    fail(ErrorCode::out_of_bounds,
         "advect point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside the field");
  }
  const BilinearStencil st = bilinear_stencil(res, p);
  Point d{};
  for (int k = 0; k < 4; ++k) {
    if (st.weights[k] == 0.0) continue;
    d = d + st.weights[k] * field.at(st.cells[k].row, st.cells[k].col);
  }
  return p + d;
}

ChainConfig scaled_chain_config(Resolution pixels) {
  if (pixels.height < 1 || pixels.width < 1) fail(ErrorCode::invalid_argument, "resolution must be positive");
  const double reference = std::hypot(320.0, 576.0);
  const double s = std::hypot(static_cast<double>(pixels.height), static_cast<double>(pixels.width)) / reference;
  ChainConfig config;
  config.cycle_threshold *= s;
  config.reject_distance *= s;
  return config;
}

TrackSet chain_tracks(const FlowPyramid& flows, std::span<const Seed> seeds, const ChainConfig& config) {
  validate(flows);
  if (!(config.cycle_threshold >= 0.0) || !(config.reject_distance >= 0.0)) {
    fail(ErrorCode::invalid_argument, "chain thresholds must be nonnegative");
  }
  const Resolution res = flows.resolution;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds[i].frame < 0 || seeds[i].frame >= flows.num_frames || !inside(res, seeds[i].point)) {
      fail(ErrorCode::out_of_bounds, "seed " + std::to_string(i) + " outside the video");
    }
  }

  TrackSet out;
  out.num_frames = flows.num_frames;
  out.resolution = res;
  out.tracks.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    const Seed& seed = seeds[i];
    Track& track = out.tracks[i];
    track.query_frame = seed.frame;
    track.positions.assign(flows.num_frames, seed.point);
    track.visible.assign(flows.num_frames, false);
    track.visible[seed.frame] = true;

    Point p = seed.point;
    bool alive = true;
    for (int n = seed.frame; n + 1 < flows.num_frames; ++n) {
      Point next;
      if (alive) {
        alive = chained_step(p, flows.forward[n], flows.backward[n], res, config.cycle_threshold, next);
        if (inside(res, next)) p = next;
      } else {
        next = advect(p, flows.forward[n]);
        if (inside(res, next)) p = next;
      }
      track.positions[n + 1] = p;
      track.visible[n + 1] = alive;
    }

    p = seed.point;
    alive = true;
    for (int n = seed.frame; n > 0; --n) {
      Point next;
      if (alive) {
        alive = chained_step(p, flows.backward[n - 1], flows.forward[n - 1], res, config.cycle_threshold, next);
        if (inside(res, next)) p = next;
      } else {
        next = advect(p, flows.backward[n - 1]);
        if (inside(res, next)) p = next;
      }
      track.positions[n - 1] = p;
      track.visible[n - 1] = alive;
    }
  });

  if (config.long_range_filter) apply_long_range_filter(out, flows, config);
  return out;
}

void apply_long_range_filter(TrackSet& tracks, const FlowPyramid& flows, const ChainConfig& config) {
  validate(flows);
  validate(tracks);
  if (tracks.num_frames != flows.num_frames || tracks.resolution != flows.resolution) {
    fail(ErrorCode::length, "track set and flows disagree on shape");
  }
  const Resolution res = flows.resolution;
  const auto rejected = [&](Point from, Point chained, const FlowField& step, const FlowField& back) {
    Point hop;
    const bool consistent = chained_step(from, step, back, res, config.cycle_threshold, hop);
    return consistent && norm(chained - hop) >= config.reject_distance;
  };

  parallel_for(tracks.tracks.size(), [&](std::size_t t) {
    Track& track = tracks.tracks[t];
    bool alive = true;
    for (int n = track.query_frame; n + 1 < tracks.num_frames; ++n) {
      alive = alive && track.visible[n + 1] &&
              !rejected(track.positions[n], track.positions[n + 1], flows.forward[n], flows.backward[n]);
      track.visible[n + 1] = alive;
    }
    alive = true;
    for (int n = track.query_frame; n > 0; --n) {
      alive = alive && track.visible[n - 1] &&
              !rejected(track.positions[n], track.positions[n - 1], flows.backward[n - 1], flows.forward[n - 1]);
      track.visible[n - 1] = alive;
    }
  });
}

std::vector<Seed> seeds_from_grid(Resolution pixels, int stride, int frame, const MaskStack* masks) {
  if (stride < 1) fail(ErrorCode::invalid_argument, "stride must be >= 1");
  if (pixels.height < 1 || pixels.width < 1) fail(ErrorCode::invalid_argument, "resolution must be positive");
  if (masks != nullptr && (masks->resolution != pixels || frame < 0 || frame >= masks->num_frames)) {
    fail(ErrorCode::length, "mask stack does not cover the seed frame");
  }
  std::vector<Seed> seeds;
  for (int y = 0; y < pixels.height; y += stride) {
    for (int x = 0; x < pixels.width; x += stride) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      seeds.push_back({p, frame, masks != nullptr && masks->contains(frame, p)});
    }
  }
  return seeds;
}

}  // namespace t4g
