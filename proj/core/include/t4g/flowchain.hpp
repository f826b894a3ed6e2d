#pragma once

// Dense trajectories from chained consecutive-frame flow, filtered by a
// one-step forward/backward cycle check.

#include <optional>
#include <span>
#include <vector>

#include "t4g/types.hpp"

namespace t4g {

/// p plus the bilinearly sampled displacement of `field` at p.
Point advect(Point p, const FlowField& field);

struct ChainConfig {
  double cycle_threshold = 1.5;  // pixels
  double reject_distance = 2.0;  // pixels, long-range filter only
  bool long_range_filter = false;
};

/// Defaults at 320 x 576 pixels, scaled linearly with the image diagonal.
ChainConfig scaled_chain_config(Resolution pixels);

struct Seed {
  Point point;
  int frame = 0;
  bool foreground = false;
};

/// Advects every seed forward and backward from its frame. A step whose
/// cycle error exceeds the threshold, or which leaves the image, ends the
/// track in that direction.
TrackSet chain_tracks(const FlowPyramid& flows, std::span<const Seed> seeds,
                      const ChainConfig& config = {});

/// Marks x^{i+1} not visible when it lies reject_distance or more from a
/// direct one-hop advection of x^i while that hop itself passes the cycle
/// check. Applied outward from the query frame; visibility stays monotone.
void apply_long_range_filter(TrackSet& tracks, const FlowPyramid& flows, const ChainConfig& config);

/// Seeds at (x, y) = (i * stride, j * stride) for every in-image multiple.
std::vector<Seed> seeds_from_grid(Resolution pixels, int stride, int frame = 0,
                                  const MaskStack* masks = nullptr);

}  // namespace t4g
