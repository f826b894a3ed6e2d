#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "t4g/error.hpp"
#include "t4g/flowchain.hpp"
#include "t4g/synthgen.hpp"

using namespace t4g;

namespace {

FlowPyramid constant_flows(int frames, Resolution res, Point d) {
  FlowPyramid f{frames, res, {}, {}};
  for (int i = 0; i + 1 < frames; ++i) {
    FlowField fw(res.height, res.width), bw(res.height, res.width);
    for (int r = 0; r < res.height; ++r) {
      for (int c = 0; c < res.width; ++c) {
        fw.set(r, c, d);
        bw.set(r, c, -1.0 * d);
      }
    }
    f.forward.push_back(fw);
    f.backward.push_back(bw);
  }
  return f;
}

bool monotone(const Track& t) {
  for (int n = t.query_frame + 1; n < static_cast<int>(t.visible.size()); ++n) {
    if (t.visible[n] && !t.visible[n - 1]) return false;
  }
  for (int n = t.query_frame - 1; n >= 0; --n) {
    if (t.visible[n] && !t.visible[n + 1]) return false;
  }
  return true;
}

}  // namespace

TEST(Advect, Examples) {
  FlowField zero(4, 4);
  EXPECT_EQ(advect({1.5, 2.0}, zero), (Point{1.5, 2.0}));
  FlowField shift(4, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) shift.set(r, c, {2.0, 0.0});
  }
  EXPECT_EQ(advect({1.0, 1.0}, shift), (Point{3.0, 1.0}));
  FlowField ramp(1, 2);
  ramp.set(0, 0, {1.0, 0.0});
  ramp.set(0, 1, {3.0, 0.0});
  EXPECT_EQ(advect({0.5, 0.0}, ramp), (Point{2.5, 0.0}));
}

TEST(Advect, OutOfBounds) {
  FlowField f(3, 3);
  EXPECT_THROW(advect({3.0, 0.0}, f), Error);
  EXPECT_THROW(advect({0.0, -0.1}, f), Error);
}

TEST(ChainTracks, ConstantFlow) {
  const FlowPyramid f = constant_flows(4, {6, 10}, {1.0, 0.5});
  const std::vector<Seed> seeds{{{2.0, 1.0}, 1, false}};
  const TrackSet t = chain_tracks(f, seeds);
  ASSERT_EQ(t.tracks.size(), 1u);
  const Track& track = t.tracks[0];
  EXPECT_EQ(track.query_frame, 1);
  EXPECT_EQ(track.positions[1], (Point{2.0, 1.0}));
  EXPECT_EQ(track.positions[0], (Point{1.0, 0.5}));
  EXPECT_EQ(track.positions[3], (Point{4.0, 2.0}));
  EXPECT_EQ(track.visible, (std::vector<bool>{true, true, true, true}));
}

TEST(ChainTracks, LeavingTheImageEndsVisibility) {
  const FlowPyramid f = constant_flows(5, {4, 4}, {1.0, 0.0});
  const std::vector<Seed> seeds{{{2.0, 0.0}, 0, false}};
  const Track track = chain_tracks(f, seeds).tracks[0];
  EXPECT_EQ(track.visible, (std::vector<bool>{true, true, false, false, false}));
  EXPECT_TRUE(monotone(track));
}

TEST(ChainTracks, CyclePerturbationEndsVisibility) {
  FlowPyramid f = constant_flows(5, {8, 8}, {1.0, 0.0});
  // frame 2 -> 1 disagrees by 2 px at the point the seed reaches
  f.backward[1].set(0, 3, {1.0, 0.0});
  const std::vector<Seed> seeds{{{1.0, 0.0}, 0, false}};
  const Track track = chain_tracks(f, seeds).tracks[0];
  EXPECT_EQ(track.visible, (std::vector<bool>{true, true, false, false, false}));
  ChainConfig loose;
  loose.cycle_threshold = 2.0;
  EXPECT_EQ(chain_tracks(f, seeds, loose).tracks[0].visible, std::vector<bool>(5, true));
}

TEST(ChainTracks, ExactSyntheticFlowsReproduceGroundTruth) {
  SceneGenConfig gen;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const SceneSpec spec = random_scene(gen, 40 + s);
    const RenderedScene scene = render_scene(spec);
    std::vector<Seed> seeds;
    for (const Track& t : scene.tracks.tracks) seeds.push_back({t.positions[0], 0, false});
    const TrackSet chained = chain_tracks(scene.flows, seeds);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      const Track& gt = scene.tracks.tracks[i];
      const Track& c = chained.tracks[i];
      EXPECT_TRUE(monotone(c));
      for (int n = 0; n < scene.tracks.num_frames && gt.visible[n] && c.visible[n]; ++n) {
        EXPECT_LE(norm(c.positions[n] - gt.positions[n]), 1e-6);
      }
    }
  }
}

TEST(ChainTracks, SeedOrderIndependent) {
  const SceneSpec spec = random_scene({}, 7);
  const RenderedScene scene = render_scene(spec);
  std::vector<Seed> seeds = seeds_from_grid(spec.pixels, 3, 2);
  const TrackSet a = chain_tracks(scene.flows, seeds);
  std::reverse(seeds.begin(), seeds.end());
  TrackSet b = chain_tracks(scene.flows, seeds);
  std::reverse(b.tracks.begin(), b.tracks.end());
  EXPECT_EQ(a, b);
}

TEST(ChainTracks, InvalidSeeds) {
  const FlowPyramid f = constant_flows(3, {4, 4}, {0.0, 0.0});
  EXPECT_THROW(chain_tracks(f, std::vector<Seed>{{{4.0, 0.0}, 0, false}}), Error);
  EXPECT_THROW(chain_tracks(f, std::vector<Seed>{{{0.0, 0.0}, 3, false}}), Error);
}

TEST(LongRangeFilter, RejectsJumpsFromTheDirectHop) {
  const FlowPyramid f = constant_flows(4, {8, 8}, {1.0, 0.0});
  TrackSet t{4, {8, 8}, {}};
  t.tracks.push_back({0, {{0, 0}, {1, 0}, {5, 0}, {6, 0}}, {true, true, true, true}});
  t.tracks.push_back({0, {{0, 1}, {1, 1}, {2, 1}, {3, 1}}, {true, true, true, true}});
  ChainConfig c;
  apply_long_range_filter(t, f, c);
  EXPECT_EQ(t.tracks[0].visible, (std::vector<bool>{true, true, false, false}));
  EXPECT_EQ(t.tracks[1].visible, std::vector<bool>(4, true));
}

TEST(LongRangeFilter, NoOpOnChainedTracks) {
  const SceneSpec spec = random_scene({}, 3);
  const RenderedScene scene = render_scene(spec);
  const std::vector<Seed> seeds = seeds_from_grid(spec.pixels, 2);
  ChainConfig on;
  on.long_range_filter = true;
  EXPECT_EQ(chain_tracks(scene.flows, seeds, on), chain_tracks(scene.flows, seeds));
}

TEST(ScaledChainConfig, ReferenceAndHalf) {
  const ChainConfig ref = scaled_chain_config({320, 576});
  EXPECT_DOUBLE_EQ(ref.cycle_threshold, 1.5);
  EXPECT_DOUBLE_EQ(ref.reject_distance, 2.0);
  const ChainConfig half = scaled_chain_config({160, 288});
  EXPECT_DOUBLE_EQ(half.cycle_threshold, 0.75);
  EXPECT_DOUBLE_EQ(half.reject_distance, 1.0);
}

TEST(SeedsFromGrid, Examples) {
  EXPECT_EQ(seeds_from_grid({4, 4}, 2).size(), 4u);
  EXPECT_EQ(seeds_from_grid({4, 4}, 5).size(), 1u);
  EXPECT_EQ(seeds_from_grid({4, 4}, 1).size(), 16u);
  EXPECT_THROW(seeds_from_grid({4, 4}, 0), Error);
  const std::vector<Seed> s = seeds_from_grid({4, 6}, 2, 1);
  EXPECT_EQ(s[1].point, (Point{2.0, 0.0}));
  EXPECT_EQ(s[3].point, (Point{0.0, 2.0}));
  for (const Seed& seed : s) EXPECT_EQ(seed.frame, 1);
}

TEST(SeedsFromGrid, HalfMaskFlagsHalf) {
  MaskStack m(1, {4, 4});
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 2; ++c) m.set(0, r, c, true);
  }
  const std::vector<Seed> s = seeds_from_grid({4, 4}, 1, 0, &m);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [](const Seed& x) { return x.foreground; }), 8);
  MaskStack wrong(1, {4, 5});
  EXPECT_THROW(seeds_from_grid({4, 4}, 1, 0, &wrong), Error);
}
