#pragma once

// Feature-space correspondence: cosine cost volumes, windowed soft-argmax,
// per-frame target prediction, zero-shot tracking and long-video segment
// scheduling.

#include <span>
#include <vector>

#include "t4g/types.hpp"

namespace t4g {

enum class NegativeWeightPolicy {
  clamp_to_zero,  // w(p) = max(S(p), 0): the prediction is a convex combination
  raw,            // w(p) = S(p)
};

struct MatchConfig {
  double window_radius = 35.0;        // feature-grid cells
  double occlusion_threshold = 0.6;   // on the raw peak cosine similarity
  NegativeWeightPolicy negative_weights = NegativeWeightPolicy::clamp_to_zero;
};

void validate(const MatchConfig& config);

/// Linear pixel <-> feature-grid scaling, x_grid = x_px * (W_grid / W_px).
struct GridMapping {
  double scale_x = 1.0;
  double scale_y = 1.0;

  static GridMapping between(Resolution pixels, Resolution grid);
  Point to_grid(Point px) const { return {px.x * scale_x, px.y * scale_y}; }
  Point to_pixels(Point g) const { return {g.x / scale_x, g.y / scale_y}; }
};

struct CostVolume {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major, each in [-1, 1]

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
};

struct GridCell {
  int row = 0;
  int col = 0;

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

/// Bilinear weights of the (up to) four cells around a grid point. The +1
/// neighbour is clamped at the last row/column, so any point in
/// [0, W) x [0, H) is admissible.
struct BilinearStencil {
  GridCell cells[4];
  double weights[4];
};

BilinearStencil bilinear_stencil(Resolution grid, Point grid_point);

/// Bilinear feature at a grid-space point of one frame.
std::vector<double> sample_feature(const Tensor& volume, int frame, Point grid_point);

/// Cosine similarity of `query` against every cell of frame `frame`.
/// Zero-norm target cells score 0; a zero-norm query throws degenerate_query.
CostVolume cost_volume(std::span<const double> query, const Tensor& volume, int frame);

/// Global maximum, ties broken by smallest row then smallest column.
GridCell find_peak(const CostVolume& cv);

bool in_window(GridCell cell, GridCell peak, double radius);

struct SoftArgmax {
  Point position;      // grid coordinates (x = col, y = row)
  GridCell peak;
  double weight_sum = 0.0;
  bool fell_back = false;  // no positive weight in the window: position is the peak
};

SoftArgmax soft_argmax(const CostVolume& cv, const MatchConfig& config);

struct TargetPrediction {
  Point position;     // pixel coordinates
  double confidence;  // raw peak cosine similarity in the target frame
};

/// Predicts where pixel point `query` of frame `from` lands in frame `to`.
TargetPrediction predict_target(const Tensor& volume, Resolution pixels, Point query, int from,
                                int to, const MatchConfig& config);

struct Tracklet {
  std::vector<Point> positions;
  std::vector<double> confidence;
  std::vector<bool> visible;
};

Tracklet predict_tracklet(const Tensor& volume, Resolution pixels, Point query, int from,
                          const MatchConfig& config);

struct Query {
  Point point;  // pixels
  int frame = 0;
};

/// Nearest-neighbour tracking of every query through every frame. The
/// query frame itself reports the query point, visible.
TrackSet track_zero_shot(const Tensor& volume, Resolution pixels, std::span<const Query> queries,
                         const MatchConfig& config);
TrackSet track_zero_shot(const FeatureVolume& volume, Resolution pixels,
                         std::span<const Query> queries, const MatchConfig& config);

struct Segment {
  int start_frame = 0;
  int length = 0;
  int keep_begin = 0;  // absolute frame, inclusive
  int keep_end = 0;    // absolute frame, exclusive

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct SegmentPlan {
  std::vector<Segment> segments;
};

/// Splits an M-frame video into N-frame encoder windows. A short tail borrows
/// frames from the previous window and keeps only its own frames.
SegmentPlan plan_segments(int total_frames, int segment_length);

/// Concatenates the kept frames of independently encoded segments.
FeatureVolume assemble_segments(const SegmentPlan& plan, std::span<const FeatureVolume> parts);

}  // namespace t4g
