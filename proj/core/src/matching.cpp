#include "t4g/matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "t4g/error.hpp"
#include "t4g/parallel.hpp"

namespace t4g {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> cell_norms(const Tensor& volume) {
  const std::size_t cells = static_cast<std::size_t>(volume.frames()) * volume.height() * volume.width();
  std::vector<double> norms(cells);
  const auto c = static_cast<std::size_t>(volume.channels());
  for (std::size_t i = 0; i < cells; ++i) {
    std::span<const double> v(volume.values().data() + i * c, c);
    norms[i] = std::sqrt(dot(v, v));
  }
  return norms;
}

CostVolume cost_volume_with_norms(std::span<const double> query, const Tensor& volume, int frame,
                                  std::span<const double> norms) {
  const double qn = std::sqrt(dot(query, query));
  if (!(qn > 0.0)) fail(ErrorCode::degenerate_query, "query feature has zero norm");
  CostVolume cv{volume.height(), volume.width(),
                std::vector<double>(static_cast<std::size_t>(volume.height()) * volume.width())};
  const std::size_t base = static_cast<std::size_t>(frame) * volume.height() * volume.width();
  for (int r = 0; r < volume.height(); ++r) {
    for (int c = 0; c < volume.width(); ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * volume.width() + c;
      const double tn = norms[base + idx];
      if (tn > 0.0) {
        const double s = dot(query, volume.cell(frame, r, c)) / (qn * tn);
        cv.values[idx] = std::clamp(s, -1.0, 1.0);
      }
    }
  }
  return cv;
}

void check_frame(const Tensor& volume, int frame, const char* what) {
  if (frame < 0 || frame >= volume.frames()) {
    fail(ErrorCode::out_of_bounds, std::string(what) + " frame " + std::to_string(frame) +
                                       " outside [0, " + std::to_string(volume.frames()) + ")");
  }
}

void check_pixel(Resolution pixels, Point p, const char* what) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !pixels.contains(p)) {
    fail(ErrorCode::out_of_bounds, std::string(what) + " (" + std::to_string(p.x) + ", " +
                                       std::to_string(p.y) + ") outside the image");
  }
}

TargetPrediction predict_with_norms(const Tensor& volume, Resolution pixels,
                                    std::span<const double> query_feature, int to,
                                    const MatchConfig& config, std::span<const double> norms) {
  const GridMapping mapping = GridMapping::between(pixels, volume.grid());
  const CostVolume cv = cost_volume_with_norms(query_feature, volume, to, norms);
  const SoftArgmax sa = soft_argmax(cv, config);
  return {mapping.to_pixels(sa.position), cv.at(sa.peak.row, sa.peak.col)};
}

Tracklet tracklet_with_norms(const Tensor& volume, Resolution pixels, Point query, int from,
                             const MatchConfig& config, std::span<const double> norms) {
  const GridMapping mapping = GridMapping::between(pixels, volume.grid());
  const std::vector<double> feature = sample_feature(volume, from, mapping.to_grid(query));
  Tracklet out;
  for (int n = 0; n < volume.frames(); ++n) {
    const TargetPrediction p = predict_with_norms(volume, pixels, feature, n, config, norms);
    out.positions.push_back(p.position);
    out.confidence.push_back(p.confidence);
    out.visible.push_back(p.confidence >= config.occlusion_threshold);
  }
  return out;
}

}  // namespace

void validate(const MatchConfig& config) {
  if (!(config.window_radius >= 1.0)) fail(ErrorCode::invalid_argument, "window radius must be >= 1");
  if (!(config.occlusion_threshold >= -1.0 && config.occlusion_threshold <= 1.0)) {
    fail(ErrorCode::invalid_argument, "occlusion threshold must lie in [-1, 1]");
  }
}

GridMapping GridMapping::between(Resolution pixels, Resolution grid) {
  if (pixels.width < 1 || pixels.height < 1 || grid.width < 1 || grid.height < 1) {
    fail(ErrorCode::invalid_argument, "grid mapping needs positive resolutions");
  }
  return {static_cast<double>(grid.width) / pixels.width,
          static_cast<double>(grid.height) / pixels.height};
}

BilinearStencil bilinear_stencil(Resolution grid, Point g) {
  const int c0 = std::clamp(static_cast<int>(std::floor(g.x)), 0, grid.width - 1);
  const int r0 = std::clamp(static_cast<int>(std::floor(g.y)), 0, grid.height - 1);
  const int c1 = std::min(c0 + 1, grid.width - 1);
  const int r1 = std::min(r0 + 1, grid.height - 1);
  const double fx = std::clamp(g.x - c0, 0.0, 1.0);
  const double fy = std::clamp(g.y - r0, 0.0, 1.0);
  return {{{r0, c0}, {r0, c1}, {r1, c0}, {r1, c1}},
          {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy}};
}

std::vector<double> sample_feature(const Tensor& volume, int frame, Point g) {
  check_frame(volume, frame, "sample");
  if (!std::isfinite(g.x) || !std::isfinite(g.y) || !volume.grid().contains(g)) {
    fail(ErrorCode::out_of_bounds, "sample point (" + std::to_string(g.x) + ", " +
                                       std::to_string(g.y) + ") outside the feature grid");
  }
  const BilinearStencil st = bilinear_stencil(volume.grid(), g);
  std::vector<double> out(static_cast<std::size_t>(volume.channels()), 0.0);
  for (int k = 0; k < 4; ++k) {
    if (st.weights[k] == 0.0) continue;
    const auto cell = volume.cell(frame, st.cells[k].row, st.cells[k].col);
    for (std::size_t ch = 0; ch < out.size(); ++ch) out[ch] += st.weights[k] * cell[ch];
  }
  return out;
}

CostVolume cost_volume(std::span<const double> query, const Tensor& volume, int frame) {
  check_frame(volume, frame, "target");
  if (query.size() != static_cast<std::size_t>(volume.channels())) {
    fail(ErrorCode::length, "query has " + std::to_string(query.size()) + " channels, volume has " +
                                std::to_string(volume.channels()));
  }
  const double qn = std::sqrt(dot(query, query));
  if (!(qn > 0.0)) fail(ErrorCode::degenerate_query, "query feature has zero norm");
  CostVolume cv{volume.height(), volume.width(),
                std::vector<double>(static_cast<std::size_t>(volume.height()) * volume.width())};
  for (int r = 0; r < volume.height(); ++r) {
    for (int c = 0; c < volume.width(); ++c) {
      const auto t = volume.cell(frame, r, c);
      const double tn = std::sqrt(dot(t, t));
      if (tn > 0.0) {
        cv.values[static_cast<std::size_t>(r) * volume.width() + c] =
            std::clamp(dot(query, t) / (qn * tn), -1.0, 1.0);
      }
    }
  }
  return cv;
}

GridCell find_peak(const CostVolume& cv) {
  GridCell best{0, 0};
  double best_value = cv.values.empty() ? 0.0 : cv.values[0];
  for (int r = 0; r < cv.height; ++r) {
    for (int c = 0; c < cv.width; ++c) {
      if (cv.at(r, c) > best_value) {
        best_value = cv.at(r, c);
        best = {r, c};
      }
    }
  }
  return best;
}

bool in_window(GridCell cell, GridCell peak, double radius) {
  const double dr = cell.row - peak.row;
  const double dc = cell.col - peak.col;
  return dr * dr + dc * dc <= radius * radius;
}

SoftArgmax soft_argmax(const CostVolume& cv, const MatchConfig& config) {
  if (cv.height < 1 || cv.width < 1 ||
      cv.values.size() != static_cast<std::size_t>(cv.height) * cv.width) {
    fail(ErrorCode::validation, "cost volume shape mismatch");
  }
  SoftArgmax out;
  out.peak = find_peak(cv);
  const int reach = static_cast<int>(std::floor(config.window_radius));
  const int r_lo = std::max(0, out.peak.row - reach);
  const int r_hi = std::min(cv.height - 1, out.peak.row + reach);
  const int c_lo = std::max(0, out.peak.col - reach);
  const int c_hi = std::min(cv.width - 1, out.peak.col + reach);

  // Offsets from the peak keep single-cell and single-row windows exact.
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (int r = r_lo; r <= r_hi; ++r) {
    for (int c = c_lo; c <= c_hi; ++c) {
      if (!in_window({r, c}, out.peak, config.window_radius)) continue;
      double w = cv.at(r, c);
      if (config.negative_weights == NegativeWeightPolicy::clamp_to_zero) w = std::max(w, 0.0);
      sw += w;
      sx += w * (c - out.peak.col);
      sy += w * (r - out.peak.row);
    }
  }
  out.weight_sum = sw;
  if (sw > 0.0) {
    out.position = {out.peak.col + sx / sw, out.peak.row + sy / sw};
  } else {
    out.fell_back = true;
    out.position = {static_cast<double>(out.peak.col), static_cast<double>(out.peak.row)};
  }
  return out;
}

TargetPrediction predict_target(const Tensor& volume, Resolution pixels, Point query, int from,
                                int to, const MatchConfig& config) {
  validate(config);
  check_frame(volume, from, "query");
  check_frame(volume, to, "target");
  check_pixel(pixels, query, "query point");
  const GridMapping mapping = GridMapping::between(pixels, volume.grid());
  const std::vector<double> feature = sample_feature(volume, from, mapping.to_grid(query));
  const CostVolume cv = cost_volume(feature, volume, to);
  const SoftArgmax sa = soft_argmax(cv, config);
  return {mapping.to_pixels(sa.position), cv.at(sa.peak.row, sa.peak.col)};
}

Tracklet predict_tracklet(const Tensor& volume, Resolution pixels, Point query, int from,
                          const MatchConfig& config) {
  validate(config);
  check_frame(volume, from, "query");
  check_pixel(pixels, query, "query point");
  return tracklet_with_norms(volume, pixels, query, from, config, cell_norms(volume));
}

TrackSet track_zero_shot(const Tensor& volume, Resolution pixels, std::span<const Query> queries,
                         const MatchConfig& config) {
  validate(config);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    try {
      check_frame(volume, queries[i].frame, "query");
      check_pixel(pixels, queries[i].point, "query point");
    } catch (const Error& e) {
      throw Error(e.code(), "query " + std::to_string(i) + ": " + e.detail());
    }
  }

  TrackSet out;
  out.num_frames = volume.frames();
  out.resolution = pixels;
  out.tracks.resize(queries.size());
  const std::vector<double> norms = cell_norms(volume);

  parallel_for(queries.size(), [&](std::size_t i) {
    const Query& q = queries[i];
    Tracklet t;
    try {
      t = tracklet_with_norms(volume, pixels, q.point, q.frame, config, norms);
    } catch (const Error& e) {
      throw Error(e.code(), "query " + std::to_string(i) + ": " + e.detail());
    }
    Track& track = out.tracks[i];
    track.query_frame = q.frame;
    track.positions = std::move(t.positions);
    track.visible = std::move(t.visible);
    track.positions[q.frame] = q.point;
    track.visible[q.frame] = true;
  });
  return out;
}

TrackSet track_zero_shot(const FeatureVolume& volume, Resolution pixels,
                         std::span<const Query> queries, const MatchConfig& config) {
  return track_zero_shot(to_tensor(volume), pixels, queries, config);
}

SegmentPlan plan_segments(int total_frames, int segment_length) {
  if (total_frames < 1 || segment_length < 1) {
    fail(ErrorCode::invalid_argument, "plan_segments needs M >= 1 and N >= 1");
  }
  SegmentPlan plan;
  if (total_frames <= segment_length) {
    plan.segments.push_back({0, total_frames, 0, total_frames});
    return plan;
  }
  const int full = total_frames / segment_length;
  for (int s = 0; s < full; ++s) {
    const int start = s * segment_length;
    plan.segments.push_back({start, segment_length, start, start + segment_length});
  }
  const int tail = total_frames % segment_length;
  if (tail > 0) {
    plan.segments.push_back(
        {total_frames - segment_length, segment_length, total_frames - tail, total_frames});
  }
  return plan;
}

FeatureVolume assemble_segments(const SegmentPlan& plan, std::span<const FeatureVolume> parts) {
  if (plan.segments.empty()) fail(ErrorCode::empty_input, "segment plan is empty");
  if (parts.size() != plan.segments.size()) {
    fail(ErrorCode::length, "got " + std::to_string(parts.size()) + " segment volumes for " +
                                std::to_string(plan.segments.size()) + " planned segments");
  }
  const FeatureVolume& first = parts.front();
  const int total = plan.segments.back().keep_end;
  FeatureVolume out(total, first.height(), first.width(), first.channels());
  for (std::size_t s = 0; s < parts.size(); ++s) {
    const Segment& seg = plan.segments[s];
    const FeatureVolume& part = parts[s];
    if (part.frames() != seg.length || part.height() != first.height() ||
        part.width() != first.width() || part.channels() != first.channels()) {
      fail(ErrorCode::length, "segment " + std::to_string(s) + " has the wrong shape");
    }
    for (int f = seg.keep_begin; f < seg.keep_end; ++f) {
      const auto src = part.frame(f - seg.start_frame);
      std::copy(src.begin(), src.end(), out.frame(f).begin());
    }
  }
  return out;
}

}  // namespace t4g
