#pragma once

// Straightforward re-implementations used as test oracles. They follow the
// definitions directly and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <tuple>
#include <vector>

#include "t4g/types.hpp"

namespace t4g::oracle {

struct LossSettings {
  double radius = 35.0;
  bool clamp = true;
  double delta = 1.0;
  bool mean = true;
};

inline std::vector<double> bilinear(const Tensor& f, int frame, double gx, double gy) {
  const int x0 = static_cast<int>(std::floor(gx));
  const int y0 = static_cast<int>(std::floor(gy));
  const int x1 = std::min(x0 + 1, f.width() - 1);
  const int y1 = std::min(y0 + 1, f.height() - 1);
  const double ax = gx - x0, ay = gy - y0;
  std::vector<double> out(f.channels(), 0.0);
  for (int c = 0; c < f.channels(); ++c) {
    out[c] = (1 - ax) * (1 - ay) * f.at(frame, y0, x0, c) + ax * (1 - ay) * f.at(frame, y0, x1, c) +
             (1 - ax) * ay * f.at(frame, y1, x0, c) + ax * ay * f.at(frame, y1, x1, c);
  }
  return out;
}

inline double cosine(const std::vector<double>& a, const Tensor& f, int frame, int row, int col) {
  double dot = 0, na = 0, nb = 0;
  for (int c = 0; c < f.channels(); ++c) {
    const double b = f.at(frame, row, col, c);
    dot += a[c] * b;
    na += a[c] * a[c];
    nb += b * b;
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Predicted pixel position of `query` (pixels, frame qf) in frame tf.
inline Point predict(const Tensor& f, Resolution px, Point query, int qf, int tf, const LossSettings& s) {
  const double sx = static_cast<double>(f.width()) / px.width;
  const double sy = static_cast<double>(f.height()) / px.height;
  const std::vector<double> q = bilinear(f, qf, query.x * sx, query.y * sy);
  std::vector<std::vector<double>> S(f.height(), std::vector<double>(f.width()));
  int pr = 0, pc = 0;
  for (int r = 0; r < f.height(); ++r) {
    for (int c = 0; c < f.width(); ++c) {
      S[r][c] = cosine(q, f, tf, r, c);
      if (S[r][c] > S[pr][pc]) pr = r, pc = c;
    }
  }
  double wx = 0, wy = 0, ws = 0;
  for (int r = 0; r < f.height(); ++r) {
    for (int c = 0; c < f.width(); ++c) {
      if ((r - pr) * (r - pr) + (c - pc) * (c - pc) > s.radius * s.radius) continue;
      const double w = s.clamp ? std::max(S[r][c], 0.0) : S[r][c];
      wx += w * c;
      wy += w * r;
      ws += w;
    }
  }
  const Point g = ws > 0 ? Point{wx / ws, wy / ws} : Point{static_cast<double>(pc), static_cast<double>(pr)};
  return {g.x / sx, g.y / sy};
}

inline double corr_loss(const Tensor& f, Resolution px, const CorrespondenceSet& pairs, const LossSettings& s) {
  double total = 0;
  for (const Correspondence& p : pairs) {
    const Point x = predict(f, px, p.query, p.query_frame, p.target_frame, s);
    const double e = std::hypot(x.x - p.target.x, x.y - p.target.y);
    total += e <= s.delta ? 0.5 * e * e : s.delta * (e - 0.5 * s.delta);
  }
  return s.mean ? total / static_cast<double>(pairs.size()) : total;
}

/// Average Jaccard by explicit set construction.
inline double average_jaccard(const TrackSet& pred, const TrackSet& gt, const std::vector<double>& thresholds) {
  double sum = 0;
  for (double x : thresholds) {
    std::set<std::tuple<int, std::size_t, int>> events;  // (kind, track, frame): 0 tp, 1 fp, 2 fn
    for (std::size_t t = 0; t < gt.tracks.size(); ++t) {
      for (int n = 0; n < gt.num_frames; ++n) {
        const Point d = pred.tracks[t].positions[n] - gt.tracks[t].positions[n];
        const bool close = std::hypot(d.x, d.y) <= x;
        const bool g = gt.tracks[t].visible[n], p = pred.tracks[t].visible[n];
        if (g && p && close) events.insert({0, t, n});
        if (p && !(g && close)) events.insert({1, t, n});
        if (g && !(p && close)) events.insert({2, t, n});
      }
    }
    std::size_t tp = 0;
    for (const auto& e : events) tp += std::get<0>(e) == 0 ? 1 : 0;
    sum += events.empty() ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(tp) / events.size();
  }
  return sum / static_cast<double>(thresholds.size());
}

}  // namespace t4g::oracle
