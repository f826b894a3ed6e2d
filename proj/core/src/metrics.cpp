#include "t4g/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "json.hpp"
#include "t4g/error.hpp"

namespace t4g {

namespace {

using json = nlohmann::json;

void check_aligned(const TrackSet& pred, const TrackSet& gt) {
  validate(gt);
  if (pred.tracks.size() != gt.tracks.size()) {
    fail(ErrorCode::track_count_mismatch, "prediction has " + std::to_string(pred.tracks.size()) +
                                              " tracks, ground truth has " + std::to_string(gt.tracks.size()));
  }
  if (pred.num_frames != gt.num_frames) {
    fail(ErrorCode::length, "prediction has " + std::to_string(pred.num_frames) + " frames, ground truth has " +
                                std::to_string(gt.num_frames));
  }
  for (std::size_t t = 0; t < pred.tracks.size(); ++t) {
    const Track& p = pred.tracks[t];
    if (p.positions.size() != static_cast<std::size_t>(pred.num_frames) || p.visible.size() != p.positions.size()) {
      fail(ErrorCode::length, "predicted track " + std::to_string(t) + " has the wrong length");
    }
  }
}

double distance(const TrackSet& gt, Point a, Point b, bool rescale) {
  Point d = a - b;
  if (rescale) {
    d.x *= 256.0 / gt.resolution.width;
    d.y *= 256.0 / gt.resolution.height;
  }
  return norm(d);
}

void check_thresholds(const MetricOptions& options) {
  if (options.thresholds.empty()) fail(ErrorCode::invalid_argument, "no thresholds");
  for (double x : options.thresholds) {
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::invalid_argument, "thresholds must be finite and >= 0");
  }
}

double rate(std::size_t hits, std::size_t total, const char* what) {
  if (total == 0) fail(ErrorCode::undefined_rate, std::string(what) + " has no samples");
  return static_cast<double>(hits) / static_cast<double>(total);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

PositionAccuracy position_accuracy(const TrackSet& pred, const TrackSet& gt, const MetricOptions& options) {
  check_aligned(pred, gt);
  check_thresholds(options);
  std::vector<std::size_t> hits(options.thresholds.size(), 0);
  std::size_t total = 0;
  for (std::size_t t = 0; t < gt.tracks.size(); ++t) {
    for (int n = 0; n < gt.num_frames; ++n) {
      if (!gt.tracks[t].visible[n]) continue;
      ++total;
      const double e = distance(gt, pred.tracks[t].positions[n], gt.tracks[t].positions[n], options.rescale_to_256);
      for (std::size_t k = 0; k < hits.size(); ++k) hits[k] += e <= options.thresholds[k] ? 1 : 0;
    }
  }
  PositionAccuracy out;
  out.samples = total;
  double sum = 0.0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    out.rates.push_back(rate(hits[k], total, "position accuracy"));
    sum += out.rates.back();
  }
  out.mean = sum / static_cast<double>(hits.size());
  return out;
}

double occlusion_accuracy(const TrackSet& pred, const TrackSet& gt) {
  check_aligned(pred, gt);
  std::size_t hits = 0, total = 0;
  for (std::size_t t = 0; t < gt.tracks.size(); ++t) {
    for (int n = 0; n < gt.num_frames; ++n) {
      ++total;
      hits += pred.tracks[t].visible[n] == gt.tracks[t].visible[n] ? 1 : 0;
    }
  }
  return rate(hits, total, "occlusion accuracy");
}

double average_jaccard(const TrackSet& pred, const TrackSet& gt, const MetricOptions& options) {
  check_aligned(pred, gt);
  check_thresholds(options);
  double sum = 0.0;
  for (double x : options.thresholds) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t t = 0; t < gt.tracks.size(); ++t) {
      for (int n = 0; n < gt.num_frames; ++n) {
        const bool gv = gt.tracks[t].visible[n];
        const bool pv = pred.tracks[t].visible[n];
        const bool within =
            distance(gt, pred.tracks[t].positions[n], gt.tracks[t].positions[n], options.rescale_to_256) <= x;
        if (gv && pv && within) ++tp;
        if (pv && (!gv || !within)) ++fp;
        if (gv && (!pv || !within)) ++fn;
      }
    }
    sum += rate(tp, tp + fp + fn, "average Jaccard");
  }
  return sum / static_cast<double>(options.thresholds.size());
}

BadjaAccuracy badja_metrics(const TrackSet& pred, const TrackSet& gt, std::span<const double> fg_area) {
  check_aligned(pred, gt);
  if (fg_area.size() != static_cast<std::size_t>(gt.num_frames)) {
    fail(ErrorCode::length, "need one foreground area per frame");
  }
  for (double a : fg_area) {
    if (!(a >= 0.0) || !std::isfinite(a)) fail(ErrorCode::invalid_argument, "foreground areas must be >= 0");
  }
  std::size_t seg = 0, px3 = 0, total = 0;
  for (std::size_t t = 0; t < gt.tracks.size(); ++t) {
    for (int n = 0; n < gt.num_frames; ++n) {
      if (!gt.tracks[t].visible[n]) continue;
      ++total;
      const double e = norm(pred.tracks[t].positions[n] - gt.tracks[t].positions[n]);
      seg += e <= 0.2 * std::sqrt(fg_area[n]) ? 1 : 0;
      px3 += e <= 3.0 ? 1 : 0;
    }
  }
  return {rate(seg, total, "delta_seg"), rate(px3, total, "delta_3px")};
}

EvalReport evaluate(const TrackSet& pred, const TrackSet& gt, const MetricOptions& options,
                    std::optional<std::span<const double>> fg_area) {
  const PositionAccuracy pa = position_accuracy(pred, gt, options);
  EvalReport report;
  report.thresholds = options.thresholds;
  report.delta_per_threshold = pa.rates;
  report.delta_avg = pa.mean;
  report.oa = occlusion_accuracy(pred, gt);
  report.aj = average_jaccard(pred, gt, options);
  report.rescaled_to_256 = options.rescale_to_256;

  std::size_t px3 = 0;
  for (std::size_t t = 0; t < gt.tracks.size(); ++t) {
    for (int n = 0; n < gt.num_frames; ++n) {
      if (gt.tracks[t].visible[n] && norm(pred.tracks[t].positions[n] - gt.tracks[t].positions[n]) <= 3.0) ++px3;
    }
  }
  report.delta_3px = rate(px3, pa.samples, "delta_3px");
  if (fg_area) report.delta_seg = badja_metrics(pred, gt, *fg_area).delta_seg;

  report.counts.tracks = gt.tracks.size();
  report.counts.frames = static_cast<std::size_t>(gt.num_frames);
  report.counts.samples = gt.tracks.size() * static_cast<std::size_t>(gt.num_frames);
  report.counts.gt_visible = pa.samples;
  return report;
}

std::string report_to_json(const EvalReport& r, std::string_view metadata_json) {
  json doc = json::object();
  doc["delta_avg"] = r.delta_avg;
  json per = json::array();
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    per.push_back({{"threshold", r.thresholds[k]}, {"rate", r.delta_per_threshold[k]}});
  }
  doc["delta_per_threshold"] = std::move(per);
  doc["oa"] = r.oa;
  doc["aj"] = r.aj;
  doc["delta_seg"] = r.delta_seg ? json(*r.delta_seg) : json(nullptr);
  doc["delta_3px"] = r.delta_3px;
  doc["rescaled_to_256"] = r.rescaled_to_256;
  doc["counts"] = {{"tracks", r.counts.tracks},
                   {"frames", r.counts.frames},
                   {"samples", r.counts.samples},
                   {"gt_visible", r.counts.gt_visible}};
  if (!metadata_json.empty()) {
    json meta = json::parse(metadata_json.begin(), metadata_json.end(), nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) fail(ErrorCode::format, "report metadata must be a JSON object");
    doc["metadata"] = std::move(meta);
  }
  return doc.dump(1) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  const json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorCode::format, "report is not a JSON object");
  try {
    EvalReport r;
    r.delta_avg = doc.at("delta_avg").get<double>();
    for (const json& row : doc.at("delta_per_threshold")) {
      r.thresholds.push_back(row.at("threshold").get<double>());
      r.delta_per_threshold.push_back(row.at("rate").get<double>());
    }
    r.oa = doc.at("oa").get<double>();
    r.aj = doc.at("aj").get<double>();
    if (!doc.at("delta_seg").is_null()) r.delta_seg = doc.at("delta_seg").get<double>();
    r.delta_3px = doc.at("delta_3px").get<double>();
    r.rescaled_to_256 = doc.at("rescaled_to_256").get<bool>();
    const json& c = doc.at("counts");
    r.counts = {c.at("tracks").get<std::size_t>(), c.at("frames").get<std::size_t>(),
                c.at("samples").get<std::size_t>(), c.at("gt_visible").get<std::size_t>()};
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::format, std::string("malformed report: ") + e.what());
  }
}

std::string report_csv_header() {
  return "name,delta_avg,delta_1,delta_2,delta_4,delta_8,delta_16,oa,aj,delta_seg,delta_3px,gt_visible\n";
}

std::string report_csv_row(const EvalReport& r, std::string_view name) {
  std::string row(name);
  row += "," + fmt(r.delta_avg);
  for (double x : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    std::string cell;
    for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
      if (r.thresholds[k] == x) cell = fmt(r.delta_per_threshold[k]);
    }
    row += "," + cell;
  }
  row += "," + fmt(r.oa) + "," + fmt(r.aj) + "," + (r.delta_seg ? fmt(*r.delta_seg) : std::string()) + "," +
         fmt(r.delta_3px) + "," + std::to_string(r.counts.gt_visible) + "\n";
  return row;
}

}  // namespace t4g
