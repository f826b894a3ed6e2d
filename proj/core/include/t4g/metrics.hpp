#pragma once

// Point-tracking evaluation: position accuracy, occlusion accuracy, average
// Jaccard, BADJA-style accuracies, and report serialisation.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "t4g/types.hpp"

namespace t4g {

struct MetricOptions {
  std::vector<double> thresholds{1.0, 2.0, 4.0, 8.0, 16.0};  // pixels, inclusive
  bool rescale_to_256 = false;  // compare in a 256 x 256 frame instead of native pixels
};

struct PositionAccuracy {
  std::vector<double> rates;  // aligned with the thresholds
  double mean = 0.0;
  std::size_t samples = 0;    // gt-visible (track, frame) samples
};

/// Fraction of gt-visible samples within each threshold of the ground truth.
PositionAccuracy position_accuracy(const TrackSet& pred, const TrackSet& gt, const MetricOptions& options = {});

/// Fraction of all samples whose visibility flag matches.
double occlusion_accuracy(const TrackSet& pred, const TrackSet& gt);

/// Per threshold TP / (TP + FP + FN), averaged over thresholds.
///   TP: gt visible, pred visible, within x
///   FP: pred visible, and gt occluded or beyond x
///   FN: gt visible, and pred occluded or beyond x
double average_jaccard(const TrackSet& pred, const TrackSet& gt, const MetricOptions& options = {});

struct BadjaAccuracy {
  double delta_seg = 0.0;  // radius 0.2 * sqrt(area of the frame)
  double delta_3px = 0.0;
};

BadjaAccuracy badja_metrics(const TrackSet& pred, const TrackSet& gt, std::span<const double> fg_area);

struct EvalCounts {
  std::size_t tracks = 0;
  std::size_t frames = 0;
  std::size_t samples = 0;
  std::size_t gt_visible = 0;

  friend bool operator==(const EvalCounts&, const EvalCounts&) = default;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> delta_per_threshold;
  double delta_avg = 0.0;
  double oa = 0.0;
  double aj = 0.0;
  std::optional<double> delta_seg;  // only with foreground areas
  double delta_3px = 0.0;
  bool rescaled_to_256 = false;
  EvalCounts counts;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate(const TrackSet& pred, const TrackSet& gt, const MetricOptions& options = {},
                    std::optional<std::span<const double>> fg_area = std::nullopt);

/// `metadata_json`, when non-empty, must be a JSON object and is embedded
/// under "metadata".
std::string report_to_json(const EvalReport& report, std::string_view metadata_json = {});
EvalReport report_from_json(std::string_view text);

std::string report_csv_header();
std::string report_csv_row(const EvalReport& report, std::string_view name);

}  // namespace t4g
