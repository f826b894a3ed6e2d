#pragma once

// Correspondence loss over soft-argmax predictions, its analytic gradient
// with respect to the feature volume, and the supervision-pair sampler.

#include <cstddef>
#include <cstdint>

#include "t4g/matching.hpp"
#include "t4g/types.hpp"

namespace t4g {

enum class Reduction { mean, sum };

struct LossConfig {
  double huber_delta = 1.0;  // pixels
  double lambda = 8.0;
  std::size_t pairs_per_step = 512;
  double fg_ratio = 0.5;
  Reduction reduction = Reduction::mean;
};

void validate(const LossConfig& config);

double huber(double residual_norm, double delta);

struct LossResult {
  double value = 0.0;
  Tensor grad;  // same shape as the features
};

/// Huber loss on ||xi(query) - target|| over every pair. Pixel coordinates
/// are mapped onto the feature grid of `features`. The argmax cell and window
/// membership are constants of the forward pass.
LossResult corr_loss(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
                     const MatchConfig& match, const LossConfig& loss);

double corr_loss_value(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
                       const MatchConfig& match, const LossConfig& loss);

/// Central differences of corr_loss_value, one coordinate at a time.
Tensor fd_gradient(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
                   const MatchConfig& match, const LossConfig& loss, double step);

/// Smallest distance of the forward pass to a non-differentiable point: the
/// gap between the top two similarities of each target frame, and |S| for
/// every in-window cell under the clamping policy.
double kink_margin(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
                   const MatchConfig& match);

struct PairSample {
  CorrespondenceSet pairs;
  double achieved_fg_ratio = 0.0;
};

/// Draws n (track, frame pair) combinations with both endpoints visible and
/// distinct frames, round(n * fg_ratio) of them foreground. A pair is
/// foreground when its query point lies inside the query frame's mask. When
/// one class has no candidates the other supplies all n.
PairSample sample_pairs(const TrackSet& tracks, const MaskStack* masks, std::size_t n,
                        double fg_ratio, std::uint64_t seed);

}  // namespace t4g
