#include "t4g/corrloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <utility>

#include "t4g/error.hpp"
#include "t4g/numeric.hpp"
#include "t4g/parallel.hpp"

namespace t4g {

namespace {

using SparseGrad = std::vector<std::pair<std::size_t, double>>;

struct PairOutcome {
  double loss = 0.0;
  SparseGrad grad;
};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> cell_norms(const Tensor& volume) {
  const std::size_t cells = static_cast<std::size_t>(volume.frames()) * volume.height() * volume.width();
  const auto c = static_cast<std::size_t>(volume.channels());
  std::vector<double> norms(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    std::span<const double> v(volume.values().data() + i * c, c);
    norms[i] = std::sqrt(dot(v, v));
  }
  return norms;
}

double norm_at(const Tensor& volume, std::span<const double> norms, int frame, int row, int col) {
  return norms[(static_cast<std::size_t>(frame) * volume.height() + row) * volume.width() + col];
}

void check_pair(const Tensor& features, Resolution pixels, const Correspondence& pair,
                std::size_t index) {
  const auto bad = [&](const std::string& why) {
    fail(ErrorCode::out_of_bounds, "pair " + std::to_string(index) + ": " + why);
  };
  if (pair.query_frame < 0 || pair.query_frame >= features.frames()) bad("query frame out of range");
  if (pair.target_frame < 0 || pair.target_frame >= features.frames()) bad("target frame out of range");
  for (Point p : {pair.query, pair.target}) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !pixels.contains(p)) bad("point outside the image");
  }
}

struct Matched {
  std::vector<double> feature;
  double feature_norm = 0.0;
  BilinearStencil stencil;
  CostVolume cv;
  SoftArgmax sa;
};

Matched match_pair(const Tensor& features, const GridMapping& mapping, std::span<const double> norms,
                   const Correspondence& pair, const MatchConfig& match) {
  Matched m;
  const Point g = mapping.to_grid(pair.query);
  m.stencil = bilinear_stencil(features.grid(), g);
  m.feature = sample_feature(features, pair.query_frame, g);
  m.feature_norm = std::sqrt(dot(m.feature, m.feature));

  // A zero-norm query scores 0 everywhere, so soft-argmax falls back to the
  // peak and the pair contributes loss but no gradient.
  m.cv = {features.height(), features.width(),
          std::vector<double>(static_cast<std::size_t>(features.height()) * features.width())};
  for (int r = 0; m.feature_norm > 0.0 && r < features.height(); ++r) {
    for (int c = 0; c < features.width(); ++c) {
      const double tn = norm_at(features, norms, pair.target_frame, r, c);
      if (tn > 0.0) {
        const double s = dot(m.feature, features.cell(pair.target_frame, r, c)) / (m.feature_norm * tn);
        m.cv.values[static_cast<std::size_t>(r) * features.width() + c] = std::clamp(s, -1.0, 1.0);
      }
    }
  }
  m.sa = soft_argmax(m.cv, match);
  return m;
}

PairOutcome evaluate_pair(const Tensor& features, const GridMapping& mapping,
                          std::span<const double> norms, const Correspondence& pair,
                          const MatchConfig& match, double delta, bool want_grad) {
  const Matched m = match_pair(features, mapping, norms, pair, match);
  const Point predicted = mapping.to_pixels(m.sa.position);
  const Point r = predicted - pair.target;
  const double e = norm(r);

  PairOutcome out;
  out.loss = huber(e, delta);
  if (!want_grad || m.sa.fell_back || e == 0.0) return out;

  const Point g_x = e <= delta ? r : (delta / e) * r;
  const Point g_p{g_x.x / mapping.scale_x, g_x.y / mapping.scale_y};
  const double w_sum = m.sa.weight_sum;
  const std::size_t channels = m.feature.size();
  const double fn = m.feature_norm;

  std::vector<double> g_f(channels, 0.0);
  const int reach = static_cast<int>(std::floor(match.window_radius));
  const GridCell peak = m.sa.peak;
  for (int row = std::max(0, peak.row - reach); row <= std::min(features.height() - 1, peak.row + reach); ++row) {
    for (int col = std::max(0, peak.col - reach); col <= std::min(features.width() - 1, peak.col + reach);
         ++col) {
      if (!in_window({row, col}, peak, match.window_radius)) continue;
      const double s = m.cv.at(row, col);
      if (match.negative_weights == NegativeWeightPolicy::clamp_to_zero && !(s > 0.0)) continue;
      const double tn = norm_at(features, norms, pair.target_frame, row, col);
      if (!(tn > 0.0)) continue;
      const double g_s = (g_p.x * (col - m.sa.position.x) + g_p.y * (row - m.sa.position.y)) / w_sum;
      if (g_s == 0.0) continue;
      const auto t = features.cell(pair.target_frame, row, col);
      const std::size_t base = features.offset(pair.target_frame, row, col);
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const double f_hat = m.feature[ch] / fn;
        const double t_hat = t[ch] / tn;
        g_f[ch] += g_s * (t_hat - s * f_hat) / fn;
        out.grad.emplace_back(base + ch, g_s * (f_hat - s * t_hat) / tn);
      }
    }
  }
  for (int k = 0; k < 4; ++k) {
    const double b = m.stencil.weights[k];
    if (b == 0.0) continue;
    const std::size_t base =
        features.offset(pair.query_frame, m.stencil.cells[k].row, m.stencil.cells[k].col);
    for (std::size_t ch = 0; ch < channels; ++ch) out.grad.emplace_back(base + ch, b * g_f[ch]);
  }
  return out;
}

LossResult run(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
               const MatchConfig& match, const LossConfig& loss, bool want_grad) {
  validate(match);
  validate(loss);
  if (pairs.empty()) fail(ErrorCode::empty_input, "correspondence set is empty");
  for (std::size_t i = 0; i < pairs.size(); ++i) check_pair(features, pixels, pairs[i], i);

  const GridMapping mapping = GridMapping::between(pixels, features.grid());
  const std::vector<double> norms = cell_norms(features);
  std::vector<PairOutcome> outcomes(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    outcomes[i] = evaluate_pair(features, mapping, norms, pairs[i], match, loss.huber_delta, want_grad);
  });

  const double scale = loss.reduction == Reduction::mean ? 1.0 / static_cast<double>(pairs.size()) : 1.0;
  std::vector<double> losses(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) losses[i] = outcomes[i].loss;

  LossResult result;
  result.value = pairwise_sum(losses) * scale;
  if (want_grad) {
    result.grad = Tensor(features.frames(), features.height(), features.width(), features.channels());
    auto& g = result.grad.values();
    for (const PairOutcome& o : outcomes) {
      for (const auto& [index, value] : o.grad) g[index] += value * scale;
    }
  }
  return result;
}

}  // namespace

void validate(const LossConfig& config) {
  if (!(config.huber_delta > 0.0)) fail(ErrorCode::invalid_argument, "huber_delta must be > 0");
  if (!(config.lambda >= 0.0)) fail(ErrorCode::invalid_argument, "lambda must be >= 0");
  if (!(config.fg_ratio >= 0.0 && config.fg_ratio <= 1.0)) {
    fail(ErrorCode::invalid_argument, "fg_ratio must lie in [0, 1]");
  }
}

double huber(double e, double delta) {
  if (!(e >= 0.0)) fail(ErrorCode::invalid_argument, "huber needs a nonnegative residual norm");
  if (!(delta > 0.0)) fail(ErrorCode::invalid_argument, "huber delta must be > 0");
  return e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
}

LossResult corr_loss(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
                     const MatchConfig& match, const LossConfig& loss) {
  return run(features, pixels, pairs, match, loss, true);
}

double corr_loss_value(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
                       const MatchConfig& match, const LossConfig& loss) {
  return run(features, pixels, pairs, match, loss, false).value;
}

Tensor fd_gradient(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
                   const MatchConfig& match, const LossConfig& loss, double step) {
  if (!(step > 0.0)) fail(ErrorCode::invalid_argument, "finite-difference step must be > 0");
  Tensor probe = features;
  Tensor grad(features.frames(), features.height(), features.width(), features.channels());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double original = probe.values()[i];
    probe.values()[i] = original + step;
    const double up = corr_loss_value(probe, pixels, pairs, match, loss);
    probe.values()[i] = original - step;
    const double down = corr_loss_value(probe, pixels, pairs, match, loss);
    probe.values()[i] = original;
    grad.values()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double kink_margin(const Tensor& features, Resolution pixels, const CorrespondenceSet& pairs,
                   const MatchConfig& match) {
  validate(match);
  const GridMapping mapping = GridMapping::between(pixels, features.grid());
  const std::vector<double> norms = cell_norms(features);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check_pair(features, pixels, pairs[i], i);
    const Matched m = match_pair(features, mapping, norms, pairs[i], match);
    const GridCell peak = m.sa.peak;
    const double top = m.cv.at(peak.row, peak.col);
    for (int r = 0; r < m.cv.height; ++r) {
      for (int c = 0; c < m.cv.width; ++c) {
        if (r == peak.row && c == peak.col) continue;
        const double s = m.cv.at(r, c);
        margin = std::min(margin, top - s);
        if (match.negative_weights == NegativeWeightPolicy::clamp_to_zero &&
            in_window({r, c}, peak, match.window_radius)) {
          margin = std::min(margin, std::abs(s));
        }
      }
    }
  }
  return margin;
}

PairSample sample_pairs(const TrackSet& tracks, const MaskStack* masks, std::size_t n,
                        double fg_ratio, std::uint64_t seed) {
  if (!(fg_ratio >= 0.0 && fg_ratio <= 1.0)) fail(ErrorCode::invalid_argument, "fg_ratio must lie in [0, 1]");
  PairSample out;
  if (n == 0) return out;
  if (tracks.tracks.empty()) fail(ErrorCode::empty_input, "track set is empty");
  if (masks != nullptr && (masks->num_frames != tracks.num_frames || masks->resolution != tracks.resolution)) {
    fail(ErrorCode::length, "mask stack does not match the track set");
  }

  struct Candidate {
    std::uint32_t track;
    std::uint16_t from;
    std::uint16_t to;
  };
  std::vector<Candidate> fg, bg;
  for (std::size_t t = 0; t < tracks.tracks.size(); ++t) {
    const Track& track = tracks.tracks[t];
    for (int a = 0; a < tracks.num_frames; ++a) {
      if (!track.visible[a]) continue;
      const bool is_fg = masks != nullptr && masks->contains(a, track.positions[a]);
      for (int b = 0; b < tracks.num_frames; ++b) {
        if (b == a || !track.visible[b]) continue;
        (is_fg ? fg : bg).push_back({static_cast<std::uint32_t>(t), static_cast<std::uint16_t>(a),
                                     static_cast<std::uint16_t>(b)});
      }
    }
  }
  if (fg.empty() && bg.empty()) fail(ErrorCode::empty_input, "no pair of visible frames in any track");

  std::size_t n_fg = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fg_ratio));
  if (fg.empty()) n_fg = 0;
  if (bg.empty()) n_fg = n;

  std::mt19937_64 rng(seed);
  const auto draw = [&](const std::vector<Candidate>& pool, bool is_fg) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const Candidate& c = pool[pick(rng)];
    const Track& track = tracks.tracks[c.track];
    out.pairs.push_back({track.positions[c.from], c.from, track.positions[c.to], c.to, is_fg});
  };
  for (std::size_t i = 0; i < n_fg; ++i) draw(fg, true);
  for (std::size_t i = n_fg; i < n; ++i) draw(bg, false);
  out.achieved_fg_ratio = static_cast<double>(n_fg) / static_cast<double>(n);
  return out;
}

}  // namespace t4g
