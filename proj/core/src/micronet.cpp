#include "t4g/micronet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "t4g/error.hpp"
#include "t4g/numeric.hpp"
#include "t4g/parallel.hpp"

namespace t4g {

namespace {

void check_input(const ConvLayer& layer, const Tensor& input) {
  validate(layer);
  if (input.channels() != layer.in_channels) {
    fail(ErrorCode::length, "conv expects " + std::to_string(layer.in_channels) + " input channels, got " +
                                std::to_string(input.channels()));
  }
}

ConvGrads backward_impl(const ConvLayer& layer, const Tensor& input, const Tensor& output,
                        const Tensor& upstream, bool want_input) {
  check_input(layer, input);
  if (output.frames() != input.frames() || output.height() != input.height() ||
      output.width() != input.width() || output.channels() != layer.out_channels || !output.same_shape(upstream)) {
    fail(ErrorCode::length, "conv backward shape mismatch");
  }
  const int frames = input.frames(), height = input.height(), width = input.width();
  const int k = layer.kernel_size, pad = k / 2, ci_n = layer.in_channels, co_n = layer.out_channels;

  std::vector<std::vector<double>> kernel_parts(frames, std::vector<double>(layer.kernel.size(), 0.0));
  std::vector<std::vector<double>> bias_parts(frames, std::vector<double>(co_n, 0.0));
  ConvGrads grads;
  if (want_input) grads.input = Tensor(frames, height, width, ci_n);

  parallel_for(static_cast<std::size_t>(frames), [&](std::size_t fi) {
    const int n = static_cast<int>(fi);
    std::vector<double>& gk = kernel_parts[n];
    std::vector<double>& gb = bias_parts[n];
    std::vector<double> g(co_n);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const auto up = upstream.cell(n, y, x);
        const auto out = output.cell(n, y, x);
        bool any = false;
        for (int co = 0; co < co_n; ++co) {
          g[co] = (layer.activation == Activation::relu && !(out[co] > 0.0)) ? 0.0 : up[co];
          any = any || g[co] != 0.0;
        }
        if (!any) continue;
        for (int co = 0; co < co_n; ++co) gb[co] += g[co];
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = x + kx - pad;
            if (ix < 0 || ix >= width) continue;
            const auto in = input.cell(n, iy, ix);
            const std::size_t base = (static_cast<std::size_t>(ky) * k + kx) * ci_n * co_n;
            for (int ci = 0; ci < ci_n; ++ci) {
              const double a = in[ci];
              double* gkr = gk.data() + base + static_cast<std::size_t>(ci) * co_n;
              const double* kr = layer.kernel.data() + base + static_cast<std::size_t>(ci) * co_n;
              double acc = 0.0;
              for (int co = 0; co < co_n; ++co) {
                gkr[co] += a * g[co];
                acc += kr[co] * g[co];
              }
              if (want_input) grads.input.at(n, iy, ix, ci) += acc;
            }
          }
        }
      }
    }
  });

  grads.kernel.assign(layer.kernel.size(), 0.0);
  grads.bias.assign(co_n, 0.0);
  for (int n = 0; n < frames; ++n) {
    for (std::size_t i = 0; i < grads.kernel.size(); ++i) grads.kernel[i] += kernel_parts[n][i];
    for (int co = 0; co < co_n; ++co) grads.bias[co] += bias_parts[n][co];
  }
  return grads;
}

double mean_squared_error(const Tensor& a, const Tensor& b, Tensor* grad) {
  if (!a.same_shape(b)) fail(ErrorCode::length, "reconstruction and target differ in shape");
  std::vector<double> sq(a.size());
  const double inv = 1.0 / static_cast<double>(a.size());
  if (grad != nullptr) *grad = Tensor(a.frames(), a.height(), a.width(), a.channels());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    sq[i] = d * d;
    if (grad != nullptr) grad->values()[i] = 2.0 * d * inv;
  }
  return pairwise_sum(sq) * inv;
}

void check_finite(double value, const char* term) {
  if (!std::isfinite(value)) fail(ErrorCode::non_finite, std::string(term) + " is not finite");
}

}  // namespace

ConvLayer ConvLayer::zeros(int kernel_size, int in_channels, int out_channels, Activation act) {
  ConvLayer layer;
  layer.kernel_size = kernel_size;
  layer.in_channels = in_channels;
  layer.out_channels = out_channels;
  layer.activation = act;
  layer.kernel.assign(static_cast<std::size_t>(kernel_size) * kernel_size * in_channels * out_channels, 0.0);
  layer.bias.assign(static_cast<std::size_t>(out_channels), 0.0);
  validate(layer);
  return layer;
}

ConvLayer ConvLayer::identity(int kernel_size, int channels, Activation act) {
  ConvLayer layer = zeros(kernel_size, channels, channels, act);
  const int c = kernel_size / 2;
  for (int ch = 0; ch < channels; ++ch) layer.w(c, c, ch, ch) = 1.0;
  return layer;
}

void validate(const ConvLayer& layer) {
  if (layer.kernel_size < 1 || layer.kernel_size % 2 == 0) fail(ErrorCode::validation, "kernel size must be odd");
  if (layer.in_channels < 1 || layer.out_channels < 1) fail(ErrorCode::validation, "conv channels must be >= 1");
  const std::size_t want = static_cast<std::size_t>(layer.kernel_size) * layer.kernel_size *
                           layer.in_channels * layer.out_channels;
  if (layer.kernel.size() != want || layer.bias.size() != static_cast<std::size_t>(layer.out_channels)) {
    fail(ErrorCode::validation, "conv parameter length mismatch");
  }
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
  check_input(layer, input);
  const int frames = input.frames(), height = input.height(), width = input.width();
  const int k = layer.kernel_size, pad = k / 2, ci_n = layer.in_channels, co_n = layer.out_channels;
  Tensor out(frames, height, width, co_n);
  parallel_for(static_cast<std::size_t>(frames), [&](std::size_t fi) {
    const int n = static_cast<int>(fi);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        auto o = out.cell(n, y, x);
        std::copy(layer.bias.begin(), layer.bias.end(), o.begin());
        for (int ky = 0; ky < k; ++ky) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = x + kx - pad;
            if (ix < 0 || ix >= width) continue;
            const auto in = input.cell(n, iy, ix);
            const double* kr = layer.kernel.data() + (static_cast<std::size_t>(ky) * k + kx) * ci_n * co_n;
            for (int ci = 0; ci < ci_n; ++ci, kr += co_n) {
              const double a = in[ci];
              if (a == 0.0) continue;
              for (int co = 0; co < co_n; ++co) o[co] += a * kr[co];
            }
          }
        }
        if (layer.activation == Activation::relu) {
          for (double& v : o) v = v > 0.0 ? v : 0.0;
        }
      }
    }
  });
  return out;
}

ConvGrads conv_backward(const ConvLayer& layer, const Tensor& input, const Tensor& upstream) {
  return backward_impl(layer, input, conv_forward(layer, input), upstream, true);
}

ConvGrads conv_backward(const ConvLayer& layer, const Tensor& input, const Tensor& output,
                        const Tensor& upstream) {
  return backward_impl(layer, input, output, upstream, true);
}

RefinerNet RefinerNet::identity(int channels, int depth) {
  if (depth < 1) fail(ErrorCode::invalid_argument, "refiner depth must be >= 1");
  RefinerNet net;
  for (int i = 0; i < depth; ++i) net.layers.push_back(ConvLayer::identity(3, channels, Activation::relu));
  return net;
}

Tensor refiner_forward(const RefinerNet& net, const Tensor& h) {
  Tensor x = h;
  for (const ConvLayer& layer : net.layers) x = conv_forward(layer, x);
  return x;
}

ZeroConv ZeroConv::create(int channels) { return {ConvLayer::zeros(1, channels, channels, Activation::none)}; }

Tensor route(const Tensor& h, const RefinerNet& net, const ZeroConv& zero) {
  const Tensor branch = conv_forward(zero.layer, refiner_forward(net, h));
  if (!branch.same_shape(h)) fail(ErrorCode::length, "route branch changes the feature shape");
  Tensor out = h;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += branch.values()[i];
  return out;
}

ToyModel ToyModel::identity(int channels, int refiner_depth) {
  return {ConvLayer::identity(3, channels, Activation::relu), RefinerNet::identity(channels, refiner_depth),
          ZeroConv::create(channels), ConvLayer::identity(3, channels, Activation::none)};
}

ToyForward toy_backbone_forward(const ToyModel& model, const Tensor& noisy) {
  ToyForward fw;
  fw.tap = conv_forward(model.encoder, noisy);
  fw.refiner.push_back(fw.tap);
  for (const ConvLayer& layer : model.refiner.layers) fw.refiner.push_back(conv_forward(layer, fw.refiner.back()));
  fw.zero_out = conv_forward(model.zero.layer, fw.refined());
  if (!fw.zero_out.same_shape(fw.tap)) fail(ErrorCode::length, "route branch changes the feature shape");
  fw.routed = fw.tap;
  for (std::size_t i = 0; i < fw.routed.size(); ++i) fw.routed.values()[i] += fw.zero_out.values()[i];
  fw.reconstruction = conv_forward(model.head, fw.routed);
  return fw;
}

std::vector<ParamRef> parameters(ToyModel& model) {
  std::vector<ParamRef> out;
  const auto add = [&](const std::string& prefix, ConvLayer& layer) {
    out.push_back({prefix + ".kernel",
                   {layer.kernel_size, layer.kernel_size, layer.in_channels, layer.out_channels},
                   &layer.kernel});
    out.push_back({prefix + ".bias", {layer.out_channels}, &layer.bias});
  };
  add("encoder", model.encoder);
  for (std::size_t i = 0; i < model.refiner.layers.size(); ++i) {
    add("refiner." + std::to_string(i), model.refiner.layers[i]);
  }
  add("zero", model.zero.layer);
  add("head", model.head);
  return out;
}

void validate(const AdamWConfig& c) {
  if (!(c.lr >= 0.0) || !(c.eps > 0.0) || !(c.weight_decay >= 0.0) || !(c.beta1 >= 0.0 && c.beta1 < 1.0) ||
      !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    fail(ErrorCode::invalid_argument, "invalid AdamW hyperparameters");
  }
}

void adamw_update(std::vector<double>& param, const std::vector<double>& grad, Moments& moments,
                  const AdamWConfig& c) {
  if (grad.size() != param.size()) fail(ErrorCode::length, "gradient and parameter lengths differ");
  if (moments.m.empty()) {
    moments.m.assign(param.size(), 0.0);
    moments.v.assign(param.size(), 0.0);
  }
  if (moments.m.size() != param.size() || moments.v.size() != param.size()) {
    fail(ErrorCode::length, "moment and parameter lengths differ");
  }
  moments.steps += 1;
  const double t = static_cast<double>(moments.steps);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] *= 1.0 - c.lr * c.weight_decay;
    moments.m[i] = c.beta1 * moments.m[i] + (1.0 - c.beta1) * grad[i];
    moments.v[i] = c.beta2 * moments.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = moments.m[i] / bc1;
    const double v_hat = moments.v[i] / bc2;
    param[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

OptimState make_optim_state(ToyModel& model) {
  OptimState state;
  for (const ParamRef& p : parameters(model)) {
    state.groups.push_back({std::vector<double>(p.values->size(), 0.0), std::vector<double>(p.values->size(), 0.0), 0});
  }
  return state;
}

ModelGrads compute_gradients(const ToyModel& model, const TrainBatch& batch, const TrainConfig& config) {
  validate(config.loss);
  if (batch.pairs.empty()) fail(ErrorCode::empty_input, "training batch has no pairs");
  const ToyForward fw = toy_backbone_forward(model, batch.noisy);

  ModelGrads out;
  Tensor g_recon;
  out.losses.loss_diff = mean_squared_error(fw.reconstruction, batch.clean, &g_recon);
  check_finite(out.losses.loss_diff, "loss_diff");
  const LossResult corr = corr_loss(fw.refined(), batch.pixels, batch.pairs, config.match, config.loss);
  out.losses.loss_corr = corr.value;
  check_finite(out.losses.loss_corr, "loss_corr");
  out.losses.joint = out.losses.loss_diff + config.loss.lambda * out.losses.loss_corr;
  check_finite(out.losses.joint, "joint");

  const std::size_t depth = model.refiner.layers.size();
  out.groups.resize(2 * (depth + 3));
  const auto store = [&](std::size_t slot, ConvGrads&& g) {
    out.groups[2 * slot] = std::move(g.kernel);
    out.groups[2 * slot + 1] = std::move(g.bias);
  };

  ConvGrads head = backward_impl(model.head, fw.routed, fw.reconstruction, g_recon, true);
  Tensor g_tap = head.input;
  store(depth + 2, std::move(head));
  // The zero-conv input is detached: only its own parameters receive gradient.
  store(depth + 1, backward_impl(model.zero.layer, fw.refined(), fw.zero_out, g_tap, false));

  if (config.loss.lambda > 0.0) {
    Tensor g = corr.grad;
    for (double& v : g.values()) v *= config.loss.lambda;
    for (std::size_t k = depth; k-- > 0;) {
      const bool need_input = k > 0 || config.propagate_into_backbone;
      ConvGrads lg = backward_impl(model.refiner.layers[k], fw.refiner[k], fw.refiner[k + 1], g, need_input);
      if (need_input) g = std::move(lg.input);
      store(1 + k, std::move(lg));
    }
    if (config.propagate_into_backbone) {
      for (std::size_t i = 0; i < g_tap.size(); ++i) g_tap.values()[i] += g.values()[i];
    }
  }
  store(0, backward_impl(model.encoder, batch.noisy, fw.tap, g_tap, false));
  return out;
}

StepLosses train_step(ToyModel& model, OptimState& state, const TrainBatch& batch, const TrainConfig& config) {
  validate(config.optim);
  ModelGrads grads = compute_gradients(model, batch, config);
  std::vector<ParamRef> params = parameters(model);
  if (state.groups.size() != params.size()) fail(ErrorCode::length, "optimizer state does not match the model");
  state.step += 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads.groups[i]) adamw_update(*params[i].values, *grads.groups[i], state.groups[i], config.optim);
  }
  return grads.losses;
}

TrainResult train_refiner(const std::vector<TrainSample>& dataset, const TrainSchedule& schedule,
                          const TrainConfig& config) {
  if (dataset.empty()) fail(ErrorCode::empty_input, "training dataset is empty");
  return train_refiner(ToyModel::identity(dataset.front().noisy.channels(), schedule.refiner_depth), dataset,
                       schedule, config);
}

TrainResult train_refiner(ToyModel initial, const std::vector<TrainSample>& dataset, const TrainSchedule& schedule,
                          const TrainConfig& config) {
  if (dataset.empty()) fail(ErrorCode::empty_input, "training dataset is empty");
  if (schedule.epochs < 0 || schedule.max_steps < 0) fail(ErrorCode::invalid_argument, "negative schedule");
  validate(config.match);
  validate(config.loss);
  validate(config.optim);

  TrainResult result{std::move(initial), {}};
  OptimState state = make_optim_state(result.model);
  std::mt19937_64 order_rng(schedule.seed);
  std::mt19937_64 pair_rng(schedule.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(dataset.size());

  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t idx : order) {
      if (schedule.max_steps > 0 && state.step >= schedule.max_steps) return result;
      const TrainSample& sample = dataset[idx];
      const MaskStack* masks = sample.masks ? &*sample.masks : nullptr;
      TrainBatch batch{sample.noisy, sample.clean, sample.tracks.resolution,
                       sample_pairs(sample.tracks, masks, config.loss.pairs_per_step, config.loss.fg_ratio,
                                    pair_rng())
                           .pairs};
      const StepLosses losses = train_step(result.model, state, batch, config);
      result.log.push_back({state.step, losses});
    }
  }
  return result;
}

}  // namespace t4g
