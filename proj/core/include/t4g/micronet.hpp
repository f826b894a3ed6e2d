#pragma once

// Hand-differentiated NHWC convolutions, the identity-initialised refiner,
// zero-convolution routing, a toy backbone around them and AdamW training.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "t4g/corrloss.hpp"
#include "t4g/matching.hpp"
#include "t4g/types.hpp"

namespace t4g {

enum class Activation { relu, none };

/// Same-padded, stride-1 cross-correlation. Kernel layout is
/// [ky][kx][ci][co], so output channels are contiguous.
struct ConvLayer {
  int kernel_size = 3;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> kernel;
  std::vector<double> bias;
  Activation activation = Activation::relu;

  static ConvLayer zeros(int kernel_size, int in_channels, int out_channels, Activation act);
  /// Centre tap 1 on matching channels, zero bias.
  static ConvLayer identity(int kernel_size, int channels, Activation act);

  double& w(int ky, int kx, int ci, int co) {
    return kernel[((static_cast<std::size_t>(ky) * kernel_size + kx) * in_channels + ci) * out_channels + co];
  }
  double w(int ky, int kx, int ci, int co) const {
    return kernel[((static_cast<std::size_t>(ky) * kernel_size + kx) * in_channels + ci) * out_channels + co];
  }

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

void validate(const ConvLayer& layer);

Tensor conv_forward(const ConvLayer& layer, const Tensor& input);

struct ConvGrads {
  Tensor input;
  std::vector<double> kernel;
  std::vector<double> bias;
};

/// `upstream` is the gradient with respect to the activated output. ReLU
/// passes gradient only where the output is strictly positive.
ConvGrads conv_backward(const ConvLayer& layer, const Tensor& input, const Tensor& upstream);
/// Same, reusing a known forward output.
ConvGrads conv_backward(const ConvLayer& layer, const Tensor& input, const Tensor& output,
                        const Tensor& upstream);

struct RefinerNet {
  std::vector<ConvLayer> layers;

  static RefinerNet identity(int channels, int depth = 8);

  friend bool operator==(const RefinerNet&, const RefinerNet&) = default;
};

Tensor refiner_forward(const RefinerNet& net, const Tensor& h);

struct ZeroConv {
  ConvLayer layer;

  static ZeroConv create(int channels);

  friend bool operator==(const ZeroConv&, const ZeroConv&) = default;
};

/// h + zero(stopgrad(refiner(h))).
Tensor route(const Tensor& h, const RefinerNet& net, const ZeroConv& zero);

/// encoder -> tap h -> route -> head.
struct ToyModel {
  ConvLayer encoder;
  RefinerNet refiner;
  ZeroConv zero;
  ConvLayer head;

  static ToyModel identity(int channels, int refiner_depth = 8);

  friend bool operator==(const ToyModel&, const ToyModel&) = default;
};

struct ToyForward {
  Tensor tap;                    // h
  std::vector<Tensor> refiner;   // refiner[0] = h, refiner[k + 1] = layer k output
  Tensor zero_out;
  Tensor routed;
  Tensor reconstruction;

  const Tensor& refined() const { return refiner.back(); }
};

ToyForward toy_backbone_forward(const ToyModel& model, const Tensor& noisy);

/// Flat view of every parameter tensor, in a fixed order.
struct ParamRef {
  std::string name;
  std::vector<int> shape;
  std::vector<double>* values = nullptr;
};

std::vector<ParamRef> parameters(ToyModel& model);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

void validate(const AdamWConfig& config);

struct Moments {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t steps = 0;
};

/// Decoupled weight decay, bias-corrected moments.
void adamw_update(std::vector<double>& param, const std::vector<double>& grad, Moments& moments,
                  const AdamWConfig& config);

struct OptimState {
  std::int64_t step = 0;
  std::vector<Moments> groups;  // aligned with parameters()
};

OptimState make_optim_state(ToyModel& model);

struct TrainConfig {
  MatchConfig match;
  LossConfig loss;
  AdamWConfig optim;
  bool propagate_into_backbone = true;
};

struct TrainBatch {
  Tensor noisy;
  Tensor clean;
  Resolution pixels;
  CorrespondenceSet pairs;
};

struct StepLosses {
  double loss_diff = 0.0;
  double loss_corr = 0.0;
  double joint = 0.0;

  friend bool operator==(const StepLosses&, const StepLosses&) = default;
};

/// Per-group gradients of the joint loss; a group without a gradient
/// source in this step is std::nullopt.
struct ModelGrads {
  std::vector<std::optional<std::vector<double>>> groups;
  StepLosses losses;
};

ModelGrads compute_gradients(const ToyModel& model, const TrainBatch& batch, const TrainConfig& config);

/// One AdamW step on the joint loss. Groups without a gradient are left
/// untouched, including weight decay.
StepLosses train_step(ToyModel& model, OptimState& state, const TrainBatch& batch,
                      const TrainConfig& config);

struct TrainSample {
  Tensor noisy;
  Tensor clean;
  TrackSet tracks;
  std::optional<MaskStack> masks;
};

struct StepLog {
  std::int64_t step = 0;
  StepLosses losses;

  friend bool operator==(const StepLog&, const StepLog&) = default;
};

struct TrainResult {
  ToyModel model;
  std::vector<StepLog> log;
};

struct TrainSchedule {
  int epochs = 1;
  std::int64_t max_steps = 0;  // 0: no cap
  std::uint64_t seed = 0;
  int refiner_depth = 8;
};

/// One step per sample per epoch, samples visited in a seeded shuffle.
/// Fresh pairs are drawn from the sample's tracks every step.
TrainResult train_refiner(const std::vector<TrainSample>& dataset, const TrainSchedule& schedule,
                          const TrainConfig& config);
TrainResult train_refiner(ToyModel initial, const std::vector<TrainSample>& dataset,
                          const TrainSchedule& schedule, const TrainConfig& config);

// Checkpoints: magic "T4GC", then u64 version and tensor count, then per
// tensor a u64-length-prefixed name, u64 rank, u64 dims and float64 data,
// all little-endian.

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

std::vector<NamedTensor> model_tensors(const ToyModel& model);
ToyModel model_from_tensors(const std::vector<NamedTensor>& tensors);

void write_checkpoint(const ToyModel& model, const std::filesystem::path& path);
ToyModel read_checkpoint(const std::filesystem::path& path);

std::string loss_log_csv(const std::vector<StepLog>& log);

}  // namespace t4g
