#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "euclidnet/error.hpp"
#include "euclidnet/kernels.hpp"
#include "euclidnet/similarity.hpp"
#include "euclidnet/tensor.hpp"

namespace euclidnet {

// ---------------------------------------------------------------------------
// Layers

/// Convolution whose per-tap product is replaced by a similarity measure.
/// With a 1x1 kernel on 1x1 spatial input it is a fully-connected layer.
struct SimConv2d {
  Tensor weight;  // [c_out, c_in, d, d]
  ConvParams params;
  SimilarityKind kind;
};

/// Fully-connected similarity layer on [N, F] inputs, stored as a 1x1 kernel.
struct SimDense {
  Tensor weight;  // [out, in, 1, 1]
  SimilarityKind kind;
};

/// Per-channel batch normalization over [N,C,H,W] or [N,C].
struct BatchNorm {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  float eps = 1e-5f;
  float momentum = 0.1f;
  bool freeze_stats = false;  // training mode keeps using batch stats but stops updating running ones
};

struct ReLU {};
struct MaxPool2x2 {};
struct Flatten {};

using Layer = std::variant<SimConv2d, SimDense, BatchNorm, ReLU, MaxPool2x2, Flatten>;

std::string layer_name(const Layer& layer);

BatchNorm make_batchnorm(std::size_t channels);

// ---------------------------------------------------------------------------
// Per-layer passes

Tensor sim_conv2d_forward(const Tensor& x, const SimConv2d& layer);
ConvGrads sim_conv2d_backward(const Tensor& x, const SimConv2d& layer, const Tensor& dy);

Tensor sim_dense_forward(const Tensor& x, const SimDense& layer);
ConvGrads sim_dense_backward(const Tensor& x, const SimDense& layer, const Tensor& dy);

struct BatchNormCache {
  Tensor xhat;
  std::vector<float> inv_std;
  bool training = false;
};

struct BatchNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};

Tensor batchnorm_forward(const Tensor& x, BatchNorm& layer, bool training, BatchNormCache* cache = nullptr);
/// Inference-mode forward on a const layer.
Tensor batchnorm_infer(const Tensor& x, const BatchNorm& layer);
BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const BatchNorm& layer, const Tensor& dy);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// 2x2 max pool, stride 2. Records the flat input index of each window's
/// maximum (first on ties) when `argmax` is given.
Tensor maxpool2x2_forward(const Tensor& x, std::vector<std::uint32_t>* argmax = nullptr);
Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax, const Tensor& dy);

Tensor flatten_forward(const Tensor& x);
Tensor flatten_backward(const Shape& input_shape, const Tensor& dy);

struct LossResult {
  float loss = 0.0f;
  Tensor grad;  // dL/dlogits, [N, C]
};

/// Mean cross-entropy of softmax(logits) against integer labels.
LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Model

struct Model {
  std::vector<Layer> layers;
  Shape input_shape;  // [C, H, W]
  std::size_t class_count = 0;
};

struct ModelSpec {
  std::size_t in_channels = 1;
  std::size_t in_h = 28;
  std::size_t in_w = 28;
  std::size_t classes = 10;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;
  std::size_t kernel = 3;
  SimilarityKind kind = SimilarityKind::conv();
};

/// Conv(c1)-BN-ReLU-Pool-Conv(c2)-BN-ReLU-Pool-Flatten-Dense(classes)-BN.
/// Every similarity layer is followed by batch normalization.
Model build_default_model(const ModelSpec& spec, std::uint64_t seed);

/// Fan-in scaled uniform init, bound sqrt(6 / fan_in).
void init_weights(Tensor& weight, std::mt19937_64& rng);

/// Sets the similarity of every SimConv2d / SimDense layer.
void set_similarity(Model& model, const SimilarityKind& kind);
void set_freeze_bn_stats(Model& model, bool freeze);
/// Checks that layer shapes chain and the model emits class_count logits.
void validate_model(const Model& model);

struct LayerCache {
  Tensor input;
  BatchNormCache bn;
  std::vector<std::uint32_t> argmax;
};

struct ForwardTape {
  std::vector<LayerCache> layers;
};

/// Training-capable forward; updates batch-norm running stats when training.
Tensor model_forward(Model& model, const Tensor& x, bool training, ForwardTape* tape = nullptr);
/// Inference forward, leaves the model untouched.
Tensor model_infer(const Model& model, const Tensor& x);
/// Inference forward of a single layer.
Tensor layer_infer(const Layer& layer, const Tensor& x);
/// Prefixes an error with the failing layer's index and name.
[[noreturn]] void rethrow_with_layer(const Error& e, std::size_t index, const Layer& layer);

struct ParamGrad {
  std::size_t layer = 0;
  std::string name;
  Tensor grad;
};

using GradientSet = std::vector<ParamGrad>;

/// One gradient per trainable tensor, in model_parameters order.
GradientSet model_backward(const Model& model, const ForwardTape& tape, const Tensor& dlogits);

struct ParamRef {
  std::size_t layer = 0;
  std::string name;
  Tensor* value = nullptr;
  bool similarity = false;  // weight of a SimConv2d / SimDense
};

std::vector<ParamRef> model_parameters(Model& model);

/// Every persisted tensor (parameters and batch-norm running stats) by name.
struct NamedTensor {
  std::string name;
  Tensor* value = nullptr;
};
std::vector<NamedTensor> model_state(Model& model);

}  // namespace euclidnet
