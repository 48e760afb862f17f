#include "euclidnet/nn.hpp"

#include <algorithm>
#include <cmath>

#include "euclidnet/error.hpp"

namespace euclidnet {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Shape dense_as_conv(const Shape& x) {
  if (x.size() != 2) throw Error(ErrorCode::Shape, "dense layer expects [N,F] input, got " + shape_to_string(x));
  return {x[0], x[1], 1, 1};
}

struct ChannelLayout {
  std::size_t batch, channels, spatial;
};

ChannelLayout channel_layout(const Tensor& x) {
  if (x.ndim() == 4) return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
  if (x.ndim() == 2) return {x.dim(0), x.dim(1), 1};
  throw Error(ErrorCode::Shape, "batchnorm expects [N,C,H,W] or [N,C], got " + shape_to_string(x.shape()));
}

void check_bn_channels(const BatchNorm& layer, std::size_t channels) {
  if (layer.gamma.size() != channels)
    throw Error(ErrorCode::Shape, "batchnorm has " + std::to_string(layer.gamma.size()) +
                                      " channels, input has " + std::to_string(channels));
}

}  // namespace

std::string layer_name(const Layer& layer) {
  return std::visit(overloaded{
                        [](const SimConv2d& l) { return "sim_conv2d[" + to_string(l.kind) + "]"; },
                        [](const SimDense& l) { return "sim_dense[" + to_string(l.kind) + "]"; },
                        [](const BatchNorm&) { return std::string("batchnorm"); },
                        [](const ReLU&) { return std::string("relu"); },
                        [](const MaxPool2x2&) { return std::string("maxpool2x2"); },
                        [](const Flatten&) { return std::string("flatten"); },
                    },
                    layer);
}

BatchNorm make_batchnorm(std::size_t channels) {
  BatchNorm bn;
  bn.gamma = Tensor({channels}, 1.0f);
  bn.beta = Tensor({channels}, 0.0f);
  bn.running_mean = Tensor({channels}, 0.0f);
  bn.running_var = Tensor({channels}, 1.0f);
  return bn;
}

// --- similarity layers -------------------------------------------------------

Tensor sim_conv2d_forward(const Tensor& x, const SimConv2d& layer) {
  return sim_conv_forward(x, layer.weight, layer.params, layer.kind);
}

ConvGrads sim_conv2d_backward(const Tensor& x, const SimConv2d& layer, const Tensor& dy) {
  return sim_conv_backward(x, layer.weight, layer.params, layer.kind, dy);
}

Tensor sim_dense_forward(const Tensor& x, const SimDense& layer) {
  const auto x4 = x.reshaped(dense_as_conv(x.shape()));
  const auto y = sim_conv_forward(x4, layer.weight, {}, layer.kind);
  return y.reshaped({x.dim(0), layer.weight.dim(0)});
}

ConvGrads sim_dense_backward(const Tensor& x, const SimDense& layer, const Tensor& dy) {
  const auto x4 = x.reshaped(dense_as_conv(x.shape()));
  const auto dy4 = dy.reshaped({dy.dim(0), dy.ndim() == 2 ? dy.dim(1) : 0, 1, 1});
  auto g = sim_conv_backward(x4, layer.weight, {}, layer.kind, dy4);
  g.dx = g.dx.reshaped(x.shape());
  return g;
}

// --- batch norm --------------------------------------------------------------

Tensor batchnorm_forward(const Tensor& x, BatchNorm& layer, bool training, BatchNormCache* cache) {
  if (!training) {
    Tensor y = batchnorm_infer(x, layer);
    if (cache) {
      const auto lay = channel_layout(x);
      cache->training = false;
      cache->inv_std.resize(lay.channels);
      cache->xhat = Tensor(x.shape());
      for (std::size_t c = 0; c < lay.channels; ++c) {
        const float inv = 1.0f / std::sqrt(layer.running_var[c] + layer.eps);
        cache->inv_std[c] = inv;
        for (std::size_t n = 0; n < lay.batch; ++n) {
          const auto off = (n * lay.channels + c) * lay.spatial;
          for (std::size_t i = 0; i < lay.spatial; ++i) cache->xhat[off + i] = (x[off + i] - layer.running_mean[c]) * inv;
        }
      }
    }
    return y;
  }
  const auto lay = channel_layout(x);
  check_bn_channels(layer, lay.channels);
  const auto count = lay.batch * lay.spatial;
  if (count == 1) warn("batchnorm training on a single value per channel; variance clamped to eps");
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<float> inv_std(lay.channels);
  const float* xs = x.data().data();
  for (std::size_t c = 0; c < lay.channels; ++c) {
    // Shifted sums keep a constant channel's mean exact.
    const float shift = xs[c * lay.spatial];
    float s = 0.0f;
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const float* p = xs + (n * lay.channels + c) * lay.spatial;
      for (std::size_t i = 0; i < lay.spatial; ++i) s += p[i] - shift;
    }
    const float mean = shift + s / static_cast<float>(count);
    float ss = 0.0f;
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const float* p = xs + (n * lay.channels + c) * lay.spatial;
      for (std::size_t i = 0; i < lay.spatial; ++i) {
        const float d = p[i] - mean;
        ss += d * d;
      }
    }
    const float var = ss / static_cast<float>(count);
    inv_std[c] = 1.0f / std::sqrt(var + layer.eps);
    const float g = layer.gamma[c], b = layer.beta[c];
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const auto off = (n * lay.channels + c) * lay.spatial;
      for (std::size_t i = 0; i < lay.spatial; ++i) {
        const float h = (xs[off + i] - mean) * inv_std[c];
        xhat[off + i] = h;
        y[off + i] = g * h + b;
      }
    }
    if (!layer.freeze_stats) {
      const float m = layer.momentum;
      const float unbiased = count > 1 ? ss / static_cast<float>(count - 1) : var;
      layer.running_mean[c] = (1.0f - m) * layer.running_mean[c] + m * mean;
      layer.running_var[c] = std::max(0.0f, (1.0f - m) * layer.running_var[c] + m * unbiased);
    }
  }
  if (cache) {
    cache->training = true;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor batchnorm_infer(const Tensor& x, const BatchNorm& layer) {
  const auto lay = channel_layout(x);
  check_bn_channels(layer, lay.channels);
  Tensor y(x.shape());
  for (std::size_t c = 0; c < lay.channels; ++c) {
    const float inv = 1.0f / std::sqrt(layer.running_var[c] + layer.eps);
    const float mean = layer.running_mean[c], g = layer.gamma[c], b = layer.beta[c];
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const auto off = (n * lay.channels + c) * lay.spatial;
      for (std::size_t i = 0; i < lay.spatial; ++i) y[off + i] = g * ((x[off + i] - mean) * inv) + b;
    }
  }
  return y;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const BatchNorm& layer, const Tensor& dy) {
  const auto lay = channel_layout(dy);
  check_bn_channels(layer, lay.channels);
  BatchNormGrads g{Tensor(dy.shape()), Tensor({lay.channels}), Tensor({lay.channels})};
  const auto count = static_cast<float>(lay.batch * lay.spatial);
  for (std::size_t c = 0; c < lay.channels; ++c) {
    const float gamma = layer.gamma[c], inv = cache.inv_std[c];
    if (!cache.training) {
      float db = 0.0f, dg = 0.0f;
      for (std::size_t n = 0; n < lay.batch; ++n) {
        const auto off = (n * lay.channels + c) * lay.spatial;
        for (std::size_t i = 0; i < lay.spatial; ++i) {
          g.dx[off + i] = dy[off + i] * gamma * inv;
          db += dy[off + i];
          dg += dy[off + i] * cache.xhat[off + i];
        }
      }
      g.dbeta[c] = db;
      g.dgamma[c] = dg;
      continue;
    }
    float sum_dy = 0.0f, sum_dy_xhat = 0.0f;
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const auto off = (n * lay.channels + c) * lay.spatial;
      for (std::size_t i = 0; i < lay.spatial; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * cache.xhat[off + i];
      }
    }
    g.dgamma[c] = sum_dy_xhat;
    g.dbeta[c] = sum_dy;
    const float scale = gamma * inv / count;
    for (std::size_t n = 0; n < lay.batch; ++n) {
      const auto off = (n * lay.channels + c) * lay.spatial;
      for (std::size_t i = 0; i < lay.spatial; ++i)
        g.dx[off + i] = scale * (count * dy[off + i] - sum_dy - cache.xhat[off + i] * sum_dy_xhat);
    }
  }
  return g;
}

// --- pointwise and pooling -----------------------------------------------------

Tensor relu_forward(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (x.shape() != dy.shape()) throw Error(ErrorCode::Shape, "relu gradient shape mismatch");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
  return dx;
}

Tensor maxpool2x2_forward(const Tensor& x, std::vector<std::uint32_t>* argmax) {
  if (x.ndim() != 4) throw Error(ErrorCode::Shape, "maxpool expects [N,C,H,W], got " + shape_to_string(x.shape()));
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2)
    throw Error(ErrorCode::Shape, "2x2 max pool needs even spatial dims, got " + shape_to_string(x.shape()));
  const auto OH = H / 2, OW = W / 2;
  Tensor y({N, C, OH, OW});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow, ++o) {
        const std::size_t base = nc * H * W;
        std::size_t best = base + (2 * oh) * W + 2 * ow;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + (2 * oh + di) * W + 2 * ow + dj;
            if (x[idx] > x[best]) best = idx;
          }
        y[o] = x[best];
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
  return y;
}

Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax, const Tensor& dy) {
  if (argmax.size() != dy.size()) throw Error(ErrorCode::Shape, "maxpool gradient/argmax size mismatch");
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

Tensor flatten_forward(const Tensor& x) {
  if (x.ndim() < 2) throw Error(ErrorCode::Shape, "flatten expects at least 2 dims");
  return x.reshaped({x.dim(0), x.size() / x.dim(0)});
}

Tensor flatten_backward(const Shape& input_shape, const Tensor& dy) { return dy.reshaped(input_shape); }

// --- loss ----------------------------------------------------------------------

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw Error(ErrorCode::Shape, "logits must be [N,C], got " + shape_to_string(logits.shape()));
  const auto N = logits.dim(0), C = logits.dim(1);
  if (labels.size() != N)
    throw Error(ErrorCode::Label, "label count " + std::to_string(labels.size()) + " != batch " + std::to_string(N));
  LossResult out{0.0f, Tensor(logits.shape())};
  float total = 0.0f;
  for (std::size_t n = 0; n < N; ++n) {
    const int label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= C)
      throw Error(ErrorCode::Label, "label " + std::to_string(label) + " outside [0," + std::to_string(C) + ")");
    const float* z = logits.data().data() + n * C;
    const float zmax = *std::max_element(z, z + C);
    float sum = 0.0f;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - zmax);
    total += std::log(sum) - (z[label] - zmax);
    float* g = out.grad.data().data() + n * C;
    for (std::size_t c = 0; c < C; ++c) {
      const float p = std::exp(z[c] - zmax) / sum;
      g[c] = (p - (static_cast<std::size_t>(label) == c ? 1.0f : 0.0f)) / static_cast<float>(N);
    }
  }
  out.loss = total / static_cast<float>(N);
  return out;
}

// --- model ---------------------------------------------------------------------

void init_weights(Tensor& weight, std::mt19937_64& rng) {
  const auto fan_in = weight.size() / weight.dim(0);
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& v : weight.values()) v = dist(rng);
}

Model build_default_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.in_h % 4 || spec.in_w % 4)
    throw Error(ErrorCode::Config, "default model needs input H and W divisible by 4");
  if (spec.kernel % 2 == 0) throw Error(ErrorCode::Config, "default model needs an odd kernel size");
  std::mt19937_64 rng(seed);
  const int pad = static_cast<int>(spec.kernel / 2);
  Model m;
  m.input_shape = {spec.in_channels, spec.in_h, spec.in_w};
  m.class_count = spec.classes;
  SimConv2d c1{Tensor({spec.conv1, spec.in_channels, spec.kernel, spec.kernel}), {1, pad}, spec.kind};
  init_weights(c1.weight, rng);
  SimConv2d c2{Tensor({spec.conv2, spec.conv1, spec.kernel, spec.kernel}), {1, pad}, spec.kind};
  init_weights(c2.weight, rng);
  const auto features = spec.conv2 * (spec.in_h / 4) * (spec.in_w / 4);
  SimDense fc{Tensor({spec.classes, features, 1, 1}), spec.kind};
  init_weights(fc.weight, rng);
  m.layers = {std::move(c1), make_batchnorm(spec.conv1), ReLU{}, MaxPool2x2{},
              std::move(c2), make_batchnorm(spec.conv2), ReLU{}, MaxPool2x2{},
              Flatten{},     std::move(fc),              make_batchnorm(spec.classes)};
  validate_model(m);
  return m;
}

void set_similarity(Model& model, const SimilarityKind& kind) {
  for (auto& layer : model.layers) {
    if (auto* c = std::get_if<SimConv2d>(&layer)) c->kind = kind;
    if (auto* d = std::get_if<SimDense>(&layer)) d->kind = kind;
  }
}

void set_freeze_bn_stats(Model& model, bool freeze) {
  for (auto& layer : model.layers)
    if (auto* bn = std::get_if<BatchNorm>(&layer)) bn->freeze_stats = freeze;
}

namespace {

Shape output_shape(const Layer& layer, const Shape& in) {
  return std::visit(overloaded{
                        [&](const SimConv2d& l) -> Shape {
                          const auto g = conv_geometry(in, l.weight.shape(), l.params);
                          return {g.batch, g.out_channels, g.out_h, g.out_w};
                        },
                        [&](const SimDense& l) -> Shape {
                          if (in.size() != 2 || in[1] != l.weight.dim(1))
                            throw Error(ErrorCode::Shape, "dense layer expects [N," + std::to_string(l.weight.dim(1)) +
                                                              "], got " + shape_to_string(in));
                          return {in[0], l.weight.dim(0)};
                        },
                        [&](const BatchNorm& l) -> Shape {
                          if (in.size() < 2 || in[1] != l.gamma.size())
                            throw Error(ErrorCode::Shape, "batchnorm channel mismatch on " + shape_to_string(in));
                          return in;
                        },
                        [&](const ReLU&) -> Shape { return in; },
                        [&](const MaxPool2x2&) -> Shape {
                          if (in.size() != 4 || in[2] % 2 || in[3] % 2)
                            throw Error(ErrorCode::Shape, "2x2 max pool cannot take " + shape_to_string(in));
                          return {in[0], in[1], in[2] / 2, in[3] / 2};
                        },
                        [&](const Flatten&) -> Shape { return {in[0], shape_numel(in) / in[0]}; },
                    },
                    layer);
}

}  // namespace

void rethrow_with_layer(const Error& e, std::size_t index, const Layer& layer) {
  const std::string msg = "layer " + std::to_string(index) + " (" + layer_name(layer) + "): " + e.what();
  if (auto* ce = dynamic_cast<const CheckpointError*>(&e)) throw CheckpointError(ce->fault(), msg);
  throw Error(e.code(), msg);
}

void validate_model(const Model& model) {
  if (model.input_shape.size() != 3) throw Error(ErrorCode::Shape, "model input shape must be [C,H,W]");
  Shape s{1, model.input_shape[0], model.input_shape[1], model.input_shape[2]};
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    try {
      s = output_shape(model.layers[i], s);
    } catch (const Error& e) {
      rethrow_with_layer(e, i, model.layers[i]);
    }
  }
  if (s.size() != 2 || s[1] != model.class_count)
    throw Error(ErrorCode::Shape, "model output " + shape_to_string(s) + " does not have " +
                                      std::to_string(model.class_count) + " class columns");
}

Tensor model_forward(Model& model, const Tensor& x, bool training, ForwardTape* tape) {
  if (tape) tape->layers.assign(model.layers.size(), {});
  Tensor cur = x;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& layer = model.layers[i];
    LayerCache* cache = tape ? &tape->layers[i] : nullptr;
    try {
      Tensor next = std::visit(
          overloaded{
              [&](SimConv2d& l) { return sim_conv2d_forward(cur, l); },
              [&](SimDense& l) { return sim_dense_forward(cur, l); },
              [&](BatchNorm& l) { return batchnorm_forward(cur, l, training, cache ? &cache->bn : nullptr); },
              [&](ReLU&) { return relu_forward(cur); },
              [&](MaxPool2x2&) { return maxpool2x2_forward(cur, cache ? &cache->argmax : nullptr); },
              [&](Flatten&) { return flatten_forward(cur); },
          },
          layer);
      if (cache) cache->input = std::move(cur);
      cur = std::move(next);
    } catch (const Error& e) {
      rethrow_with_layer(e, i, layer);
    }
  }
  return cur;
}

Tensor layer_infer(const Layer& layer, const Tensor& x) {
  return std::visit(overloaded{
                        [&](const SimConv2d& l) { return sim_conv2d_forward(x, l); },
                        [&](const SimDense& l) { return sim_dense_forward(x, l); },
                        [&](const BatchNorm& l) { return batchnorm_infer(x, l); },
                        [&](const ReLU&) { return relu_forward(x); },
                        [&](const MaxPool2x2&) { return maxpool2x2_forward(x); },
                        [&](const Flatten&) { return flatten_forward(x); },
                    },
                    layer);
}

Tensor model_infer(const Model& model, const Tensor& x) {
  Tensor cur = x;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    try {
      cur = layer_infer(model.layers[i], cur);
    } catch (const Error& e) {
      rethrow_with_layer(e, i, model.layers[i]);
    }
  }
  return cur;
}

GradientSet model_backward(const Model& model, const ForwardTape& tape, const Tensor& dlogits) {
  if (tape.layers.size() != model.layers.size())
    throw Error(ErrorCode::Shape, "forward tape does not match the model");
  GradientSet grads;
  Tensor cur = dlogits;
  for (std::size_t idx = model.layers.size(); idx-- > 0;) {
    const auto& layer = model.layers[idx];
    const auto& cache = tape.layers[idx];
    try {
      cur = std::visit(overloaded{
                           [&](const SimConv2d& l) {
                             auto g = sim_conv2d_backward(cache.input, l, cur);
                             grads.push_back({idx, "weight", std::move(g.dw)});
                             return std::move(g.dx);
                           },
                           [&](const SimDense& l) {
                             auto g = sim_dense_backward(cache.input, l, cur);
                             grads.push_back({idx, "weight", std::move(g.dw)});
                             return std::move(g.dx);
                           },
                           [&](const BatchNorm& l) {
                             auto g = batchnorm_backward(cache.bn, l, cur);
                             grads.push_back({idx, "beta", std::move(g.dbeta)});
                             grads.push_back({idx, "gamma", std::move(g.dgamma)});
                             return std::move(g.dx);
                           },
                           [&](const ReLU&) { return relu_backward(cache.input, cur); },
                           [&](const MaxPool2x2&) {
                             return maxpool2x2_backward(cache.input.shape(), cache.argmax, cur);
                           },
                           [&](const Flatten&) { return flatten_backward(cache.input.shape(), cur); },
                       },
                       layer);
    } catch (const Error& e) {
      rethrow_with_layer(e, idx, layer);
    }
  }
  std::reverse(grads.begin(), grads.end());
  return grads;
}

std::vector<ParamRef> model_parameters(Model& model) {
  std::vector<ParamRef> params;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& layer = model.layers[i];
    if (auto* c = std::get_if<SimConv2d>(&layer)) params.push_back({i, "weight", &c->weight, true});
    if (auto* d = std::get_if<SimDense>(&layer)) params.push_back({i, "weight", &d->weight, true});
    if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      params.push_back({i, "gamma", &bn->gamma, false});
      params.push_back({i, "beta", &bn->beta, false});
    }
  }
  return params;
}

std::vector<NamedTensor> model_state(Model& model) {
  std::vector<NamedTensor> state;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const std::string prefix = "layer" + std::to_string(i) + ".";
    auto& layer = model.layers[i];
    if (auto* c = std::get_if<SimConv2d>(&layer)) state.push_back({prefix + "weight", &c->weight});
    if (auto* d = std::get_if<SimDense>(&layer)) state.push_back({prefix + "weight", &d->weight});
    if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      state.push_back({prefix + "gamma", &bn->gamma});
      state.push_back({prefix + "beta", &bn->beta});
      state.push_back({prefix + "running_mean", &bn->running_mean});
      state.push_back({prefix + "running_var", &bn->running_var});
    }
  }
  return state;
}

}  // namespace euclidnet
