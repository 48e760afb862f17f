#include "euclidnet/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <variant>

#include "json.hpp"

#include "byte_io.hpp"
#include "euclidnet/error.hpp"
#include "euclidnet/io.hpp"
#include "euclidnet/train.hpp"

namespace euclidnet {

namespace {

constexpr char kQuantMagic[4] = {'E', 'U', 'C', 'Q'};
constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeI8 = 1;

float max_abs(const Tensor& t) {
  float m = 0.0f;
  for (float v : t.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NumericInput, "non-finite value in calibration data");
    m = std::max(m, std::fabs(v));
  }
  return m;
}

float max_roundtrip_err(const Tensor& t, const QuantParams& p) {
  float m = 0.0f;
  for (float v : t.values()) {
    const float back = static_cast<float>(quantize_value(v, p)) * p.scale;
    m = std::max(m, std::fabs(back - v));
  }
  return m;
}

const SimilarityKind* layer_kind(const Layer& layer) {
  if (auto* c = std::get_if<SimConv2d>(&layer)) return &c->kind;
  if (auto* d = std::get_if<SimDense>(&layer)) return &d->kind;
  return nullptr;
}

const Tensor& layer_weight(const Layer& layer) {
  if (auto* c = std::get_if<SimConv2d>(&layer)) return c->weight;
  return std::get<SimDense>(layer).weight;
}

Tensor& layer_weight(Layer& layer) {
  if (auto* c = std::get_if<SimConv2d>(&layer)) return c->weight;
  return std::get<SimDense>(layer).weight;
}

// Dense layers run as 1x1 convolutions over [N, in, 1, 1].
Tensor as_conv_input(const Layer& layer, const Tensor& x) {
  if (std::holds_alternative<SimDense>(layer)) return x.reshaped({x.dim(0), x.size() / x.dim(0), 1, 1});
  return x;
}

ConvParams layer_conv_params(const Layer& layer) {
  if (auto* c = std::get_if<SimConv2d>(&layer)) return c->params;
  return {};
}

Tensor quantized_layer(const Layer& layer, const QuantLayer& ql, const SquareLut& lut, const Tensor& x) {
  const auto qx = quantize(as_conv_input(layer, x), ql.params);
  auto y = qeuclid_conv2d(qx, ql.weight, lut, layer_conv_params(layer));
  if (std::holds_alternative<SimDense>(layer)) y = y.reshaped({y.dim(0), y.dim(1)});
  return y;
}

}  // namespace

void validate(const QuantParams& params) {
  if (params.bits < 2 || params.bits > 12)
    throw Error(ErrorCode::Config, "quantization bits " + std::to_string(params.bits) + " outside [2,12]");
  if (!(params.scale > 0.0f) || !std::isfinite(params.scale))
    throw Error(ErrorCode::Quantization, "quantization scale must be finite and > 0");
}

QuantParams calibrate_max_abs(float max_abs_value, int bits) {
  QuantParams p{1.0f, bits};
  if (bits < 2 || bits > 12) throw Error(ErrorCode::Config, "quantization bits " + std::to_string(bits) + " outside [2,12]");
  if (!std::isfinite(max_abs_value)) throw Error(ErrorCode::NumericInput, "non-finite calibration maximum");
  if (max_abs_value == 0.0f) {
    warn("degenerate calibration: all values are zero, using scale 1");
    return p;
  }
  p.scale = max_abs_value / static_cast<float>(p.qmax());
  return p;
}

QuantParams calibrate(std::span<const Tensor> tensors, int bits) {
  bool any = false;
  float m = 0.0f;
  for (const auto& t : tensors) {
    any = any || t.size() > 0;
    m = std::max(m, max_abs(t));
  }
  if (!any) throw Error(ErrorCode::Quantization, "calibration needs at least one value");
  return calibrate_max_abs(m, bits);
}

std::int32_t quantize_value(float x, const QuantParams& params) {
  const auto qmax = static_cast<double>(params.qmax());
  double r = std::round(static_cast<double>(x) / static_cast<double>(params.scale));
  if (std::isnan(r)) r = 0.0;
  return static_cast<std::int32_t>(std::clamp(r, -qmax, qmax));
}

QTensor quantize(const Tensor& t, const QuantParams& params) {
  validate(params);
  if (params.bits > 8) throw Error(ErrorCode::Config, "int8 storage holds at most 8 bits");
  QTensor q{t.shape(), std::vector<std::int8_t>(t.size()), params};
  for (std::size_t i = 0; i < t.size(); ++i) q.data[i] = static_cast<std::int8_t>(quantize_value(t[i], params));
  return q;
}

Tensor dequantize(const QTensor& q) {
  Tensor t(q.shape);
  for (std::size_t i = 0; i < q.size(); ++i) t[i] = static_cast<float>(q.data[i]) * q.params.scale;
  return t;
}

SquareLut::SquareLut(int bits) : bits_(bits) {
  if (bits < 2 || bits > 12) throw Error(ErrorCode::Config, "square table bits " + std::to_string(bits) + " outside [2,12]");
  offset_ = (1 << bits) - 1;
  table_.resize(static_cast<std::size_t>(2 * offset_ + 1));
  for (std::int32_t d = -offset_; d <= offset_; ++d)
    table_[static_cast<std::size_t>(d + offset_)] = static_cast<std::uint32_t>(d * d);
}

std::uint32_t SquareLut::at(std::int32_t d) const {
  if (d < -offset_ || d > offset_) throw Error(ErrorCode::Range, "difference " + std::to_string(d) + " outside the table");
  return (*this)[d];
}

SquareLut build_square_lut(int bits) { return SquareLut(bits); }

Tensor qeuclid_conv2d(const QTensor& qx, const QTensor& qw, const SquareLut& lut, ConvParams params) {
  if (!(qx.params == qw.params))
    throw Error(ErrorCode::Quantization, "activation and weight quantization parameters differ (scale " +
                                             std::to_string(qx.params.scale) + " vs " + std::to_string(qw.params.scale) +
                                             ")");
  validate(qx.params);
  if (lut.max_diff() < 2 * qx.params.qmax())
    throw Error(ErrorCode::Quantization, "square table too small for " + std::to_string(qx.params.bits) + "-bit operands");
  const auto g = conv_geometry(qx.shape, qw.shape, params);
  const double half_s2 = 0.5 * static_cast<double>(qx.params.scale) * static_cast<double>(qx.params.scale);
  Tensor y({g.batch, g.out_channels, g.out_h, g.out_w});
  const auto C = g.in_channels, H = g.in_h, W = g.in_w, KH = g.kernel_h, KW = g.kernel_w;
  const auto OH = g.out_h, OW = g.out_w, L = g.out_channels;
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto stride = g.stride;
  const auto total = static_cast<std::ptrdiff_t>(g.batch * L);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t nl = 0; nl < total; ++nl) {
    const auto n = static_cast<std::size_t>(nl) / L, l = static_cast<std::size_t>(nl) % L;
    const std::int8_t* xs = qx.data.data() + n * C * H * W;
    const std::int8_t* ws = qw.data.data() + l * C * KH * KW;
    float* out = y.data().data() + (n * L + l) * OH * OW;
    for (std::size_t oh = 0; oh < OH; ++oh)
      for (std::size_t ow = 0; ow < OW; ++ow) {
        std::int64_t acc = 0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < KH; ++i) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
            for (std::size_t j = 0; j < KW; ++j) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * stride + j) - pad;
              const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(H) &&
                                  iw < static_cast<std::ptrdiff_t>(W);
              const std::int32_t xv =
                  inside ? xs[(c * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)] : 0;
              acc += lut[xv - ws[(c * KH + i) * KW + j]];
            }
          }
        out[oh * OW + ow] = static_cast<float>(-half_s2 * static_cast<double>(acc));
      }
  }
  return y;
}

QuantizedModel quantize_model(const Model& model, const Dataset& calib, const NormStats& norm, int bits,
                              std::size_t batch_size) {
  if (bits < 2 || bits > 8) throw Error(ErrorCode::Config, "quantization bits " + std::to_string(bits) + " outside [2,8]");
  if (calib.size() == 0) throw Error(ErrorCode::Data, "calibration set is empty");
  std::vector<std::size_t> sim_layers;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto* kind = layer_kind(model.layers[i]);
    if (!kind) continue;
    if (kind->tag != SimTag::Euclid)
      throw Error(ErrorCode::Quantization, "layer " + std::to_string(i) + " (" + layer_name(model.layers[i]) +
                                               ") has unsupported similarity " + to_string(*kind) +
                                               "; only euclid layers quantize");
    sim_layers.push_back(i);
  }
  std::vector<float> act_max(model.layers.size(), 0.0f);
  auto it = batches(calib, batch_size, 0, false);
  while (auto batch = it.next()) {
    Tensor cur = normalize(batch->images, norm);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (layer_kind(model.layers[i])) act_max[i] = std::max(act_max[i], max_abs(cur));
      cur = layer_infer(model.layers[i], cur);
    }
  }
  QuantizedModel qm{model, {}, bits};
  for (auto i : sim_layers) {
    const auto& w = layer_weight(model.layers[i]);
    const auto params = calibrate_max_abs(std::max(max_abs(w), act_max[i]), bits);
    QuantLayer ql{i, params, quantize(w, params)};
    layer_weight(qm.model.layers[i]) = dequantize(ql.weight);
    qm.layers.push_back(std::move(ql));
  }
  return qm;
}

Tensor quantized_infer(const QuantizedModel& qm, const Tensor& x) {
  const SquareLut lut(qm.bits);
  Tensor cur = x;
  auto next_q = qm.layers.begin();
  for (std::size_t i = 0; i < qm.model.layers.size(); ++i) {
    const auto& layer = qm.model.layers[i];
    try {
      if (next_q != qm.layers.end() && next_q->layer == i) {
        cur = quantized_layer(layer, *next_q, lut, cur);
        ++next_q;
      } else {
        cur = layer_infer(layer, cur);
      }
    } catch (const Error& e) {
      rethrow_with_layer(e, i, layer);
    }
  }
  return cur;
}

float quantized_top1(const QuantizedModel& qm, const Dataset& data, const NormStats& norm, std::size_t batch_size) {
  if (data.size() == 0) throw Error(ErrorCode::Data, "evaluation set is empty");
  double hits = 0.0;
  auto it = batches(data, batch_size, 0, false);
  while (auto batch = it.next()) {
    const auto logits = quantized_infer(qm, normalize(batch->images, norm));
    hits += static_cast<double>(topk_accuracy(logits, batch->labels, 1)) * static_cast<double>(batch->labels.size());
  }
  return static_cast<float>(hits / static_cast<double>(data.size()));
}

QuantizeOutcome quantize_and_report(const Model& model, const NormStats& norm, const Dataset& calib,
                                    const Dataset& eval, int bits) {
  QuantizeOutcome out{quantize_model(model, calib, norm, bits), {}};
  auto& rep = out.report;
  rep.bits = bits;
  rep.calib_count = calib.size();
  rep.eval_count = eval.size();

  const SquareLut lut(bits);
  for (const auto& ql : out.model.layers) {
    const auto& layer = model.layers[ql.layer];
    rep.per_layer.push_back({"layer" + std::to_string(ql.layer) + "." + layer_name(layer), ql.params.scale,
                             max_roundtrip_err(layer_weight(layer), ql.params), 0.0f});
  }
  bool first = true;
  auto it = batches(calib, 256, 0, false);
  while (auto batch = it.next()) {
    Tensor cur = normalize(batch->images, norm);
    std::size_t q = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      if (q < out.model.layers.size() && out.model.layers[q].layer == i) {
        auto& lr = rep.per_layer[q];
        lr.max_err = std::max(lr.max_err, max_roundtrip_err(cur, out.model.layers[q].params));
        if (first) {
          const auto yq = quantized_layer(model.layers[i], out.model.layers[q], lut, cur);
          const auto yf = layer_infer(model.layers[i], cur);
          for (std::size_t k = 0; k < yf.size(); ++k) lr.output_err = std::max(lr.output_err, std::fabs(yq[k] - yf[k]));
        }
        ++q;
      }
      cur = layer_infer(model.layers[i], cur);
    }
    first = false;
  }

  rep.top1_float = evaluate(model, eval, norm).top1;
  rep.top1_quant = quantized_top1(out.model, eval, norm);
  rep.top1_quant_calib_on_eval = quantized_top1(quantize_model(model, eval, norm, bits), eval, norm);
  return out;
}

std::string report_json(const QuantReport& report) {
  nlohmann::ordered_json j;
  j["bits"] = report.bits;
  j["per_layer"] = nlohmann::ordered_json::array();
  for (const auto& l : report.per_layer)
    j["per_layer"].push_back({{"name", l.name}, {"scale", l.scale}, {"max_err", l.max_err}, {"output_err", l.output_err}});
  j["top1_float"] = report.top1_float;
  j["top1_quant"] = report.top1_quant;
  j["top1_quant_calib_on_eval"] = report.top1_quant_calib_on_eval;
  j["calib_count"] = report.calib_count;
  j["eval_count"] = report.eval_count;
  return j.dump(2) + "\n";
}

std::vector<std::uint8_t> encode_quantized_checkpoint(const QuantizedModel& qm, const NormStats& norm,
                                                      const CheckpointMeta& meta) {
  const auto ckpt = make_checkpoint(qm.model, norm, meta);
  detail::Writer w;
  w.put_bytes(kQuantMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(meta.epoch);
  w.put<float>(meta.lambda);
  w.put<std::uint64_t>(meta.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& r : ckpt.tensors) {
    const QuantLayer* ql = nullptr;
    for (const auto& l : qm.layers)
      if (r.name == "layer" + std::to_string(l.layer) + ".weight") ql = &l;
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.name.size()));
    w.put_bytes(r.name.data(), r.name.size());
    w.put<std::uint8_t>(ql ? kDtypeI8 : kDtypeF32);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.value.ndim()));
    for (auto d : r.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    if (ql) {
      w.put<float>(ql->params.scale);
      w.put<std::uint8_t>(static_cast<std::uint8_t>(ql->params.bits));
      w.put_bytes(ql->weight.data.data(), ql->weight.size());
    } else {
      w.put_bytes(r.value.data().data(), r.value.size() * sizeof(float));
    }
  }
  return w.take();
}

void quantized_checkpoint_save(const QuantizedModel& qm, const NormStats& norm, const CheckpointMeta& meta,
                               const std::filesystem::path& path) {
  write_file_atomic(path, encode_quantized_checkpoint(qm, norm, meta));
}

LoadedQuantized decode_quantized_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kQuantMagic, 4) != 0) throw CheckpointError(CheckpointFault::BadMagic, "bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointFault::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                                                " unsupported (expected " +
                                                                std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  ckpt.meta.epoch = r.get<std::uint32_t>("epoch");
  ckpt.meta.lambda = r.get<float>("lambda");
  ckpt.meta.seed = r.get<std::uint64_t>("seed");
  std::vector<std::pair<std::string, QTensor>> quantized;
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    TensorRecord rec;
    rec.name.resize(r.get<std::uint16_t>("name length"));
    r.get_bytes(rec.name.data(), rec.name.size(), "name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    const auto ndim = r.get<std::uint8_t>("ndim");
    Shape shape(ndim);
    for (auto& d : shape) d = r.get<std::uint32_t>("dims");
    const auto numel = shape_numel(shape);
    if (ndim == 0 || numel == 0 || numel > r.size() - r.pos())
      throw CheckpointError(CheckpointFault::Truncated, "truncated checkpoint: tensor " + rec.name + " at offset " +
                                                            std::to_string(r.pos()));
    if (dtype == kDtypeI8) {
      QTensor q{shape, std::vector<std::int8_t>(numel), {}};
      q.params.scale = r.get<float>("scale");
      q.params.bits = r.get<std::uint8_t>("bits");
      r.get_bytes(q.data.data(), numel, "int8 data");
      try {
        validate(q.params);
      } catch (const Error& e) {
        throw CheckpointError(CheckpointFault::Incompatible, rec.name + ": " + e.what());
      }
      rec.value = dequantize(q);
      quantized.emplace_back(rec.name, std::move(q));
    } else if (dtype == kDtypeF32) {
      std::vector<float> data(numel);
      r.get_bytes(data.data(), numel * sizeof(float), "tensor data");
      rec.value = Tensor(std::move(shape), std::move(data));
    } else {
      throw CheckpointError(CheckpointFault::Incompatible, "unknown dtype " + std::to_string(dtype) + " for " + rec.name);
    }
    ckpt.tensors.push_back(std::move(rec));
  }
  if (r.pos() != r.size())
    throw CheckpointError(CheckpointFault::Truncated, "trailing bytes after checkpoint at offset " +
                                                          std::to_string(r.pos()));
  LoadedQuantized out{{model_from_checkpoint(ckpt), {}, 8}, norm_from_checkpoint(ckpt), ckpt.meta};
  for (auto& [name, q] : quantized) {
    const auto idx = static_cast<std::size_t>(std::stoul(name.substr(5, name.find('.') - 5)));
    out.model.bits = q.params.bits;
    out.model.layers.push_back({idx, q.params, std::move(q)});
  }
  std::sort(out.model.layers.begin(), out.model.layers.end(),
            [](const QuantLayer& a, const QuantLayer& b) { return a.layer < b.layer; });
  return out;
}

}  // namespace euclidnet
