#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "euclidnet/checkpoint.hpp"
#include "euclidnet/data.hpp"
#include "euclidnet/kernels.hpp"
#include "euclidnet/nn.hpp"

// Symmetric post-training quantization for Euclid layers.
//
// Activations entering a similarity layer and that layer's weights share one
// scale, so qx - qw is a plain integer and (qx - qw)^2 comes from a table.

namespace euclidnet {

struct QuantParams {
  float scale = 1.0f;
  int bits = 8;

  int qmax() const noexcept { return (1 << (bits - 1)) - 1; }
  bool operator==(const QuantParams&) const = default;
};

void validate(const QuantParams& params);

/// scale = max|v| / (2^(bits-1) - 1) over every tensor given. An all-zero
/// input falls back to scale 1 and emits a warning.
QuantParams calibrate(std::span<const Tensor> tensors, int bits = 8);
QuantParams calibrate_max_abs(float max_abs, int bits = 8);

struct QTensor {
  Shape shape;
  std::vector<std::int8_t> data;
  QuantParams params;

  std::size_t size() const noexcept { return data.size(); }
};

/// round(x / scale), half away from zero, saturated to +-(2^(bits-1) - 1).
std::int32_t quantize_value(float x, const QuantParams& params);
QTensor quantize(const Tensor& t, const QuantParams& params);
Tensor dequantize(const QTensor& q);

/// Squares of every difference of two in-range integers, d in [-(2^bits - 1), 2^bits - 1].
class SquareLut {
 public:
  explicit SquareLut(int bits = 8);

  int bits() const noexcept { return bits_; }
  std::int32_t max_diff() const noexcept { return offset_; }
  std::size_t size() const noexcept { return table_.size(); }
  std::uint32_t operator[](std::int32_t d) const noexcept { return table_[static_cast<std::size_t>(d + offset_)]; }
  std::uint32_t at(std::int32_t d) const;

 private:
  int bits_;
  std::int32_t offset_;
  std::vector<std::uint32_t> table_;
};

SquareLut build_square_lut(int bits);

/// Integer Euclid convolution: per output acc = sum lut[qx - qw] (i64, patch
/// order c, i, j with zero padding), y = -scale^2 * acc / 2 evaluated in double
/// and rounded once to f32. qx [N,C,H,W], qw [L,C,kh,kw]; both must carry the
/// same QuantParams.
Tensor qeuclid_conv2d(const QTensor& qx, const QTensor& qw, const SquareLut& lut, ConvParams params);

struct QuantLayer {
  std::size_t layer = 0;  // index into the model's layers
  QuantParams params;
  QTensor weight;
};

struct QuantizedModel {
  Model model;  // float layers; similarity weights are replaced by their dequantized values
  std::vector<QuantLayer> layers;
  int bits = 8;
};

/// Calibrates each Euclid layer's shared scale from its weights and the largest
/// activation reaching it over `calib` (inference mode, normalized with `norm`).
/// Any non-Euclid similarity layer is rejected.
QuantizedModel quantize_model(const Model& model, const Dataset& calib, const NormStats& norm, int bits = 8,
                              std::size_t batch_size = 256);

/// Inference with integer kernels for every similarity layer; other layers in f32.
Tensor quantized_infer(const QuantizedModel& qm, const Tensor& x);

struct QuantLayerReport {
  std::string name;
  float scale = 0.0f;
  float max_err = 0.0f;      // largest |dequantize(quantize(v)) - v| over weights and calibration inputs
  float output_err = 0.0f;   // largest |quantized - float| layer output on the first calibration batch
};

struct QuantReport {
  int bits = 8;
  std::vector<QuantLayerReport> per_layer;
  float top1_float = 0.0f;
  float top1_quant = 0.0f;
  float top1_quant_calib_on_eval = 0.0f;  // same model calibrated on the evaluation set itself
  std::size_t calib_count = 0;
  std::size_t eval_count = 0;
};

struct QuantizeOutcome {
  QuantizedModel model;
  QuantReport report;
};

/// Quantizes with `calib`, then measures float and quantized top-1 on `eval`.
QuantizeOutcome quantize_and_report(const Model& model, const NormStats& norm, const Dataset& calib,
                                    const Dataset& eval, int bits = 8);

float quantized_top1(const QuantizedModel& qm, const Dataset& data, const NormStats& norm, std::size_t batch_size = 256);

std::string report_json(const QuantReport& report);

// Quantized checkpoint: the float container's layout with magic "EUCQ" and a
// dtype byte per tensor (0 = f32, 1 = int8). int8 payloads are preceded by
// their f32 scale and u8 bit width.
std::vector<std::uint8_t> encode_quantized_checkpoint(const QuantizedModel& qm, const NormStats& norm,
                                                      const CheckpointMeta& meta);
void quantized_checkpoint_save(const QuantizedModel& qm, const NormStats& norm, const CheckpointMeta& meta,
                               const std::filesystem::path& path);

struct LoadedQuantized {
  QuantizedModel model;
  NormStats norm;
  CheckpointMeta meta;
};

LoadedQuantized decode_quantized_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace euclidnet
