#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "euclidnet/data.hpp"
#include "euclidnet/nn.hpp"

// Input perturbation sweeps. Perturbations act on raw [0,1] pixels, before the
// model's normalization.

namespace euclidnet {

struct TransformGrid {
  std::vector<float> a_values;  // contrast
  std::vector<float> b_values;  // brightness
  bool clip = false;            // clamp perturbed pixels to [0,1]
};

struct BlurGrid {
  std::vector<float> sigmas;
  std::vector<int> kernel_sizes;
};

TransformGrid default_transform_grid();
BlurGrid default_blur_grid();

void validate(const TransformGrid& grid);
void validate(const BlurGrid& grid);

/// a * x + b elementwise.
Tensor pixel_transform(const Tensor& images, float a, float b, bool clip = false);

/// Normalized ksize x ksize Gaussian, row-major. sigma = 0 gives the delta kernel.
std::vector<float> gaussian_kernel(float sigma, int ksize);

/// Per-channel 2D convolution with gaussian_kernel, reflect padding.
Tensor gaussian_blur(const Tensor& images, float sigma, int ksize);

/// x + N(0, sigma^2) per pixel from a seeded generator.
Tensor additive_noise(const Tensor& images, float sigma, std::uint64_t seed);

struct SweepCell {
  float p1 = 0.0f;  // a or sigma
  float p2 = 0.0f;  // b or kernel size
  float top1 = 0.0f;
};

enum class SweepKind { Transform, Blur, Noise };

struct SweepResult {
  std::string label;  // model similarity, e.g. "euclid"
  SweepKind kind = SweepKind::Transform;
  std::vector<SweepCell> cells;

  const SweepCell* find(float p1, float p2) const;
};

SweepResult sweep_transform(const Model& model, const Dataset& data, const NormStats& norm, const TransformGrid& grid);
SweepResult sweep_blur(const Model& model, const Dataset& data, const NormStats& norm, const BlurGrid& grid);
/// Additive noise per sigma; cell i draws from seed + i and p2 is 0.
SweepResult sweep_noise(const Model& model, const Dataset& data, const NormStats& norm,
                        const std::vector<float>& sigmas, std::uint64_t seed);

/// Header `kind,param_a_or_sigma,param_b_or_ksize,top1`.
std::string sweep_csv(const std::vector<SweepResult>& results);

struct DeltaCell {
  float p1 = 0.0f;
  float p2 = 0.0f;
  float top1_a = 0.0f;
  float top1_b = 0.0f;
  float delta_top1 = 0.0f;  // top1_a - top1_b
};

/// Cellwise difference of two sweeps over the same grid.
std::vector<DeltaCell> delta_grid(const SweepResult& a, const SweepResult& b);
std::string delta_csv(const SweepResult& a, const SweepResult& b, const std::vector<DeltaCell>& cells);

}  // namespace euclidnet
