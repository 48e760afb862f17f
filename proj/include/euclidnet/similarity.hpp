#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace euclidnet {

enum class SimTag : std::uint8_t { Conv = 0, Euclid = 1, Adder = 2, Mfo = 3, Synapse = 4, Homotopy = 5 };

/// Gradient rule used for the non-smooth L1 similarity.
enum class AdderGrad : std::uint8_t {
  Clipped,  // HardTanh-clipped difference, the AdderNet full-precision rule
  Sign,     // exact subgradient sign(.) of -|x - w|
};

/// Similarity measure S(x, w) replacing the product inside a layer's reduction.
struct SimilarityKind {
  SimTag tag = SimTag::Conv;
  float lambda = 0.0f;  // only meaningful for Homotopy, in [0, 1]
  AdderGrad adder_grad = AdderGrad::Clipped;

  static SimilarityKind conv() { return {SimTag::Conv}; }
  static SimilarityKind euclid() { return {SimTag::Euclid}; }
  static SimilarityKind adder(AdderGrad rule = AdderGrad::Clipped) { return {SimTag::Adder, 0.0f, rule}; }
  static SimilarityKind mfo() { return {SimTag::Mfo}; }
  static SimilarityKind synapse() { return {SimTag::Synapse}; }
  static SimilarityKind homotopy(float lambda);

  friend bool operator==(const SimilarityKind&, const SimilarityKind&) = default;
};

std::string to_string(const SimilarityKind& kind);
std::string_view tag_name(SimTag tag);
/// Parses "conv", "euclid", "adder", "mfo", "synapse" or "homotopy[:lambda]".
std::optional<SimilarityKind> parse_similarity(std::string_view text);

// Scalar building blocks shared by sim_eval and the layer kernels so that both
// produce identical bits for identical operands.
namespace term {

inline float sign(float v) noexcept { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

inline float conv(float x, float w) noexcept { return x * w; }
inline float euclid(float x, float w) noexcept {
  const float d = x - w;
  return -0.5f * (d * d);
}
inline float adder(float x, float w) noexcept { return -std::fabs(x - w); }
inline float mfo(float x, float w) noexcept {
  return sign(x) * sign(w) * (std::fabs(x) + std::fabs(w));
}
inline float synapse(float x, float w) noexcept {
  return sign(x) * sign(w) * std::fmin(std::fabs(x), std::fabs(w));
}
// Convex blend (1 - l) * xw + l * euclid(x, w); algebraically xw - l (x^2 + w^2) / 2,
// and exact at both endpoints.
inline float homotopy(float x, float w, float lambda) noexcept {
  return (1.0f - lambda) * conv(x, w) + lambda * euclid(x, w);
}

inline float clip_unit(float v) noexcept { return v > 1.0f ? 1.0f : (v < -1.0f ? -1.0f : v); }

// Partial derivatives with respect to x and w.
inline float conv_dx(float, float w) noexcept { return w; }
inline float conv_dw(float x, float) noexcept { return x; }
inline float euclid_dx(float x, float w) noexcept { return w - x; }
inline float euclid_dw(float x, float w) noexcept { return x - w; }
inline float homotopy_dx(float x, float w, float lambda) noexcept { return w - lambda * x; }
inline float homotopy_dw(float x, float w, float lambda) noexcept { return x - lambda * w; }
inline float adder_dx(float x, float w, AdderGrad rule) noexcept {
  return rule == AdderGrad::Clipped ? clip_unit(w - x) : sign(w - x);
}
inline float adder_dw(float x, float w, AdderGrad rule) noexcept {
  return rule == AdderGrad::Clipped ? clip_unit(x - w) : sign(x - w);
}
inline float mfo_dx(float, float w) noexcept { return sign(w); }
inline float mfo_dw(float x, float) noexcept { return sign(x); }
inline float synapse_dx(float x, float w) noexcept {
  return std::fabs(x) < std::fabs(w) ? sign(w) : 0.0f;
}
inline float synapse_dw(float x, float w) noexcept {
  return std::fabs(w) < std::fabs(x) ? sign(x) : 0.0f;
}

}  // namespace term

struct SimGrad {
  float dx = 0.0f;
  float dw = 0.0f;
};

/// S(x, w) for the given kind. Throws ErrorCode::NumericInput on NaN/Inf.
float sim_eval(const SimilarityKind& kind, float x, float w);
SimGrad sim_grad(const SimilarityKind& kind, float x, float w);

/// Linear lambda ramp from lambda0 to exactly 1 over `epochs` steps.
struct HomotopySchedule {
  float lambda0 = 0.1f;
  int epochs = 1;
};

void validate(const HomotopySchedule& sched);
float lambda_at(const HomotopySchedule& sched, int k);

float cosine_similarity(std::span<const float> x, std::span<const float> w);

/// Sum of pointwise Euclid similarities over two equally sized vectors.
float euclid_sum(std::span<const float> x, std::span<const float> w);

}  // namespace euclidnet
