#pragma once

#include <cstdint>

#include "euclidnet/data.hpp"

namespace euclidnet {

struct SynthDigitsOptions {
  std::size_t count = 1000;
  std::size_t size = 28;  // square images, size x size
  std::uint64_t seed = 1;
  float noise = 0.06f;    // std of additive pixel noise before clamping
};

/// Handwriting-like 10-class digit images: stroke glyphs rendered with
/// anti-aliasing under random affine jitter, stroke width and noise.
/// Labels cycle through 0..9 in a seeded random order. Pixels are rounded to
/// multiples of 1/255 so the set survives an IDX round trip unchanged.
Dataset make_synthetic_digits(const SynthDigitsOptions& opts);

}  // namespace euclidnet
