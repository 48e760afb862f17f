#include "euclidnet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "euclidnet/error.hpp"

namespace euclidnet {

namespace {

struct Pt {
  float x, y;
};

using Stroke = std::vector<Pt>;
using Glyph = std::vector<Stroke>;

constexpr float kPi = 3.14159265358979f;

Stroke arc(float cx, float cy, float rx, float ry, float deg0, float deg1, int steps = 16) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const float a = (deg0 + (deg1 - deg0) * static_cast<float>(i) / static_cast<float>(steps)) * kPi / 180.0f;
    s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return s;
}

// Unit-square glyphs, y pointing down.
const std::array<Glyph, 10>& glyphs() {
  static const std::array<Glyph, 10> g = {
      Glyph{arc(0.5f, 0.5f, 0.26f, 0.38f, 0.0f, 360.0f, 24)},
      Glyph{{{0.36f, 0.24f}, {0.52f, 0.1f}, {0.52f, 0.9f}}},
      Glyph{arc(0.5f, 0.32f, 0.23f, 0.2f, 190.0f, 380.0f), {{0.7f, 0.42f}, {0.25f, 0.9f}, {0.78f, 0.9f}}},
      Glyph{arc(0.48f, 0.3f, 0.22f, 0.18f, 200.0f, 450.0f), arc(0.48f, 0.68f, 0.25f, 0.22f, 270.0f, 520.0f)},
      Glyph{{{0.66f, 0.9f}, {0.66f, 0.1f}, {0.2f, 0.64f}, {0.82f, 0.64f}}},
      Glyph{{{0.74f, 0.1f}, {0.34f, 0.1f}, {0.3f, 0.45f}}, arc(0.5f, 0.64f, 0.25f, 0.24f, 225.0f, 510.0f)},
      Glyph{arc(0.5f, 0.66f, 0.23f, 0.22f, 0.0f, 360.0f, 20),
            {{0.7f, 0.12f}, {0.5f, 0.2f}, {0.35f, 0.36f}, {0.28f, 0.55f}, {0.28f, 0.66f}}},
      Glyph{{{0.22f, 0.1f}, {0.78f, 0.1f}, {0.42f, 0.9f}}},
      Glyph{arc(0.5f, 0.3f, 0.19f, 0.19f, 0.0f, 360.0f), arc(0.5f, 0.68f, 0.23f, 0.22f, 0.0f, 360.0f, 20)},
      Glyph{arc(0.5f, 0.33f, 0.22f, 0.21f, 0.0f, 360.0f, 20), {{0.72f, 0.35f}, {0.68f, 0.6f}, {0.6f, 0.9f}}},
  };
  return g;
}

float segment_distance(Pt p, Pt a, Pt b) {
  const float vx = b.x - a.x, vy = b.y - a.y;
  const float wx = p.x - a.x, wy = p.y - a.y;
  const float len2 = vx * vx + vy * vy;
  const float t = len2 > 0.0f ? std::clamp((wx * vx + wy * vy) / len2, 0.0f, 1.0f) : 0.0f;
  const float dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Dataset make_synthetic_digits(const SynthDigitsOptions& opts) {
  if (opts.count == 0 || opts.size < 8) throw Error(ErrorCode::Config, "synthetic digits need count >= 1 and size >= 8");
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<float> uni(0.0f, 1.0f);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  auto range = [&](float lo, float hi) { return lo + (hi - lo) * uni(rng); };

  const auto S = opts.size;
  const float fs = static_cast<float>(S);
  Dataset ds;
  ds.class_count = 10;
  ds.images = Tensor({opts.count, 1, S, S});
  ds.labels.resize(opts.count);
  for (std::size_t i = 0; i < opts.count; ++i) ds.labels[i] = static_cast<int>(i % 10);
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);

  std::vector<std::pair<Pt, Pt>> segments;
  for (std::size_t n = 0; n < opts.count; ++n) {
    const auto& glyph = glyphs()[static_cast<std::size_t>(ds.labels[n])];
    const float theta = range(-0.25f, 0.25f);
    const float shear = range(-0.25f, 0.25f);
    const float scale = 0.72f * fs;
    const float sx = scale * range(0.8f, 1.1f), sy = scale * range(0.9f, 1.1f);
    const float tx = fs * range(-0.07f, 0.07f), ty = fs * range(-0.07f, 0.07f);
    const float thickness = range(1.2f, 2.6f) * fs / 28.0f;
    const float peak = range(0.75f, 1.0f);
    const float c = std::cos(theta), s = std::sin(theta);
    auto place = [&](Pt p) {
      const float qx = p.x - 0.5f + 0.025f * gauss(rng);
      const float qy = p.y - 0.5f + 0.025f * gauss(rng);
      const float ax = sx * qx + shear * sy * qy, ay = sy * qy;
      return Pt{fs / 2 + c * ax - s * ay + tx, fs / 2 + s * ax + c * ay + ty};
    };
    segments.clear();
    for (const auto& stroke : glyph) {
      Pt prev = place(stroke.front());
      for (std::size_t k = 1; k < stroke.size(); ++k) {
        const Pt cur = place(stroke[k]);
        segments.emplace_back(prev, cur);
        prev = cur;
      }
    }
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const Pt p{static_cast<float>(x) + 0.5f, static_cast<float>(y) + 0.5f};
        float d = 1e9f;
        for (const auto& [a, b] : segments) d = std::min(d, segment_distance(p, a, b));
        float v = peak * std::clamp(thickness / 2 + 0.5f - d, 0.0f, 1.0f);
        v = std::clamp(v + opts.noise * gauss(rng), 0.0f, 1.0f);
        ds.images.at(n, 0, y, x) = std::round(v * 255.0f) / 255.0f;
      }
  }
  return ds;
}

}  // namespace euclidnet
