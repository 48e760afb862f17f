#include "euclidnet/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <iomanip>

#include "euclidnet/error.hpp"
#include "euclidnet/train.hpp"

namespace euclidnet {

namespace {

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

std::string model_label(const Model& model) {
  for (const auto& layer : model.layers) {
    if (auto* c = std::get_if<SimConv2d>(&layer)) return to_string(c->kind);
    if (auto* d = std::get_if<SimDense>(&layer)) return to_string(d->kind);
  }
  return "none";
}

float cell_top1(const Model& model, const Dataset& data, const Tensor& images, const NormStats& norm,
                const std::string& cell) {
  try {
    Dataset perturbed{images, data.labels, data.class_count};
    return evaluate(model, perturbed, norm).top1;
  } catch (const Error& e) {
    throw Error(e.code(), "sweep cell " + cell + ": " + e.what());
  }
}

std::string fmt_param(float v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

const char* sweep_kind_name(SweepKind k) {
  switch (k) {
    case SweepKind::Transform: return "transform";
    case SweepKind::Blur: return "blur";
    default: return "noise";
  }
}

}  // namespace

TransformGrid default_transform_grid() { return {{0.25f, 0.5f, 1.0f, 2.0f, 4.0f}, {-0.4f, -0.2f, 0.0f, 0.2f, 0.4f}}; }

BlurGrid default_blur_grid() { return {{0.0f, 0.5f, 1.0f, 2.0f}, {1, 3, 5, 7}}; }

void validate(const TransformGrid& grid) {
  if (grid.a_values.empty() || grid.b_values.empty()) throw Error(ErrorCode::Config, "transform grid is empty");
  for (float v : grid.a_values)
    if (!std::isfinite(v)) throw Error(ErrorCode::Config, "transform contrast values must be finite");
  for (float v : grid.b_values)
    if (!std::isfinite(v)) throw Error(ErrorCode::Config, "transform brightness values must be finite");
}

void validate(const BlurGrid& grid) {
  if (grid.sigmas.empty() || grid.kernel_sizes.empty()) throw Error(ErrorCode::Config, "blur grid is empty");
  for (float s : grid.sigmas)
    if (!(s >= 0.0f) || !std::isfinite(s)) throw Error(ErrorCode::Config, "blur sigma must be finite and >= 0");
  for (int k : grid.kernel_sizes)
    if (k < 1 || k % 2 == 0) throw Error(ErrorCode::Config, "blur kernel size " + std::to_string(k) + " must be odd and >= 1");
}

Tensor pixel_transform(const Tensor& images, float a, float b, bool clip) {
  if (!std::isfinite(a) || !std::isfinite(b)) throw Error(ErrorCode::NumericInput, "transform parameters must be finite");
  Tensor out(images.shape());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const float v = a * images[i] + b;
    out[i] = clip ? std::clamp(v, 0.0f, 1.0f) : v;
  }
  return out;
}

std::vector<float> gaussian_kernel(float sigma, int ksize) {
  if (ksize < 1 || ksize % 2 == 0)
    throw Error(ErrorCode::Config, "blur kernel size " + std::to_string(ksize) + " must be odd and >= 1");
  if (!(sigma >= 0.0f) || !std::isfinite(sigma)) throw Error(ErrorCode::Config, "blur sigma must be finite and >= 0");
  const auto k = static_cast<std::size_t>(ksize);
  const int r = ksize / 2;
  std::vector<float> kernel(k * k, 0.0f);
  if (sigma == 0.0f) {
    kernel[static_cast<std::size_t>(r) * k + static_cast<std::size_t>(r)] = 1.0f;
    return kernel;
  }
  std::vector<double> raw(k * k);
  double total = 0.0;
  const double two_s2 = 2.0 * static_cast<double>(sigma) * static_cast<double>(sigma);
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) {
      const double v = std::exp(-static_cast<double>(i * i + j * j) / two_s2);
      raw[static_cast<std::size_t>(i + r) * k + static_cast<std::size_t>(j + r)] = v;
      total += v;
    }
  for (std::size_t i = 0; i < raw.size(); ++i) kernel[i] = static_cast<float>(raw[i] / total);
  return kernel;
}

Tensor gaussian_blur(const Tensor& images, float sigma, int ksize) {
  if (images.ndim() != 4) throw Error(ErrorCode::Shape, "blur expects [N,C,H,W], got " + shape_to_string(images.shape()));
  const auto kernel = gaussian_kernel(sigma, ksize);
  const auto N = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
  const auto k = static_cast<std::size_t>(ksize);
  const int r = ksize / 2;
  Tensor out(images.shape());
  const auto planes = static_cast<std::ptrdiff_t>(N * C);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const float* src = images.data().data() + static_cast<std::size_t>(p) * H * W;
    float* dst = out.data().data() + static_cast<std::size_t>(p) * H * W;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        float acc = 0.0f;
        for (int i = -r; i <= r; ++i) {
          const auto sy = reflect(static_cast<std::ptrdiff_t>(y) + i, H);
          for (int j = -r; j <= r; ++j) {
            const auto sx = reflect(static_cast<std::ptrdiff_t>(x) + j, W);
            acc += kernel[static_cast<std::size_t>(i + r) * k + static_cast<std::size_t>(j + r)] * src[sy * W + sx];
          }
        }
        dst[y * W + x] = acc;
      }
  }
  return out;
}

Tensor additive_noise(const Tensor& images, float sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0f) || !std::isfinite(sigma)) throw Error(ErrorCode::Config, "noise sigma must be finite and >= 0");
  Tensor out = images;
  if (sigma == 0.0f) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, sigma);
  for (auto& v : out.data()) v += gauss(rng);
  return out;
}

const SweepCell* SweepResult::find(float p1, float p2) const {
  for (const auto& c : cells)
    if (c.p1 == p1 && c.p2 == p2) return &c;
  return nullptr;
}

SweepResult sweep_transform(const Model& model, const Dataset& data, const NormStats& norm, const TransformGrid& grid) {
  validate(grid);
  SweepResult res{model_label(model), SweepKind::Transform, {}};
  for (float a : grid.a_values)
    for (float b : grid.b_values) {
      const auto images = pixel_transform(data.images, a, b, grid.clip);
      res.cells.push_back({a, b, cell_top1(model, data, images, norm, "a=" + fmt_param(a) + " b=" + fmt_param(b))});
    }
  return res;
}

SweepResult sweep_blur(const Model& model, const Dataset& data, const NormStats& norm, const BlurGrid& grid) {
  validate(grid);
  SweepResult res{model_label(model), SweepKind::Blur, {}};
  for (float s : grid.sigmas)
    for (int k : grid.kernel_sizes) {
      const auto images = gaussian_blur(data.images, s, k);
      res.cells.push_back({s, static_cast<float>(k),
                           cell_top1(model, data, images, norm, "sigma=" + fmt_param(s) + " ksize=" + std::to_string(k))});
    }
  return res;
}

SweepResult sweep_noise(const Model& model, const Dataset& data, const NormStats& norm,
                        const std::vector<float>& sigmas, std::uint64_t seed) {
  if (sigmas.empty()) throw Error(ErrorCode::Config, "noise grid is empty");
  SweepResult res{model_label(model), SweepKind::Noise, {}};
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    const auto images = additive_noise(data.images, sigmas[i], seed + i);
    res.cells.push_back({sigmas[i], 0.0f, cell_top1(model, data, images, norm, "sigma=" + fmt_param(sigmas[i]))});
  }
  return res;
}

std::string sweep_csv(const std::vector<SweepResult>& results) {
  std::ostringstream os;
  os << "kind,param_a_or_sigma,param_b_or_ksize,top1\n";
  for (const auto& r : results)
    for (const auto& c : r.cells)
      os << r.label << ',' << fmt_param(c.p1) << ',' << fmt_param(c.p2) << ',' << std::setprecision(9) << c.top1
         << std::setprecision(6) << '\n';
  return os.str();
}

std::vector<DeltaCell> delta_grid(const SweepResult& a, const SweepResult& b) {
  if (a.kind != b.kind || a.cells.size() != b.cells.size())
    throw Error(ErrorCode::Config, std::string("cannot pair a ") + sweep_kind_name(a.kind) + " sweep with a " +
                                       sweep_kind_name(b.kind) + " sweep of a different grid");
  std::vector<DeltaCell> out;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const auto& ca = a.cells[i];
    const auto& cb = b.cells[i];
    if (ca.p1 != cb.p1 || ca.p2 != cb.p2) throw Error(ErrorCode::Config, "sweep grids differ at cell " + std::to_string(i));
    out.push_back({ca.p1, ca.p2, ca.top1, cb.top1, ca.top1 - cb.top1});
  }
  return out;
}

std::string delta_csv(const SweepResult& a, const SweepResult& b, const std::vector<DeltaCell>& cells) {
  std::ostringstream os;
  os << "kind_a,kind_b,param_a_or_sigma,param_b_or_ksize,top1_a,top1_b,delta_top1\n";
  for (const auto& c : cells)
    os << a.label << ',' << b.label << ',' << fmt_param(c.p1) << ',' << fmt_param(c.p2) << ',' << std::setprecision(9)
       << c.top1_a << ',' << c.top1_b << ',' << c.delta_top1 << std::setprecision(6) << '\n';
  return os.str();
}

}  // namespace euclidnet
