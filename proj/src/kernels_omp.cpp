#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "euclidnet/error.hpp"
#include "euclidnet/kernels.hpp"
#include "kernel_terms.hpp"

namespace euclidnet {

int kernel_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, ConvParams params) {
  if (weight.size() != 4)
    throw Error(ErrorCode::Shape, "similarity weight must be [L,C,kh,kw], got " + shape_to_string(weight));
  if (input.size() == 4 && input[1] != weight[1])
    throw Error(ErrorCode::Shape, "channel mismatch: input has " + std::to_string(input[1]) +
                                      " channels, weight expects " + std::to_string(weight[1]));
  return ConvGeometry::make(input, weight[0], weight[2], weight[3], params.stride, params.pad);
}

namespace {

// Transposed patch layout: patches[k * R + r] for patch element k at output position r.
void gather_patches(const float* x, const ConvGeometry& g, float* patches) {
  const auto R = g.positions();
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c)
    for (std::size_t i = 0; i < g.kernel_h; ++i)
      for (std::size_t j = 0; j < g.kernel_w; ++j, ++k) {
        float* dst = patches + k * R;
        const float* plane = x + c * g.in_h * g.in_w;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          const bool row_ok = ih >= 0 && ih < static_cast<std::ptrdiff_t>(g.in_h);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            const bool ok = row_ok && iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w);
            *dst++ = ok ? plane[static_cast<std::size_t>(ih) * g.in_w + static_cast<std::size_t>(iw)] : 0.0f;
          }
        }
      }
}

void scatter_patches(const float* patches, const ConvGeometry& g, float* dx) {
  const auto R = g.positions();
  std::size_t k = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c)
    for (std::size_t i = 0; i < g.kernel_h; ++i)
      for (std::size_t j = 0; j < g.kernel_w; ++j, ++k) {
        const float* src = patches + k * R;
        float* plane = dx + c * g.in_h * g.in_w;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          const bool row_ok = ih >= 0 && ih < static_cast<std::ptrdiff_t>(g.in_h);
          for (std::size_t ow = 0; ow < g.out_w; ++ow, ++src) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (row_ok && iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w))
              plane[static_cast<std::size_t>(ih) * g.in_w + static_cast<std::size_t>(iw)] += *src;
          }
        }
      }
}

template <typename Term>
void forward_sample(const Term& f, const float* x, const float* w, const ConvGeometry& g, float* patches,
                    float* y) {
  const auto R = g.positions();
  const auto K = g.patch_size();
  gather_patches(x, g, patches);
  for (std::size_t l = 0; l < g.out_channels; ++l) {
    float* yr = y + l * R;
    std::fill(yr, yr + R, 0.0f);
    const float* wl = w + l * K;
    for (std::size_t k = 0; k < K; ++k) {
      const float wv = wl[k];
      const float* p = patches + k * R;
      for (std::size_t r = 0; r < R; ++r) yr[r] += f(p[r], wv);
    }
  }
}

template <typename Term>
void backward_sample(const Term& f, const float* x, const float* w, const float* dy, const ConvGeometry& g,
                     float* patches, float* dpatches, float* dx, float* dw_part) {
  const auto R = g.positions();
  const auto K = g.patch_size();
  const auto L = g.out_channels;
  gather_patches(x, g, patches);
  std::fill(dpatches, dpatches + K * R, 0.0f);
  for (std::size_t k = 0; k < K; ++k) {
    const float* p = patches + k * R;
    float* dp = dpatches + k * R;
    for (std::size_t l = 0; l < L; ++l) {
      const float wv = w[l * K + k];
      const float* dyl = dy + l * R;
      for (std::size_t r = 0; r < R; ++r) dp[r] += dyl[r] * f.dx(p[r], wv);
    }
  }
  std::fill(dx, dx + g.in_channels * g.in_h * g.in_w, 0.0f);
  scatter_patches(dpatches, g, dx);
  for (std::size_t l = 0; l < L; ++l) {
    const float* dyl = dy + l * R;
    for (std::size_t k = 0; k < K; ++k) {
      const float wv = w[l * K + k];
      const float* p = patches + k * R;
      float acc = 0.0f;
      for (std::size_t r = 0; r < R; ++r) acc += dyl[r] * f.dw(p[r], wv);
      dw_part[l * K + k] = acc;
    }
  }
}

}  // namespace

Tensor sim_conv_forward(const Tensor& x, const Tensor& weight, ConvParams params, const SimilarityKind& kind) {
  const auto g = conv_geometry(x.shape(), weight.shape(), params);
  Tensor y({g.batch, g.out_channels, g.out_h, g.out_w});
  const auto in_stride = g.in_channels * g.in_h * g.in_w;
  const auto out_stride = g.out_channels * g.positions();
  const auto scratch = g.patch_size() * g.positions();
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
  detail::dispatch_term(kind, [&](auto f) {
#pragma omp parallel
    {
      std::vector<float> patches(scratch);
#pragma omp for schedule(static)
      for (std::ptrdiff_t n = 0; n < batch; ++n)
        forward_sample(f, x.data().data() + n * in_stride, weight.data().data(), g, patches.data(),
                       y.data().data() + n * out_stride);
    }
  });
  return y;
}

ConvGrads sim_conv_backward(const Tensor& x, const Tensor& weight, ConvParams params, const SimilarityKind& kind,
                            const Tensor& dy) {
  const auto g = conv_geometry(x.shape(), weight.shape(), params);
  const Shape expected{g.batch, g.out_channels, g.out_h, g.out_w};
  if (dy.shape() != expected)
    throw Error(ErrorCode::Shape, "output gradient shape " + shape_to_string(dy.shape()) + " != " +
                                      shape_to_string(expected));
  ConvGrads grads{Tensor(x.shape()), Tensor(weight.shape())};
  const auto in_stride = g.in_channels * g.in_h * g.in_w;
  const auto out_stride = g.out_channels * g.positions();
  const auto scratch = g.patch_size() * g.positions();
  const auto wsize = weight.size();
  std::vector<float> dw_parts(g.batch * wsize);
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
  detail::dispatch_term(kind, [&](auto f) {
#pragma omp parallel
    {
      std::vector<float> patches(scratch);
      std::vector<float> dpatches(scratch);
#pragma omp for schedule(static)
      for (std::ptrdiff_t n = 0; n < batch; ++n)
        backward_sample(f, x.data().data() + n * in_stride, weight.data().data(),
                        dy.data().data() + n * out_stride, g, patches.data(), dpatches.data(),
                        grads.dx.data().data() + n * in_stride, dw_parts.data() + n * wsize);
    }
  });
  float* dw = grads.dw.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const float* part = dw_parts.data() + n * wsize;
    for (std::size_t i = 0; i < wsize; ++i) dw[i] += part[i];
  }
  return grads;
}

}  // namespace euclidnet
