#pragma once

// Float Euclid convolution over exactly dequantized operands, accumulated in
// long double and cast to f32 once.

#include <cstdint>

#include "euclidnet/quant.hpp"

namespace oracle {

inline euclidnet::Tensor qeuclid(const euclidnet::QTensor& qx, const euclidnet::QTensor& qw, int stride, int pad) {
  const auto N = qx.shape[0], C = qx.shape[1], H = qx.shape[2], W = qx.shape[3];
  const auto L = qw.shape[0], KH = qw.shape[2], KW = qw.shape[3];
  const auto s = static_cast<std::size_t>(stride);
  const auto OH = (H + 2 * static_cast<std::size_t>(pad) - KH) / s + 1;
  const auto OW = (W + 2 * static_cast<std::size_t>(pad) - KW) / s + 1;
  const long double sx = qx.params.scale, sw = qw.params.scale;
  euclidnet::Tensor y({N, L, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          long double acc = 0.0L;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < KH; ++i)
              for (std::size_t j = 0; j < KW; ++j) {
                const long ih = static_cast<long>(oh * s + i) - pad;
                const long iw = static_cast<long>(ow * s + j) - pad;
                const bool in = ih >= 0 && iw >= 0 && ih < static_cast<long>(H) && iw < static_cast<long>(W);
                const long double xv =
                    in ? sx * qx.data[((n * C + c) * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)]
                       : 0.0L;
                const long double wv = sw * qw.data[((l * C + c) * KH + i) * KW + j];
                acc += -0.5L * (xv - wv) * (xv - wv);
              }
          y.at(n, l, oh, ow) = static_cast<float>(acc);
        }
  return y;
}

}  // namespace oracle
