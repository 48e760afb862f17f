#pragma once

#include "euclidnet/similarity.hpp"
#include "euclidnet/tensor.hpp"

// Similarity convolution kernels.
//
// Every output element is reduced over its receptive field in the fixed patch
// order (c, i, j), starting from 0.0f. Weight gradients are reduced per sample
// over output positions in scan order, then across samples in batch order.
// The OpenMP kernels and the serial reference below follow the same order, so
// their results agree bit for bit independent of the thread count.

namespace euclidnet {

struct ConvParams {
  int stride = 1;
  int pad = 0;
};

struct ConvGrads {
  Tensor dx;  // [N, C, H, W]
  Tensor dw;  // [L, C, kh, kw]
};

/// y[n,l,oh,ow] = sum over the receptive field of S(x, w[l]).
/// x is [N,C,H,W], weight is [L,C,kh,kw]; returns [N,L,OH,OW].
Tensor sim_conv_forward(const Tensor& x, const Tensor& weight, ConvParams params, const SimilarityKind& kind);

ConvGrads sim_conv_backward(const Tensor& x, const Tensor& weight, ConvParams params,
                            const SimilarityKind& kind, const Tensor& dy);

/// Validated geometry for a weight tensor applied to an input shape.
ConvGeometry conv_geometry(const Shape& input, const Shape& weight, ConvParams params);

namespace reference {

// Direct loop nests without im2col or threading. Kept for testing and benchmarks.
Tensor sim_conv_forward(const Tensor& x, const Tensor& weight, ConvParams params, const SimilarityKind& kind);
ConvGrads sim_conv_backward(const Tensor& x, const Tensor& weight, ConvParams params,
                            const SimilarityKind& kind, const Tensor& dy);

}  // namespace reference

/// Number of threads the OpenMP kernels will use (1 without OpenMP).
int kernel_threads();

}  // namespace euclidnet
