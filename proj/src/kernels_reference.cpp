#include "euclidnet/error.hpp"
#include "euclidnet/kernels.hpp"
#include "kernel_terms.hpp"

namespace euclidnet::reference {

namespace {

struct Tap {
  bool inside;
  std::size_t ih, iw;
};

Tap tap(const ConvGeometry& g, std::size_t oh, std::size_t ow, std::size_t i, std::size_t j) {
  const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
  const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
  const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.in_h) &&
                      iw < static_cast<std::ptrdiff_t>(g.in_w);
  return {inside, inside ? static_cast<std::size_t>(ih) : 0, inside ? static_cast<std::size_t>(iw) : 0};
}

}  // namespace

Tensor sim_conv_forward(const Tensor& x, const Tensor& weight, ConvParams params, const SimilarityKind& kind) {
  const auto g = conv_geometry(x.shape(), weight.shape(), params);
  Tensor y({g.batch, g.out_channels, g.out_h, g.out_w});
  detail::dispatch_term(kind, [&](auto f) {
    for (std::size_t n = 0; n < g.batch; ++n)
      for (std::size_t l = 0; l < g.out_channels; ++l)
        for (std::size_t oh = 0; oh < g.out_h; ++oh)
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            float acc = 0.0f;
            for (std::size_t c = 0; c < g.in_channels; ++c)
              for (std::size_t i = 0; i < g.kernel_h; ++i)
                for (std::size_t j = 0; j < g.kernel_w; ++j) {
                  const auto t = tap(g, oh, ow, i, j);
                  const float xv = t.inside ? x.at(n, c, t.ih, t.iw) : 0.0f;
                  acc += f(xv, weight.at(l, c, i, j));
                }
            y.at(n, l, oh, ow) = acc;
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
  detail::dispatch_term(kind, [&](auto f) {
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t c = 0; c < g.in_channels; ++c)
        for (std::size_t i = 0; i < g.kernel_h; ++i)
          for (std::size_t j = 0; j < g.kernel_w; ++j)
            for (std::size_t oh = 0; oh < g.out_h; ++oh)
              for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                const auto t = tap(g, oh, ow, i, j);
                const float xv = t.inside ? x.at(n, c, t.ih, t.iw) : 0.0f;
                float acc = 0.0f;
                for (std::size_t l = 0; l < g.out_channels; ++l)
                  acc += dy.at(n, l, oh, ow) * f.dx(xv, weight.at(l, c, i, j));
                if (t.inside) grads.dx.at(n, c, t.ih, t.iw) += acc;
              }
      for (std::size_t l = 0; l < g.out_channels; ++l)
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t i = 0; i < g.kernel_h; ++i)
            for (std::size_t j = 0; j < g.kernel_w; ++j) {
              const float wv = weight.at(l, c, i, j);
              float acc = 0.0f;
              for (std::size_t oh = 0; oh < g.out_h; ++oh)
                for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                  const auto t = tap(g, oh, ow, i, j);
                  const float xv = t.inside ? x.at(n, c, t.ih, t.iw) : 0.0f;
                  acc += dy.at(n, l, oh, ow) * f.dw(xv, wv);
                }
              grads.dw.at(l, c, i, j) += acc;
            }
    }
  });
  return grads;
}

}  // namespace euclidnet::reference
