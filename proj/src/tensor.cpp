#include "euclidnet/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "euclidnet/error.hpp"

namespace euclidnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw Error(ErrorCode::Shape, "tensor shape must be non-empty");
  for (auto d : shape)
    if (d == 0) throw Error(ErrorCode::Shape, "tensor dimension 0 in shape " + shape_to_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  const auto expected = shape_numel(shape_);
  if (data_.size() != expected)
    throw Error(ErrorCode::Shape, "value length " + std::to_string(data_.size()) + " != " +
                                      std::to_string(expected) + " for shape " + shape_to_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  check_shape(shape);
  if (shape_numel(shape) != size())
    throw Error(ErrorCode::Shape,
                "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(float value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor tensor_create(Shape shape, float fill) { return Tensor(std::move(shape), fill); }

Tensor tensor_create(Shape shape, std::vector<float> values) {
  return Tensor(std::move(shape), std::move(values));
}

ConvGeometry ConvGeometry::make(const Shape& input, std::size_t out_channels, std::size_t kernel_h,
                                std::size_t kernel_w, int stride, int pad) {
  if (input.size() != 4)
    throw Error(ErrorCode::Shape, "convolution input must be [N,C,H,W], got " + shape_to_string(input));
  if (kernel_h < 1 || kernel_w < 1) throw Error(ErrorCode::Shape, "kernel extent must be >= 1");
  if (stride < 1) throw Error(ErrorCode::Shape, "stride must be >= 1");
  if (pad < 0) throw Error(ErrorCode::Shape, "pad must be >= 0");
  ConvGeometry g;
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_channels = out_channels;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = static_cast<std::size_t>(stride);
  g.pad = static_cast<std::size_t>(pad);
  const auto ph = g.in_h + 2 * g.pad;
  const auto pw = g.in_w + 2 * g.pad;
  if (ph < kernel_h || pw < kernel_w)
    throw Error(ErrorCode::Shape, "kernel " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w) +
                                      " larger than padded input " + std::to_string(ph) + "x" +
                                      std::to_string(pw));
  g.out_h = (ph - kernel_h) / g.stride + 1;
  g.out_w = (pw - kernel_w) / g.stride + 1;
  return g;
}

PatchMatrix im2col(const Tensor& x, int kh, int kw, int stride, int pad) {
  const auto g = ConvGeometry::make(x.shape(), 1, static_cast<std::size_t>(kh),
                                    static_cast<std::size_t>(kw), stride, pad);
  PatchMatrix p;
  p.rows = g.batch * g.positions();
  p.cols = g.patch_size();
  p.data.assign(p.rows * p.cols, 0.0f);
  std::size_t row = 0;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow, ++row) {
        float* dst = p.data.data() + row * p.cols;
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t i = 0; i < g.kernel_h; ++i)
            for (std::size_t j = 0; j < g.kernel_w; ++j, ++dst) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
              if (ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.in_h) &&
                  iw < static_cast<std::ptrdiff_t>(g.in_w))
                *dst = x.at(n, c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw));
            }
      }
  return p;
}

Tensor col2im(const PatchMatrix& patches, const Shape& input_shape, int kh, int kw, int stride, int pad) {
  const auto g = ConvGeometry::make(input_shape, 1, static_cast<std::size_t>(kh),
                                    static_cast<std::size_t>(kw), stride, pad);
  if (patches.rows != g.batch * g.positions() || patches.cols != g.patch_size())
    throw Error(ErrorCode::Shape, "patch matrix does not match input shape " + shape_to_string(input_shape));
  Tensor out(input_shape, 0.0f);
  std::size_t row = 0;
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow, ++row) {
        const float* src = patches.data.data() + row * patches.cols;
        for (std::size_t c = 0; c < g.in_channels; ++c)
          for (std::size_t i = 0; i < g.kernel_h; ++i)
            for (std::size_t j = 0; j < g.kernel_w; ++j, ++src) {
              const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
              const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
              if (ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.in_h) &&
                  iw < static_cast<std::ptrdiff_t>(g.in_w))
                out.at(n, c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)) += *src;
            }
      }
  return out;
}

std::vector<std::size_t> argmax_row(const Tensor& t) {
  if (t.ndim() != 2)
    throw Error(ErrorCode::Shape, "argmax_row expects a 2-D tensor, got " + shape_to_string(t.shape()));
  const auto rows = t.dim(0), cols = t.dim(1);
  std::vector<std::size_t> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = t.data().data() + r * cols;
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (row[c] > row[best]) best = c;
    out[r] = best;
  }
  return out;
}

}  // namespace euclidnet
