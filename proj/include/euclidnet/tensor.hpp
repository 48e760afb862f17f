#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace euclidnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major f32 tensor. A default-constructed tensor is empty (no
/// shape, no data); every other instance satisfies data.size() == numel(shape)
/// with all dimensions >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& values() noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  // NCHW accessors for 4-D tensors.
  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same data, new shape of equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(float value) noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

Tensor tensor_create(Shape shape, float fill);
Tensor tensor_create(Shape shape, std::vector<float> values);

/// Receptive fields laid out one output position per row.
/// rows = N * OH * OW, cols = C * kh * kw, ordered (c, i, j).
struct PatchMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  float at(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
};

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  std::size_t patch_size() const noexcept { return in_channels * kernel_h * kernel_w; }
  std::size_t positions() const noexcept { return out_h * out_w; }

  /// Validates a [N,C,H,W] input against a kernel of the given extent.
  static ConvGeometry make(const Shape& input, std::size_t out_channels, std::size_t kernel_h,
                           std::size_t kernel_w, int stride, int pad);
};

PatchMatrix im2col(const Tensor& x, int kh, int kw, int stride, int pad);

/// Scatter-add of patch rows back onto an [N,C,H,W] grid; padding cells are dropped.
Tensor col2im(const PatchMatrix& patches, const Shape& input_shape, int kh, int kw, int stride,
              int pad);

/// Per-row index of the maximum; ties go to the lowest index.
std::vector<std::size_t> argmax_row(const Tensor& t);

}  // namespace euclidnet
