#include "euclidnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "euclidnet/error.hpp"
#include "euclidnet/io.hpp"

namespace euclidnet {

void validate(const Dataset& ds) {
  if (ds.images.ndim() != 4)
    throw DataError("dataset images must be [N,C,H,W], got " + shape_to_string(ds.images.shape()));
  if (ds.images.dim(0) != ds.labels.size())
    throw DataError("image count " + std::to_string(ds.images.dim(0)) + " != label count " +
                    std::to_string(ds.labels.size()));
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] < 0 || static_cast<std::size_t>(ds.labels[i]) >= ds.class_count)
      throw DataError("label " + std::to_string(ds.labels[i]) + " at index " + std::to_string(i) +
                      " outside [0," + std::to_string(ds.class_count) + ")");
}

NormStats compute_norm_stats(const Dataset& ds) {
  const auto N = ds.images.dim(0), C = ds.images.dim(1), S = ds.images.dim(2) * ds.images.dim(3);
  NormStats st{std::vector<float>(C), std::vector<float>(C)};
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const float* p = ds.images.data().data() + (n * C + c) * S;
      for (std::size_t i = 0; i < S; ++i) {
        sum += p[i];
        sq += static_cast<double>(p[i]) * p[i];
      }
    }
    const double count = static_cast<double>(N * S);
    const double mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    st.mean[c] = static_cast<float>(mean);
    st.std[c] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
  }
  return st;
}

namespace {

void check_stats(const Tensor& images, const NormStats& stats) {
  if (images.ndim() != 4 || stats.mean.size() != images.dim(1) || stats.std.size() != images.dim(1))
    throw Error(ErrorCode::Shape, "normalization stats do not match images " + shape_to_string(images.shape()));
}

}  // namespace

Tensor normalize(const Tensor& images, const NormStats& stats) {
  check_stats(images, stats);
  Tensor out(images.shape());
  const auto C = images.dim(1), S = images.dim(2) * images.dim(3);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto c = (i / S) % C;
    out[i] = (images[i] - stats.mean[c]) / stats.std[c];
  }
  return out;
}

Tensor denormalize(const Tensor& images, const NormStats& stats) {
  check_stats(images, stats);
  Tensor out(images.shape());
  const auto C = images.dim(1), S = images.dim(2) * images.dim(3);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto c = (i / S) % C;
    out[i] = images[i] * stats.std[c] + stats.mean[c];
  }
  return out;
}

// --- IDX -----------------------------------------------------------------------

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const char* what) {
  if (offset + 4 > bytes.size())
    throw DataError(std::string("truncated IDX ") + what + " header at offset " + std::to_string(offset),
                    static_cast<long long>(offset));
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  std::size_t class_count) {
  if (read_be32(image_bytes, 0, "image") != kIdxImages) throw DataError("bad IDX magic at offset 0 (images)", 0);
  if (read_be32(label_bytes, 0, "label") != kIdxLabels) throw DataError("bad IDX magic at offset 0 (labels)", 0);
  const auto n_images = read_be32(image_bytes, 4, "image");
  const auto rows = read_be32(image_bytes, 8, "image");
  const auto cols = read_be32(image_bytes, 12, "image");
  const auto n_labels = read_be32(label_bytes, 4, "label");
  if (n_images != n_labels)
    throw DataError("image count " + std::to_string(n_images) + " != label count " + std::to_string(n_labels), 4);
  if (n_images == 0 || rows == 0 || cols == 0) throw DataError("IDX file declares an empty dimension", 4);
  const std::size_t pixels = std::size_t{n_images} * rows * cols;
  if (image_bytes.size() < 16 + pixels)
    throw DataError("truncated IDX image data: need " + std::to_string(pixels) + " bytes at offset 16, have " +
                        std::to_string(image_bytes.size() - 16),
                    static_cast<long long>(image_bytes.size()));
  if (label_bytes.size() < 8 + std::size_t{n_labels})
    throw DataError("truncated IDX label data: need " + std::to_string(n_labels) + " bytes at offset 8, have " +
                        std::to_string(label_bytes.size() - 8),
                    static_cast<long long>(label_bytes.size()));
  Dataset ds;
  ds.images = Tensor({n_images, 1, rows, cols});
  for (std::size_t i = 0; i < pixels; ++i) ds.images[i] = static_cast<float>(image_bytes[16 + i]) / 255.0f;
  ds.labels.resize(n_labels);
  int max_label = 0;
  for (std::size_t i = 0; i < n_labels; ++i) {
    ds.labels[i] = label_bytes[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = class_count ? class_count : static_cast<std::size_t>(max_label) + 1;
  validate(ds);
  return ds;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t class_count) {
  const auto images = read_file_bytes(images_path);
  const auto labels = read_file_bytes(labels_path);
  try {
    return parse_idx(images, labels, class_count);
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " [" + images_path.string() + ", " + labels_path.string() + "]",
                    e.offset());
  }
}

std::vector<std::uint8_t> encode_idx_images(const Tensor& images) {
  if (images.ndim() != 4 || images.dim(1) != 1)
    throw DataError("IDX images must be single-channel [N,1,H,W], got " + shape_to_string(images.shape()));
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size());
  write_be32(out, kIdxImages);
  write_be32(out, static_cast<std::uint32_t>(images.dim(0)));
  write_be32(out, static_cast<std::uint32_t>(images.dim(2)));
  write_be32(out, static_cast<std::uint32_t>(images.dim(3)));
  for (float v : images.values())
    out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const std::vector<int>& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kIdxLabels);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw DataError("IDX labels must fit in a byte, got " + std::to_string(l));
    out.push_back(static_cast<std::uint8_t>(l));
  }
  return out;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  write_file_atomic(images_path, encode_idx_images(ds.images));
  write_file_atomic(labels_path, encode_idx_labels(ds.labels));
}

// --- augmentation and batching -------------------------------------------------

Tensor hflip(const Tensor& images) {
  Tensor out(images.shape());
  const auto N = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) out.at(n, c, h, w) = images.at(n, c, h, W - 1 - w);
  return out;
}

Tensor augment_batch(const Tensor& images, std::mt19937_64& rng, const AugmentOptions& opts) {
  if (opts.random_crop_pad < 0) throw Error(ErrorCode::Config, "random_crop_pad must be >= 0");
  if (opts.random_crop_pad == 0 && !opts.hflip) return images;
  const auto N = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
  const auto pad = static_cast<std::ptrdiff_t>(opts.random_crop_pad);
  Tensor out(images.shape());
  std::uniform_int_distribution<std::ptrdiff_t> offset(0, 2 * pad);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t n = 0; n < N; ++n) {
    const std::ptrdiff_t oy = pad ? offset(rng) - pad : 0;
    const std::ptrdiff_t ox = pad ? offset(rng) - pad : 0;
    const bool flip = opts.hflip && coin(rng);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
          const auto sh = static_cast<std::ptrdiff_t>(h) + oy;
          const auto sw_unflipped = static_cast<std::ptrdiff_t>(flip ? W - 1 - w : w) + ox;
          const bool inside = sh >= 0 && sw_unflipped >= 0 && sh < static_cast<std::ptrdiff_t>(H) &&
                              sw_unflipped < static_cast<std::ptrdiff_t>(W);
          out.at(n, c, h, w) =
              inside ? images.at(n, c, static_cast<std::size_t>(sh), static_cast<std::size_t>(sw_unflipped)) : 0.0f;
        }
  }
  return out;
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
  const auto per = ds.images.size() / ds.images.dim(0);
  Batch b;
  b.images = Tensor({indices.size(), ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)});
  b.labels.reserve(indices.size());
  b.indices.assign(indices.begin(), indices.end());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = ds.images.data().subspan(indices[i] * per, per);
    std::copy(src.begin(), src.end(), b.images.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    b.labels.push_back(ds.labels[indices[i]]);
  }
  return b;
}

Dataset subset(const Dataset& ds, std::size_t begin, std::size_t end) {
  if (begin >= end || end > ds.size()) throw DataError("invalid subset range");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  auto b = gather(ds, idx);
  return Dataset{std::move(b.images), std::move(b.labels), ds.class_count};
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : ds_(&ds), batch_size_(batch_size), order_(ds.size()) {
  if (batch_size == 0) throw Error(ErrorCode::Config, "batch_size must be >= 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
}

std::optional<Batch> BatchIterator::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  const auto count = std::min(batch_size_, order_.size() - pos_);
  auto b = gather(*ds_, std::span<const std::size_t>(order_).subspan(pos_, count));
  pos_ += count;
  return b;
}

}  // namespace euclidnet
