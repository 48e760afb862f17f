#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "euclidnet/tensor.hpp"

namespace euclidnet {

/// Images in [0,1] as [N,C,H,W] with one integer label per image.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

void validate(const Dataset& ds);

/// Per-channel normalization applied at model input: (x - mean) / std.
struct NormStats {
  std::vector<float> mean;
  std::vector<float> std;
};

NormStats compute_norm_stats(const Dataset& ds);
Tensor normalize(const Tensor& images, const NormStats& stats);
Tensor denormalize(const Tensor& images, const NormStats& stats);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// class_count of 0 means max(label) + 1.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t class_count = 0);
Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                  std::size_t class_count = 0);

/// Single-channel images, pixels quantized to u8 by round(x * 255).
std::vector<std::uint8_t> encode_idx_images(const Tensor& images);
std::vector<std::uint8_t> encode_idx_labels(const std::vector<int>& labels);
void write_idx(const Dataset& ds, const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

struct AugmentOptions {
  int random_crop_pad = 0;  // 0 disables cropping
  bool hflip = false;
};

/// Per image: zero-pad by random_crop_pad and crop back at a random offset,
/// then mirror horizontally with probability 0.5.
Tensor augment_batch(const Tensor& images, std::mt19937_64& rng, const AugmentOptions& opts);

Tensor hflip(const Tensor& images);

struct Batch {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);
Dataset subset(const Dataset& ds, std::size_t begin, std::size_t end);

/// Walks a dataset once in batch_size chunks; the final partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool shuffle);

  std::optional<Batch> next();
  const std::vector<std::size_t>& order() const noexcept { return order_; }

 private:
  const Dataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

inline BatchIterator batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool shuffle) {
  return BatchIterator(ds, batch_size, seed, shuffle);
}

}  // namespace euclidnet
