#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "euclidnet/data.hpp"
#include "euclidnet/nn.hpp"

// Little-endian checkpoint container:
//   magic "EUCN" | version u32 = 1 | epoch u32 | lambda f32 | seed u64 |
//   tensor count u32 | per tensor: name length u16, UTF-8 name, ndim u8,
//   dims u32 x ndim, f32 data.
//
// Besides the model state ("layerN.*") a checkpoint written by this library
// carries "model.arch" (one row per layer: type, similarity tag, lambda,
// stride, pad, adder gradient rule), "model.io" (C, H, W, classes) and the
// normalization statistics "norm.mean" / "norm.std".

namespace euclidnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint32_t epoch = 0;
  float lambda = 0.0f;
  std::uint64_t seed = 0;
};

struct TensorRecord {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  CheckpointMeta meta;
  std::vector<TensorRecord> tensors;

  const Tensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

Checkpoint make_checkpoint(const Model& model, const NormStats& norm, const CheckpointMeta& meta);
void checkpoint_save(const Model& model, const NormStats& norm, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);

/// Rebuilds the architecture recorded in the checkpoint and loads its state.
Model model_from_checkpoint(const Checkpoint& ckpt);
NormStats norm_from_checkpoint(const Checkpoint& ckpt);

/// Copies every state tensor into an existing model. Throws CheckpointError
/// (Incompatible) listing each missing or differently shaped tensor.
void load_state(Model& model, const Checkpoint& ckpt);

}  // namespace euclidnet
