#include "euclidnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <variant>

#include "euclidnet/error.hpp"
#include "euclidnet/io.hpp"
#include "byte_io.hpp"

namespace euclidnet {

using detail::Reader;
using detail::Writer;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'E', 'U', 'C', 'N'};

enum class LayerType : int { SimConv2d = 0, SimDense = 1, BatchNorm = 2, ReLU = 3, MaxPool2x2 = 4, Flatten = 5 };
constexpr std::size_t kArchCols = 6;

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& r : tensors)
    if (r.name == name) return &r.value;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(ckpt.version);
  w.put<std::uint32_t>(ckpt.meta.epoch);
  w.put<float>(ckpt.meta.lambda);
  w.put<std::uint64_t>(ckpt.meta.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& r : ckpt.tensors) {
    if (r.name.size() > 0xFFFF) throw Error(ErrorCode::Checkpoint, "tensor name too long: " + r.name);
    if (r.value.ndim() > 0xFF) throw Error(ErrorCode::Checkpoint, "too many dims for " + r.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.name.size()));
    w.put_bytes(r.name.data(), r.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.value.ndim()));
    for (auto d : r.value.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_bytes(r.value.data().data(), r.value.size() * sizeof(float));
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError(CheckpointFault::BadMagic, "bad magic");
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>("version");
  if (ckpt.version != kCheckpointVersion)
    throw CheckpointError(CheckpointFault::VersionMismatch,
                          "checkpoint version " + std::to_string(ckpt.version) + " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  ckpt.meta.epoch = r.get<std::uint32_t>("epoch");
  ckpt.meta.lambda = r.get<float>("lambda");
  ckpt.meta.seed = r.get<std::uint64_t>("seed");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    TensorRecord rec;
    const auto len = r.get<std::uint16_t>("name length");
    rec.name.resize(len);
    r.get_bytes(rec.name.data(), len, "name");
    const auto ndim = r.get<std::uint8_t>("ndim");
    Shape shape(ndim);
    for (auto& d : shape) d = r.get<std::uint32_t>("dims");
    std::size_t numel = 1;
    for (auto d : shape) {
      if (d == 0) throw CheckpointError(CheckpointFault::Truncated, "zero dimension in tensor " + rec.name);
      numel *= d;
    }
    if (ndim == 0 || numel > (r.size() - r.pos()) / sizeof(float))
      throw CheckpointError(CheckpointFault::Truncated, "truncated checkpoint: tensor " + rec.name +
                                                            " needs " + std::to_string(numel) + " floats at offset " +
                                                            std::to_string(r.pos()));
    std::vector<float> data(numel);
    r.get_bytes(data.data(), numel * sizeof(float), "tensor data");
    rec.value = Tensor(std::move(shape), std::move(data));
    ckpt.tensors.push_back(std::move(rec));
  }
  if (r.pos() != r.size())
    throw CheckpointError(CheckpointFault::Truncated, "trailing bytes after checkpoint at offset " +
                                                          std::to_string(r.pos()));
  return ckpt;
}

Checkpoint make_checkpoint(const Model& model, const NormStats& norm, const CheckpointMeta& meta) {
  Checkpoint ckpt;
  ckpt.meta = meta;
  Tensor arch({model.layers.size(), kArchCols});
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    float* row = arch.data().data() + i * kArchCols;
    const auto& layer = model.layers[i];
    auto put_kind = [&](const SimilarityKind& k) {
      row[1] = static_cast<float>(k.tag);
      row[2] = k.lambda;
      row[5] = static_cast<float>(k.adder_grad);
    };
    if (auto* c = std::get_if<SimConv2d>(&layer)) {
      row[0] = static_cast<float>(LayerType::SimConv2d);
      put_kind(c->kind);
      row[3] = static_cast<float>(c->params.stride);
      row[4] = static_cast<float>(c->params.pad);
    } else if (auto* d = std::get_if<SimDense>(&layer)) {
      row[0] = static_cast<float>(LayerType::SimDense);
      put_kind(d->kind);
    } else if (std::holds_alternative<BatchNorm>(layer)) {
      row[0] = static_cast<float>(LayerType::BatchNorm);
    } else if (std::holds_alternative<ReLU>(layer)) {
      row[0] = static_cast<float>(LayerType::ReLU);
    } else if (std::holds_alternative<MaxPool2x2>(layer)) {
      row[0] = static_cast<float>(LayerType::MaxPool2x2);
    } else {
      row[0] = static_cast<float>(LayerType::Flatten);
    }
  }
  ckpt.tensors.push_back({"model.arch", std::move(arch)});
  ckpt.tensors.push_back({"model.io", Tensor({4}, {static_cast<float>(model.input_shape.at(0)),
                                                   static_cast<float>(model.input_shape.at(1)),
                                                   static_cast<float>(model.input_shape.at(2)),
                                                   static_cast<float>(model.class_count)})});
  if (!norm.mean.empty()) {
    ckpt.tensors.push_back({"norm.mean", Tensor({norm.mean.size()}, norm.mean)});
    ckpt.tensors.push_back({"norm.std", Tensor({norm.std.size()}, norm.std)});
  }
  Model copy = model;
  for (const auto& s : model_state(copy)) ckpt.tensors.push_back({s.name, *s.value});
  return ckpt;
}

void checkpoint_save(const Model& model, const NormStats& norm, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(make_checkpoint(model, norm, meta)));
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const DataError& e) {
    throw CheckpointError(CheckpointFault::Io, e.what());
  }
  return decode_checkpoint(bytes);
}

NormStats norm_from_checkpoint(const Checkpoint& ckpt) {
  NormStats st;
  const auto* mean = ckpt.find("norm.mean");
  const auto* sd = ckpt.find("norm.std");
  if (!mean || !sd) throw CheckpointError(CheckpointFault::Incompatible, "checkpoint lacks normalization stats");
  st.mean = mean->values();
  st.std = sd->values();
  return st;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  const auto* arch = ckpt.find("model.arch");
  const auto* io = ckpt.find("model.io");
  if (!arch || !io || arch->ndim() != 2 || arch->dim(1) != kArchCols || io->size() != 4)
    throw CheckpointError(CheckpointFault::Incompatible, "checkpoint lacks a model architecture record");
  Model m;
  m.input_shape = {static_cast<std::size_t>((*io)[0]), static_cast<std::size_t>((*io)[1]),
                   static_cast<std::size_t>((*io)[2])};
  m.class_count = static_cast<std::size_t>((*io)[3]);
  auto shape_of = [&](std::size_t i, const char* field) {
    const auto name = "layer" + std::to_string(i) + "." + field;
    const auto* t = ckpt.find(name);
    if (!t) throw CheckpointError(CheckpointFault::Incompatible, "checkpoint missing tensor " + name);
    return t->shape();
  };
  for (std::size_t i = 0; i < arch->dim(0); ++i) {
    const float* row = arch->data().data() + i * kArchCols;
    SimilarityKind kind{static_cast<SimTag>(static_cast<int>(row[1])), row[2],
                        static_cast<AdderGrad>(static_cast<int>(row[5]))};
    switch (static_cast<LayerType>(static_cast<int>(row[0]))) {
      case LayerType::SimConv2d:
        m.layers.emplace_back(SimConv2d{Tensor(shape_of(i, "weight")),
                                        {static_cast<int>(row[3]), static_cast<int>(row[4])}, kind});
        break;
      case LayerType::SimDense: m.layers.emplace_back(SimDense{Tensor(shape_of(i, "weight")), kind}); break;
      case LayerType::BatchNorm: m.layers.emplace_back(make_batchnorm(shape_of(i, "gamma").at(0))); break;
      case LayerType::ReLU: m.layers.emplace_back(ReLU{}); break;
      case LayerType::MaxPool2x2: m.layers.emplace_back(MaxPool2x2{}); break;
      case LayerType::Flatten: m.layers.emplace_back(Flatten{}); break;
      default:
        throw CheckpointError(CheckpointFault::Incompatible, "unknown layer type in architecture row " +
                                                                 std::to_string(i));
    }
  }
  try {
    validate_model(m);
  } catch (const Error& e) {
    throw CheckpointError(CheckpointFault::Incompatible, std::string("inconsistent architecture: ") + e.what());
  }
  load_state(m, ckpt);
  return m;
}

void load_state(Model& model, const Checkpoint& ckpt) {
  std::string problems;
  auto state = model_state(model);
  for (const auto& s : state) {
    const auto* t = ckpt.find(s.name);
    if (!t)
      problems += " " + s.name + "(missing)";
    else if (t->shape() != s.value->shape())
      problems += " " + s.name + "(" + shape_to_string(t->shape()) + " vs " + shape_to_string(s.value->shape()) + ")";
  }
  for (const auto& r : ckpt.tensors) {
    if (r.name.rfind("layer", 0) != 0) continue;
    bool known = false;
    for (const auto& s : state) known = known || s.name == r.name;
    if (!known) problems += " " + r.name + "(unexpected)";
  }
  if (!problems.empty())
    throw CheckpointError(CheckpointFault::Incompatible, "checkpoint incompatible with model:" + problems);
  for (auto& s : state) *s.value = *ckpt.find(s.name);
}

}  // namespace euclidnet
