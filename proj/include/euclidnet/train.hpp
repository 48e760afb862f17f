#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "euclidnet/checkpoint.hpp"
#include "euclidnet/data.hpp"
#include "euclidnet/nn.hpp"
#include "euclidnet/similarity.hpp"

namespace euclidnet {

struct TrainConfig {
  float lr0 = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  int epochs = 10;
  std::size_t batch_size = 64;
  float eta = 0.0f;  // per-layer gradient scaling for similarity weights; 0 disables
  std::optional<HomotopySchedule> homotopy;
  std::uint64_t seed = 1;
  AugmentOptions augment;
  bool freeze_bn_stats = false;
};

void validate(const TrainConfig& cfg);

/// lr0 * (1 + cos(pi * epoch / epochs)) / 2.
float cosine_lr(const TrainConfig& cfg, int epoch);

struct SgdState {
  std::vector<Tensor> velocity;
};

/// v <- momentum v + g + wd p;  p <- p - lr * scale * v, where scale is
/// eta * sqrt(numel) / (||g|| + 1e-12) for similarity weights when eta > 0.
void sgd_step(const std::vector<ParamRef>& params, const GradientSet& grads, SgdState& state,
              const TrainConfig& cfg, float lr);

struct EpochMetrics {
  float loss = 0.0f;
  float top1 = 0.0f;
};

struct EvalMetrics {
  float loss = 0.0f;
  float top1 = 0.0f;
  float top5 = 0.0f;
  std::size_t n = 0;
};

/// One shuffled pass (seeded by cfg.seed and epoch) over `data`.
EpochMetrics train_epoch(Model& model, const Dataset& data, const NormStats& norm, const TrainConfig& cfg,
                         int epoch, SgdState& state);

/// Inference-mode evaluation. Top-5 counts labels among the 5 highest logits
/// (ties by lower index); with fewer than 5 classes it is 1.
EvalMetrics evaluate(const Model& model, const Dataset& data, const NormStats& norm, std::size_t batch_size = 256);

/// Fraction of samples whose label is among the k highest logits.
float topk_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t k);

struct MetricsRow {
  int epoch = 0;
  std::string split;
  float loss = 0.0f;
  float top1 = 0.0f;
  float lambda = 0.0f;
  float lr = 0.0f;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Lambda reported for a similarity: Conv 0, Euclid 1, Homotopy its lambda.
float effective_lambda(const SimilarityKind& kind);

using RowCallback = std::function<void(const MetricsRow&)>;

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::vector<float> lambda_trace;  // lambda used at each epoch (homotopy runs)
};

/// Runs cfg.epochs epochs with cosine decay, evaluating on `test` when given.
/// With cfg.homotopy set, every similarity layer is switched to
/// Homotopy(lambda_at(schedule, epoch)) before each epoch.
TrainResult train(Model& model, const Dataset& train_set, const Dataset* test_set, const NormStats& norm,
                  const TrainConfig& cfg, const RowCallback& on_row = {});

struct FinetuneResult {
  Model model;
  TrainResult history;
};

/// Loads Conv-trained weights into `target`'s architecture and walks lambda
/// from lambda0 to 1 over epochs k = 0..n (n + 1 passes), then freezes every
/// similarity layer to Euclid.
FinetuneResult finetune_homotopy(const Checkpoint& conv_ckpt, Model target, const Dataset& train_set,
                                 const Dataset* test_set, const NormStats& norm, const TrainConfig& cfg,
                                 const RowCallback& on_row = {});

}  // namespace euclidnet
