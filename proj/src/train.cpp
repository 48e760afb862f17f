#include "euclidnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "euclidnet/error.hpp"

namespace euclidnet {

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr0 >= 0.0f) || !std::isfinite(cfg.lr0)) throw Error(ErrorCode::Config, "lr0 must be finite and >= 0");
  if (!(cfg.momentum >= 0.0f && cfg.momentum < 1.0f)) throw Error(ErrorCode::Config, "momentum must lie in [0,1)");
  if (cfg.weight_decay < 0.0f) throw Error(ErrorCode::Config, "weight_decay must be >= 0");
  if (cfg.epochs < 1) throw Error(ErrorCode::Config, "epochs must be >= 1");
  if (cfg.batch_size < 1) throw Error(ErrorCode::Config, "batch_size must be >= 1");
  if (cfg.eta < 0.0f) throw Error(ErrorCode::Config, "eta must be >= 0");
  if (cfg.homotopy) validate(*cfg.homotopy);
}

float cosine_lr(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw Error(ErrorCode::Range, "epoch " + std::to_string(epoch) + " outside [0," + std::to_string(cfg.epochs) + ")");
  const double phase = std::numbers::pi * epoch / cfg.epochs;
  return static_cast<float>(cfg.lr0 * 0.5 * (1.0 + std::cos(phase)));
}

void sgd_step(const std::vector<ParamRef>& params, const GradientSet& grads, SgdState& state,
              const TrainConfig& cfg, float lr) {
  if (params.size() != grads.size())
    throw Error(ErrorCode::Shape, "parameter/gradient count mismatch: " + std::to_string(params.size()) + " vs " +
                                      std::to_string(grads.size()));
  if (state.velocity.empty())
    for (const auto& p : params) state.velocity.emplace_back(p.value->shape());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].value;
    const auto& g = grads[i].grad;
    auto& v = state.velocity[i];
    if (g.shape() != p.shape() || v.shape() != p.shape())
      throw Error(ErrorCode::Shape, "gradient shape mismatch for layer " + std::to_string(params[i].layer) + "." +
                                        params[i].name);
    float norm2 = 0.0f;
    for (float x : g.values()) {
      if (!std::isfinite(x))
        throw Error(ErrorCode::Divergence, "non-finite gradient in layer " + std::to_string(params[i].layer) + "." +
                                               params[i].name);
      norm2 += x * x;
    }
    float scale = 1.0f;
    if (params[i].similarity && cfg.eta > 0.0f)
      scale = cfg.eta * std::sqrt(static_cast<float>(g.size())) / (std::sqrt(norm2) + 1e-12f);
    const float step = lr * scale;
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = cfg.momentum * v[j] + g[j] + cfg.weight_decay * p[j];
      p[j] -= step * v[j];
    }
  }
}

float topk_accuracy(const Tensor& logits, const std::vector<int>& labels, std::size_t k) {
  const auto N = logits.dim(0), C = logits.dim(1);
  if (C <= k) return 1.0f;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < N; ++n) {
    const float* z = logits.data().data() + n * C;
    const auto label = static_cast<std::size_t>(labels[n]);
    // Rank of the label: classes strictly ahead of it, with ties going to the lower index.
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < C; ++c)
      if (z[c] > z[label] || (z[c] == z[label] && c < label)) ++ahead;
    if (ahead < k) ++hits;
  }
  return static_cast<float>(hits) / static_cast<float>(N);
}

EpochMetrics train_epoch(Model& model, const Dataset& data, const NormStats& norm, const TrainConfig& cfg,
                         int epoch, SgdState& state) {
  if (data.size() == 0) throw Error(ErrorCode::Data, "training set is empty");
  const float lr = cosine_lr(cfg, epoch);
  const std::uint64_t epoch_seed = cfg.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) + 1;
  std::mt19937_64 aug_rng(epoch_seed ^ 0xA5A5A5A5ull);
  set_freeze_bn_stats(model, cfg.freeze_bn_stats);
  auto params = model_parameters(model);
  auto it = batches(data, cfg.batch_size, epoch_seed, true);
  double loss_sum = 0.0;
  std::size_t correct = 0, seen = 0, batch_index = 0;
  ForwardTape tape;
  while (auto batch = it.next()) {
    try {
      const auto images = augment_batch(batch->images, aug_rng, cfg.augment);
      const auto logits = model_forward(model, normalize(images, norm), true, &tape);
      auto loss = softmax_cross_entropy(logits, batch->labels);
      if (!std::isfinite(loss.loss)) throw Error(ErrorCode::Divergence, "non-finite loss");
      const auto grads = model_backward(model, tape, loss.grad);
      sgd_step(params, grads, state, cfg, lr);
      const auto pred = argmax_row(logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == static_cast<std::size_t>(batch->labels[i]);
      loss_sum += static_cast<double>(loss.loss) * static_cast<double>(pred.size());
      seen += pred.size();
    } catch (const Error& e) {
      throw Error(e.code(), "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index) + ": " + e.what());
    }
    ++batch_index;
  }
  return {static_cast<float>(loss_sum / static_cast<double>(seen)),
          static_cast<float>(correct) / static_cast<float>(seen)};
}

EvalMetrics evaluate(const Model& model, const Dataset& data, const NormStats& norm, std::size_t batch_size) {
  if (data.size() == 0) throw Error(ErrorCode::Data, "evaluation set is empty");
  EvalMetrics m;
  double loss_sum = 0.0, top1 = 0.0, top5 = 0.0;
  auto it = batches(data, batch_size, 0, false);
  while (auto batch = it.next()) {
    const auto logits = model_infer(model, normalize(batch->images, norm));
    const auto loss = softmax_cross_entropy(logits, batch->labels);
    const auto n = static_cast<double>(batch->labels.size());
    loss_sum += loss.loss * n;
    top1 += topk_accuracy(logits, batch->labels, 1) * n;
    top5 += topk_accuracy(logits, batch->labels, 5) * n;
    m.n += batch->labels.size();
  }
  const auto total = static_cast<double>(m.n);
  m.loss = static_cast<float>(loss_sum / total);
  m.top1 = static_cast<float>(top1 / total);
  m.top5 = static_cast<float>(top5 / total);
  return m;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "epoch,split,loss,top1,lambda,lr\n";
  os << std::setprecision(9);
  for (const auto& r : rows)
    os << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.top1 << ',' << r.lambda << ',' << r.lr << '\n';
  return os.str();
}

float effective_lambda(const SimilarityKind& kind) {
  switch (kind.tag) {
    case SimTag::Euclid: return 1.0f;
    case SimTag::Homotopy: return kind.lambda;
    default: return 0.0f;
  }
}

namespace {

SimilarityKind first_similarity(const Model& model) {
  for (const auto& layer : model.layers) {
    if (auto* c = std::get_if<SimConv2d>(&layer)) return c->kind;
    if (auto* d = std::get_if<SimDense>(&layer)) return d->kind;
  }
  return SimilarityKind::conv();
}

}  // namespace

TrainResult train(Model& model, const Dataset& train_set, const Dataset* test_set, const NormStats& norm,
                  const TrainConfig& cfg, const RowCallback& on_row) {
  validate(cfg);
  TrainResult result;
  SgdState state;
  auto emit = [&](MetricsRow row) {
    if (on_row) on_row(row);
    result.rows.push_back(std::move(row));
  };
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.homotopy) {
      const float lambda = lambda_at(*cfg.homotopy, std::min(epoch, cfg.homotopy->epochs));
      set_similarity(model, SimilarityKind::homotopy(lambda));
      result.lambda_trace.push_back(lambda);
    }
    const float lr = cosine_lr(cfg, epoch);
    const float lambda = effective_lambda(first_similarity(model));
    const auto m = train_epoch(model, train_set, norm, cfg, epoch, state);
    emit({epoch, "train", m.loss, m.top1, lambda, lr});
    if (test_set) {
      const auto e = evaluate(model, *test_set, norm);
      emit({epoch, "test", e.loss, e.top1, lambda, lr});
    }
  }
  return result;
}

FinetuneResult finetune_homotopy(const Checkpoint& conv_ckpt, Model target, const Dataset& train_set,
                                 const Dataset* test_set, const NormStats& norm, const TrainConfig& cfg,
                                 const RowCallback& on_row) {
  if (!cfg.homotopy) throw Error(ErrorCode::Config, "finetune_homotopy needs a homotopy schedule");
  validate(*cfg.homotopy);
  load_state(target, conv_ckpt);
  TrainConfig run = cfg;
  run.epochs = cfg.homotopy->epochs + 1;
  FinetuneResult out{std::move(target), {}};
  out.history = train(out.model, train_set, test_set, norm, run, on_row);
  set_similarity(out.model, SimilarityKind::euclid());
  return out;
}

}  // namespace euclidnet
