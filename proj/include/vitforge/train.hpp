#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "vitforge/dataset.hpp"
#include "vitforge/errors.hpp"
#include "vitforge/tensor.hpp"
#include "vitforge/vit.hpp"

namespace vitforge {

struct TrainConfig {
  int batch_size = 32;
  float learning_rate = 1e-4f;
  int epochs = 10;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float weight_decay = 0.0f;
  std::uint64_t seed = 42;
  std::string checkpoint_path;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0f)) throw ConfigError("learning_rate must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (adam_beta1 < 0.0f || adam_beta1 >= 1.0f || adam_beta2 < 0.0f ||
        adam_beta2 >= 1.0f) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0f)) throw ConfigError("adam_eps must be > 0");
    if (weight_decay < 0.0f) throw ConfigError("weight_decay must be >= 0");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Per-epoch record: losses are sample-weighted means, accuracies percentages.
struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

inline std::string format_epoch_line(const EpochLog& log, int total_epochs) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "Epoch [%d/%d] -> Train Loss: %.4f, Train Acc: %.2f%% | "
                "Val Loss: %.4f, Val Acc: %.2f%%",
                log.epoch, total_epochs, log.train_loss, log.train_acc, log.val_loss,
                log.val_acc);
  return buf;
}

struct LossResult {
  double loss = 0.0;
  Tensor logit_grads;  // (softmax - onehot) / B
};

// Mean cross-entropy over the batch, computed with log-sum-exp so confident
// predictions never pass through a rounded probability. Also returns the
// analytic logit gradient.
inline LossResult cross_entropy_loss(const Tensor& logits,
                                     const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw DimensionError("cross_entropy_loss expects [B, C] logits, got " +
                         logits.shape_str());
  }
  const int batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int>(labels.size()) != batch) {
    throw DimensionError("labels length " + std::to_string(labels.size()) +
                         " does not match batch " + std::to_string(batch));
  }
  LossResult result;
  result.logit_grads = Tensor({batch, classes});
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const int label = labels[static_cast<std::size_t>(b)];
    if (label < 0 || label >= classes) {
      throw DataError("label " + std::to_string(label) + " out of range [0, " +
                      std::to_string(classes) + ") at batch index " +
                      std::to_string(b));
    }
    const auto row = logits.row(b);
    double mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
    const double lse = mx + std::log(sum);
    total += lse - static_cast<double>(row[static_cast<std::size_t>(label)]);
    for (int c = 0; c < classes; ++c) {
      const double p = std::exp(static_cast<double>(row[c]) - mx) / sum;
      const double onehot = (c == label) ? 1.0 : 0.0;
      result.logit_grads.at(b, c) = static_cast<float>((p - onehot) / batch);
    }
  }
  result.loss = total / batch;
  return result;
}

// Optimizer moments mirroring the parameter shapes, plus the step counter.
struct AdamState {
  ViTParams m;
  ViTParams v;
  long long t = 0;
};

inline AdamState make_adam_state(const ViTConfig& cfg) {
  return {make_params<float>(cfg), make_params<float>(cfg), 0};
}

namespace detail {

inline void adam_update_tensor(Tensor& theta, const Tensor& grad, Tensor& m,
                               Tensor& v, const TrainConfig& cfg, double bc1,
                               double bc2) {
  if (!theta.same_shape(grad) || !theta.same_shape(m) || !theta.same_shape(v)) {
    throw DimensionError("adam_step: gradient/state shape " + grad.shape_str() +
                         " does not match parameter " + theta.shape_str());
  }
  const float b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double lr = cfg.learning_rate, eps = cfg.adam_eps, wd = cfg.weight_decay;
  float* pt = theta.data();
  const float* pg = grad.data();
  float* pm = m.data();
  float* pv = v.data();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const float g = pg[i];
    pm[i] = b1 * pm[i] + (1.0f - b1) * g;
    pv[i] = b2 * pv[i] + (1.0f - b2) * g * g;
    const double mhat = pm[i] / bc1;
    const double vhat = pv[i] / bc2;
    double step = lr * (mhat / (std::sqrt(vhat) + eps));
    if (wd > 0.0) step += lr * wd * pt[i];
    pt[i] = static_cast<float>(pt[i] - step);
  }
}

}  // namespace detail

// One Adam update with bias correction; decoupled weight decay applies only
// when weight_decay > 0. Advances state.t before the update.
inline void adam_step(ViTParams& params, const ViTParams& grads, AdamState& state,
                      const TrainConfig& cfg) {
  cfg.validate();
  state.t += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.adam_beta1),
                                    static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.adam_beta2),
                                    static_cast<double>(state.t));
  auto theta_refs = param_refs(params);
  auto grad_refs = param_refs(const_cast<ViTParams&>(grads));
  auto m_refs = param_refs(state.m);
  auto v_refs = param_refs(state.v);
  if (grad_refs.size() != theta_refs.size() || m_refs.size() != theta_refs.size()) {
    throw DimensionError("adam_step: parameter/gradient/state structures differ");
  }
  for (std::size_t i = 0; i < theta_refs.size(); ++i) {
    detail::adam_update_tensor(*theta_refs[i].second, *grad_refs[i].second,
                               *m_refs[i].second, *v_refs[i].second, cfg, bc1, bc2);
  }
}

enum class EpochMode { kTrain, kEval };

struct EpochStats {
  double loss = 0.0;
  double accuracy_pct = 0.0;
  std::size_t samples = 0;
};

// One pass over the batch stream. Train mode runs forward/loss/backward/adam
// per batch; eval mode mutates nothing. Loss is the sample-weighted mean,
// accuracy the argmax match rate in percent.
inline EpochStats run_epoch(ViTModel& model, BatchSource& data, AdamState* adam,
                            const TrainConfig& cfg, EpochMode mode) {
  if (mode == EpochMode::kTrain && adam == nullptr) {
    throw StateError("train epoch requires optimizer state");
  }
  ViTParams grads;
  if (mode == EpochMode::kTrain) grads = make_params<float>(model.config);

  double loss_sum = 0.0;
  std::size_t correct = 0, total = 0, batch_index = 0;
  while (auto batch = data.next()) {
    const int bsize = batch->size();
    try {
      ForwardCache cache;
      Tensor logits =
          vit_forward(batch->images, model.params, model.config,
                      mode == EpochMode::kTrain ? &cache : nullptr);
      LossResult loss = cross_entropy_loss(logits, batch->labels);
      loss_sum += loss.loss * bsize;
      for (int b = 0; b < bsize; ++b) {
        int argmax = 0;
        for (int c = 1; c < model.config.num_classes; ++c) {
          if (logits.at(b, c) > logits.at(b, argmax)) argmax = c;
        }
        if (argmax == batch->labels[static_cast<std::size_t>(b)]) ++correct;
      }
      total += static_cast<std::size_t>(bsize);
      if (mode == EpochMode::kTrain) {
        zero_params(grads);
        vit_backward(loss.logit_grads, model.params, model.config, cache, grads);
        adam_step(model.params, grads, *adam, cfg);
      }
    } catch (const NumericError& e) {
      throw NumericError("batch " + std::to_string(batch_index) + ": " + e.what());
    }
    ++batch_index;
  }
  if (total == 0) throw ConfigError("epoch ran over an empty batch stream");
  return {loss_sum / static_cast<double>(total),
          100.0 * static_cast<double>(correct) / static_cast<double>(total), total};
}

}  // namespace vitforge
