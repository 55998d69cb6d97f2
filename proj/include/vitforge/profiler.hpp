#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitforge/dataset.hpp"
#include "vitforge/errors.hpp"
#include "vitforge/threading.hpp"
#include "vitforge/train.hpp"
#include "vitforge/vit.hpp"

namespace vitforge {

// Analytic memory account: parameter floats, optionally the two Adam moment
// buffers, and the cached activations for one batch, at 4 bytes each. This is
// a pure function of (config, batch size) -- it is a model of the training
// working set, not a probe of process memory, and the report says so.
inline long long analytic_memory_bytes(const ViTConfig& cfg, int batch_size,
                                       bool include_optimizer) {
  const long long params = param_count(cfg);
  const long long moments = include_optimizer ? 2 * params : 0;
  const long long activations =
      static_cast<long long>(batch_size) * activation_floats_per_image(cfg);
  return 4 * (params + moments + activations);
}

struct ProfileReport {
  double forward_s_per_batch = 0.0;
  double backward_s_per_batch = 0.0;
  double train_s_per_epoch = 0.0;
  double inference_s_per_batch = 0.0;
  double memory_mb = 0.0;
  std::string environment;
  int batch_size = 0;
  int batches_per_epoch = 0;
  int threads = 0;
  std::vector<double> forward_samples;
  std::vector<double> backward_samples;
  std::vector<double> train_step_samples;
  std::vector<double> inference_samples;
};

struct ProfileOptions {
  int warmup_batches = 3;
  int timed_batches = 10;
  bool include_optimizer = true;
};

namespace detail {

inline double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace detail

// Times forward, backward, full training step and no-cache inference per
// batch with a monotonic clock, reporting medians over the timed batches
// after the warm-up rounds. The model is copied internally, so profiling
// leaves the caller's parameters untouched. Batches are cycled as needed;
// `data` must be non-empty.
inline ProfileReport profile(const ViTModel& model, const std::vector<Batch>& data,
                             const TrainConfig& cfg,
                             const ProfileOptions& opts = {}) {
  if (data.empty()) throw ConfigError("profile: no batches to time");
  if (opts.timed_batches < 1) throw ConfigError("profile: timed_batches must be >= 1");
  model.config.validate();

  ViTModel scratch{model.config, model.params, model.class_names};
  AdamState adam = make_adam_state(scratch.config);
  ViTParams grads = make_params<float>(scratch.config);
  using Clock = std::chrono::steady_clock;
  const auto seconds = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
  };

  ProfileReport report;
  report.batch_size = data.front().size();
  report.batches_per_epoch = static_cast<int>(data.size());
  report.threads = max_threads();

  const auto batch_at = [&](int i) -> const Batch& {
    return data[static_cast<std::size_t>(i) % data.size()];
  };

  const int total = opts.warmup_batches + opts.timed_batches;
  for (int i = 0; i < total; ++i) {
    const Batch& batch = batch_at(i);
    const bool timed = i >= opts.warmup_batches;

    const auto t0 = Clock::now();
    Tensor inference_logits = vit_forward(batch.images, scratch.params, scratch.config);
    const auto t1 = Clock::now();

    ForwardCache cache;
    const auto t2 = Clock::now();
    Tensor logits = vit_forward(batch.images, scratch.params, scratch.config, &cache);
    const auto t3 = Clock::now();

    LossResult loss = cross_entropy_loss(logits, batch.labels);
    zero_params(grads);
    const auto t4 = Clock::now();
    vit_backward(loss.logit_grads, scratch.params, scratch.config, cache, grads);
    const auto t5 = Clock::now();
    adam_step(scratch.params, grads, adam, cfg);
    const auto t6 = Clock::now();

    if (timed) {
      report.inference_samples.push_back(seconds(t0, t1));
      report.forward_samples.push_back(seconds(t2, t3));
      report.backward_samples.push_back(seconds(t4, t5));
      report.train_step_samples.push_back(seconds(t2, t3) + seconds(t3, t4) +
                                          seconds(t4, t5) + seconds(t5, t6));
    }
  }

  report.forward_s_per_batch = detail::median(report.forward_samples);
  report.backward_s_per_batch = detail::median(report.backward_samples);
  report.inference_s_per_batch = detail::median(report.inference_samples);
  report.train_s_per_epoch =
      detail::median(report.train_step_samples) * report.batches_per_epoch;
  report.memory_mb =
      static_cast<double>(analytic_memory_bytes(scratch.config, report.batch_size,
                                                opts.include_optimizer)) /
      (1024.0 * 1024.0);
  report.environment = "threads=" + std::to_string(report.threads) +
                       ", memory=analytic model (params + optimizer moments + "
                       "activations), not process RSS";
  return report;
}

// The five fixed report lines, then the environment note.
inline std::string render_profile_text(const ProfileReport& report) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "Memory Used: %.2f MB\n", report.memory_mb);
  out += buf;
  std::snprintf(buf, sizeof(buf), "Forward Pass Time per Batch: %.6f seconds\n",
                report.forward_s_per_batch);
  out += buf;
  std::snprintf(buf, sizeof(buf), "Backward Pass Time per Batch: %.6f seconds\n",
                report.backward_s_per_batch);
  out += buf;
  std::snprintf(buf, sizeof(buf), "Training Time per Epoch: %.2f seconds\n",
                report.train_s_per_epoch);
  out += buf;
  std::snprintf(buf, sizeof(buf), "Inference Time per Batch: %.6f seconds\n",
                report.inference_s_per_batch);
  out += buf;
  out += "Environment: " + report.environment + "\n";
  return out;
}

inline nlohmann::json profile_to_json(const ProfileReport& report) {
  return {{"memory_mb", report.memory_mb},
          {"forward_s_per_batch", report.forward_s_per_batch},
          {"backward_s_per_batch", report.backward_s_per_batch},
          {"train_s_per_epoch", report.train_s_per_epoch},
          {"inference_s_per_batch", report.inference_s_per_batch},
          {"batch_size", report.batch_size},
          {"batches_per_epoch", report.batches_per_epoch},
          {"threads", report.threads},
          {"environment", report.environment},
          {"samples",
           {{"forward", report.forward_samples},
            {"backward", report.backward_samples},
            {"train_step", report.train_step_samples},
            {"inference", report.inference_samples}}}};
}

inline ProfileReport profile_from_json(const nlohmann::json& j) {
  ProfileReport r;
  try {
    r.memory_mb = j.at("memory_mb").get<double>();
    r.forward_s_per_batch = j.at("forward_s_per_batch").get<double>();
    r.backward_s_per_batch = j.at("backward_s_per_batch").get<double>();
    r.train_s_per_epoch = j.at("train_s_per_epoch").get<double>();
    r.inference_s_per_batch = j.at("inference_s_per_batch").get<double>();
    r.batch_size = j.at("batch_size").get<int>();
    r.batches_per_epoch = j.at("batches_per_epoch").get<int>();
    r.threads = j.at("threads").get<int>();
    r.environment = j.at("environment").get<std::string>();
    r.forward_samples = j.at("samples").at("forward").get<std::vector<double>>();
    r.backward_samples = j.at("samples").at("backward").get<std::vector<double>>();
    r.train_step_samples = j.at("samples").at("train_step").get<std::vector<double>>();
    r.inference_samples = j.at("samples").at("inference").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("profile JSON: ") + e.what());
  }
  return r;
}

}  // namespace vitforge
