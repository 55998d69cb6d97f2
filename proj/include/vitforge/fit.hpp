#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitforge/checkpoint.hpp"
#include "vitforge/dataset.hpp"
#include "vitforge/train.hpp"
#include "vitforge/vit.hpp"

namespace vitforge {

struct FitOptions {
  TrainConfig train;
  PipelineOptions pipeline;
  bool save_best_val = false;
  std::string best_checkpoint_path;
  std::ostream* log = &std::cout;    // one epoch line per epoch
  std::ostream* jsonl = nullptr;     // full-precision epoch records
};

inline nlohmann::json epoch_log_to_json(const EpochLog& log) {
  return {{"epoch", log.epoch},
          {"train_loss", log.train_loss},
          {"train_acc", log.train_acc},
          {"val_loss", log.val_loss},
          {"val_acc", log.val_acc}};
}

// The train/validate protocol: for each epoch, a shuffled training pass then
// a sequential validation pass, one log line per epoch. The final-epoch
// weights are written to train.checkpoint_path; when save_best_val is set
// the best-validation-accuracy epoch is additionally kept.
inline std::vector<EpochLog> fit(ViTModel& model,
                                 const DatasetManifest& train_manifest,
                                 const DatasetManifest& val_manifest,
                                 const FitOptions& opts) {
  if (train_manifest.entries.empty()) {
    throw ConfigError("training manifest is empty");
  }
  if (val_manifest.entries.empty()) {
    throw ConfigError("validation manifest is empty");
  }
  opts.train.validate();
  model.config.validate();
  if (model.class_names.empty()) model.class_names = train_manifest.class_names;

  PipelineOptions pipe = opts.pipeline;
  pipe.image_size = model.config.image_size;
  ManifestBatchSource train_src(train_manifest, pipe, opts.train.batch_size,
                                /*shuffle=*/true, opts.train.seed);
  ManifestBatchSource val_src(val_manifest, pipe, opts.train.batch_size,
                              /*shuffle=*/false, opts.train.seed);

  AdamState adam = make_adam_state(model.config);
  std::vector<EpochLog> logs;
  logs.reserve(static_cast<std::size_t>(opts.train.epochs));

  double best_val_acc = -1.0;
  ViTParams best_params;
  AdamState best_adam;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= opts.train.epochs; ++epoch) {
    train_src.reset(static_cast<std::uint64_t>(epoch - 1));
    const EpochStats tr = run_epoch(model, train_src, &adam, opts.train,
                                    EpochMode::kTrain);
    val_src.reset(0);
    const EpochStats va =
        run_epoch(model, val_src, nullptr, opts.train, EpochMode::kEval);

    const EpochLog log{epoch, tr.loss, tr.accuracy_pct, va.loss, va.accuracy_pct};
    logs.push_back(log);
    if (opts.log) {
      *opts.log << format_epoch_line(log, opts.train.epochs) << "\n" << std::flush;
    }
    if (opts.jsonl) *opts.jsonl << epoch_log_to_json(log).dump() << "\n";

    if (opts.save_best_val && va.accuracy_pct > best_val_acc) {
      best_val_acc = va.accuracy_pct;
      best_params = model.params;
      best_adam = adam;
      best_epoch = epoch;
    }
  }

  const auto make_checkpoint = [&](const ViTParams& params, const AdamState& state,
                                   int epoch) {
    Checkpoint ckpt;
    ckpt.config = model.config;
    ckpt.train_config = opts.train;
    // the artifact location is not training configuration; identical runs
    // into different directories must produce byte-identical checkpoints
    ckpt.train_config.checkpoint_path.clear();
    ckpt.epoch = epoch;
    ckpt.rng_state = opts.train.seed;
    ckpt.class_names = model.class_names;
    ckpt.params = params;
    ckpt.adam = state;
    return ckpt;
  };

  if (!opts.train.checkpoint_path.empty()) {
    save_checkpoint(make_checkpoint(model.params, adam, opts.train.epochs),
                    opts.train.checkpoint_path);
  }
  if (opts.save_best_val && !opts.best_checkpoint_path.empty() && best_epoch > 0) {
    save_checkpoint(make_checkpoint(best_params, best_adam, best_epoch),
                    opts.best_checkpoint_path);
  }
  return logs;
}

}  // namespace vitforge
