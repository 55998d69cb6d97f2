// vitforge command-line front end: dataset scanning, training, evaluation,
// single-image prediction, and profiling.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vitforge/run_config.hpp"
#include "vitforge/vitforge.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSplits[] = {"train", "val", "test"};

std::string counts_line(const vitforge::DatasetManifest& m) {
  std::string line = m.split + ":";
  const auto counts = m.class_counts();
  for (std::size_t i = 0; i < m.class_names.size(); ++i) {
    line += (i == 0 ? " " : ", ") + m.class_names[i] + " " + std::to_string(counts[i]);
  }
  return line;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw vitforge::DataError("cannot write " + path.string());
  out << content;
}

void write_run_config(const vitforge::RunConfig& rc) {
  fs::create_directories(rc.output_dir);
  write_text_file(fs::path(rc.output_dir) / "run_config.json",
                  json(rc).dump(2) + "\n");
}

int positive_class_index(const std::vector<std::string>& class_names) {
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (class_names[i] == "fire") return static_cast<int>(i);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// scan
// ---------------------------------------------------------------------------

int cmd_scan(const vitforge::RunConfig& rc) {
  if (!fs::is_directory(rc.data_root)) {
    throw vitforge::ConfigError(
        "dataset root does not exist: " + rc.data_root +
        " (expected <root>/{train,val,test}/<class>/*.{jpg,jpeg,png})");
  }
  fs::create_directories(rc.output_dir);

  json summary = {{"splits", json::object()}};
  bool any = false;
  std::string human;
  for (const char* split : kSplits) {
    if (!fs::is_directory(fs::path(rc.data_root) / split)) continue;
    any = true;
    const vitforge::DatasetManifest m = vitforge::scan_dataset(rc.data_root, split);
    const fs::path manifest_path =
        fs::path(rc.output_dir) / ("manifest_" + std::string(split) + ".json");
    vitforge::save_manifest_json(m, manifest_path);
    human += counts_line(m) + "\n";
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";

    json classes = json::object();
    const auto counts = m.class_counts();
    for (std::size_t i = 0; i < m.class_names.size(); ++i) {
      classes[m.class_names[i]] = counts[i];
    }
    summary["splits"][split] = {{"classes", classes},
                                {"total", m.entries.size()},
                                {"manifest", manifest_path.string()}};
  }
  if (!any) {
    throw vitforge::ConfigError(
        "no train/val/test split directories under " + rc.data_root +
        " (expected <root>/{train,val,test}/<class>/*.{jpg,jpeg,png})");
  }
  if (rc.json_output) {
    std::cout << summary.dump(2) << "\n";
  } else {
    std::cout << human;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(vitforge::RunConfig rc) {
  const vitforge::ViTConfig config = rc.model_config();
  vitforge::DatasetManifest train_m = vitforge::scan_dataset(rc.data_root, "train");
  vitforge::DatasetManifest val_m = vitforge::scan_dataset(rc.data_root, "val");
  for (const auto& w : train_m.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& w : val_m.warnings) std::cerr << "warning: " << w << "\n";

  fs::create_directories(rc.output_dir);
  rc.train.checkpoint_path = (fs::path(rc.output_dir) / "model.vitf").string();
  write_run_config(rc);

  vitforge::ViTModel model{config, vitforge::init_params(config, rc.train.seed), {}};

  std::ofstream jsonl(fs::path(rc.output_dir) / "epochs.jsonl");
  vitforge::FitOptions opts;
  opts.train = rc.train;
  opts.pipeline.on_decode_error = vitforge::DecodePolicy::kSkipAndLog;
  opts.pipeline.log = &std::cerr;
  opts.save_best_val = rc.best_val;
  opts.best_checkpoint_path = (fs::path(rc.output_dir) / "model_best.vitf").string();
  opts.log = rc.json_output ? nullptr : &std::cout;
  opts.jsonl = &jsonl;

  const std::vector<vitforge::EpochLog> logs = vitforge::fit(model, train_m, val_m, opts);

  // plot-ready curves
  std::string csv = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& log : logs) {
    char row[160];
    std::snprintf(row, sizeof(row), "%d,%.6f,%.6f,%.6f,%.6f\n", log.epoch,
                  log.train_loss, log.train_acc, log.val_loss, log.val_acc);
    csv += row;
  }
  write_text_file(fs::path(rc.output_dir) / "curves.csv", csv);

  if (rc.json_output) {
    json out = {{"checkpoint", rc.train.checkpoint_path},
                {"curves", (fs::path(rc.output_dir) / "curves.csv").string()},
                {"epochs", json::array()}};
    for (const auto& log : logs) out["epochs"].push_back(vitforge::epoch_log_to_json(log));
    std::cout << out.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

int cmd_eval(const vitforge::RunConfig& rc) {
  const vitforge::Checkpoint ckpt = vitforge::load_checkpoint(rc.checkpoint);
  vitforge::DatasetManifest manifest = vitforge::scan_dataset(rc.data_root, rc.split);
  if (manifest.entries.empty()) {
    throw vitforge::ConfigError("split '" + rc.split + "' has no images");
  }
  if (!ckpt.class_names.empty() && manifest.class_names != ckpt.class_names) {
    throw vitforge::FormatError(
        "checkpoint classes do not match dataset classes for split " + rc.split);
  }

  vitforge::PipelineOptions pipe;
  pipe.image_size = ckpt.config.image_size;
  pipe.on_decode_error = vitforge::DecodePolicy::kAbort;
  vitforge::ManifestBatchSource source(manifest, pipe, ckpt.train_config.batch_size,
                                       /*shuffle=*/false, 0);

  const int positive = positive_class_index(manifest.class_names);
  std::vector<int> truth, predicted;
  std::vector<vitforge::ScoredPrediction> scored;
  double loss_sum = 0.0;
  std::size_t total = 0;

  while (auto batch = source.next()) {
    vitforge::Tensor logits =
        vitforge::vit_forward(batch->images, ckpt.params, ckpt.config);
    const vitforge::LossResult loss =
        vitforge::cross_entropy_loss(logits, batch->labels);
    loss_sum += loss.loss * batch->size();
    total += static_cast<std::size_t>(batch->size());
    vitforge::Tensor probs = vitforge::softmax_lastdim(logits);
    for (int b = 0; b < batch->size(); ++b) {
      int argmax = 0;
      for (int c = 1; c < ckpt.config.num_classes; ++c) {
        if (logits.at(b, c) > logits.at(b, argmax)) argmax = c;
      }
      truth.push_back(batch->labels[static_cast<std::size_t>(b)]);
      predicted.push_back(argmax);
      scored.push_back({batch->labels[static_cast<std::size_t>(b)], argmax,
                        probs.at(b, positive)});
    }
  }
  const double mean_loss = loss_sum / static_cast<double>(total);
  const vitforge::ConfusionMatrix cm = vitforge::confusion_matrix(
      truth, predicted, ckpt.config.num_classes, manifest.class_names);
  const vitforge::ClassificationReport report = vitforge::classification_report(cm);

  std::optional<double> auc;
  try {
    auc = vitforge::roc_auc(scored, positive);
  } catch (const vitforge::UndefinedMetricError&) {
    auc = std::nullopt;
  }

  json metrics = vitforge::report_to_json(report);
  metrics["roc_auc"] = auc ? json(*auc) : json(nullptr);
  metrics["confusion"] = cm.counts;
  metrics["class_names"] = cm.class_names;
  metrics["test_loss"] = mean_loss;
  json samples = json::array();
  for (std::size_t i = 0; i < scored.size(); ++i) {
    samples.push_back({{"path", manifest.entries[i].path},
                       {"label", truth[i]},
                       {"predicted", predicted[i]},
                       {"positive_prob", scored[i].positive_prob}});
  }
  metrics["samples"] = samples;

  if (!rc.output_dir.empty()) {
    fs::create_directories(rc.output_dir);
    write_text_file(fs::path(rc.output_dir) / "metrics.json", metrics.dump(2) + "\n");
  }

  if (rc.json_output) {
    std::cout << metrics.dump(2) << "\n";
    return 0;
  }
  std::cout << vitforge::format_test_line(mean_loss, 100.0 * report.accuracy) << "\n";
  std::cout << "\nClassification Report:\n"
            << vitforge::render_report_text(report) << "\n";
  std::cout << "Confusion Matrix (rows = true, cols = predicted):\n"
            << vitforge::render_confusion_text(cm) << "\n";
  char auc_line[64];
  if (auc) {
    std::snprintf(auc_line, sizeof(auc_line), "ROC-AUC: %.4f", *auc);
  } else {
    std::snprintf(auc_line, sizeof(auc_line), "ROC-AUC: undefined (single class)");
  }
  std::cout << auc_line << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const vitforge::RunConfig& rc) {
  const vitforge::Checkpoint ckpt = vitforge::load_checkpoint(rc.checkpoint);
  vitforge::ImageRGB img = vitforge::decode_image(rc.image_path);
  const int hw = ckpt.config.image_size;
  if (img.height != hw || img.width != hw) img = vitforge::resize_bilinear(img, hw, hw);
  const vitforge::Tensor one =
      vitforge::to_normalized_tensor(img, vitforge::NormalizationSpec::imagenet(), hw, hw);
  vitforge::Tensor images({1, 3, hw, hw});
  std::copy(one.data(), one.data() + one.size(), images.data());

  const vitforge::Tensor logits =
      vitforge::vit_forward(images, ckpt.params, ckpt.config);
  const vitforge::Tensor probs = vitforge::softmax_lastdim(logits);
  int argmax = 0;
  for (int c = 1; c < ckpt.config.num_classes; ++c) {
    if (logits.at(0, c) > logits.at(0, argmax)) argmax = c;
  }
  std::vector<std::string> names = ckpt.class_names;
  if (names.empty()) {
    for (int c = 0; c < ckpt.config.num_classes; ++c) names.push_back(std::to_string(c));
  }

  if (rc.json_output) {
    json probabilities = json::object();
    for (int c = 0; c < ckpt.config.num_classes; ++c) {
      probabilities[names[static_cast<std::size_t>(c)]] = probs.at(0, c);
    }
    const json out = {{"prediction", names[static_cast<std::size_t>(argmax)]},
                      {"probabilities", probabilities}};
    std::cout << out.dump(2) << "\n";
    return 0;
  }
  std::cout << "prediction: " << names[static_cast<std::size_t>(argmax)] << "\n";
  for (int c = 0; c < ckpt.config.num_classes; ++c) {
    char line[96];
    std::snprintf(line, sizeof(line), "p(%s) = %.6f",
                  names[static_cast<std::size_t>(c)].c_str(), probs.at(0, c));
    std::cout << line << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

int cmd_profile(const vitforge::RunConfig& rc) {
  vitforge::ViTModel model;
  if (!rc.checkpoint.empty()) {
    vitforge::Checkpoint ckpt = vitforge::load_checkpoint(rc.checkpoint);
    model = {ckpt.config, std::move(ckpt.params), ckpt.class_names};
  } else {
    const vitforge::ViTConfig config = rc.model_config();
    model = {config, vitforge::init_params(config, rc.train.seed), {}};
  }

  // synthetic normalized batches; timing does not depend on pixel content
  vitforge::Xoshiro256ss rng(rc.train.seed);
  std::vector<vitforge::Batch> data;
  const int hw = model.config.image_size;
  for (int i = 0; i < std::max(1, rc.profile_batches); ++i) {
    vitforge::Batch b;
    b.images = vitforge::Tensor({rc.train.batch_size, 3, hw, hw});
    for (std::size_t k = 0; k < b.images.size(); ++k) {
      b.images[k] = static_cast<float>(rng.next_normal());
    }
    for (int s = 0; s < rc.train.batch_size; ++s) {
      b.labels.push_back(static_cast<int>(rng.next_below(
          static_cast<std::uint64_t>(model.config.num_classes))));
    }
    data.push_back(std::move(b));
  }

  vitforge::ProfileOptions opts;
  opts.warmup_batches = rc.profile_warmup;
  opts.timed_batches = rc.profile_batches;
  const vitforge::ProfileReport report =
      vitforge::profile(model, data, rc.train, opts);
  const json twin = vitforge::profile_to_json(report);

  if (!rc.output_dir.empty()) {
    fs::create_directories(rc.output_dir);
    write_text_file(fs::path(rc.output_dir) / "profile.json", twin.dump(2) + "\n");
  }
  if (rc.json_output) {
    std::cout << twin.dump(2) << "\n";
  } else {
    std::cout << vitforge::render_profile_text(report);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// argument wiring
// ---------------------------------------------------------------------------

int dispatch(int argc, char** argv) {
  CLI::App app{"vitforge: a from-scratch Vision Transformer engine for "
               "fire/nofire image classification"};
  app.require_subcommand(1);

  vitforge::RunConfig rc;
  std::string config_file;

  auto* scan = app.add_subcommand("scan", "Index a dataset directory tree");
  scan->add_option("--data", rc.data_root, "dataset root")->required();
  scan->add_option("--out", rc.output_dir, "output directory for manifests");
  scan->add_flag("--json", rc.json_output, "machine-readable output");

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_file, "JSON run-config file (flags win)");
  auto* t_data = train->add_option("--data", rc.data_root, "dataset root");
  auto* t_model = train->add_option("--model", rc.model_size, "tiny | base");
  auto* t_epochs = train->add_option("--epochs", rc.train.epochs, "epochs");
  auto* t_bs = train->add_option("--batch-size", rc.train.batch_size, "batch size");
  auto* t_lr = train->add_option("--lr", rc.train.learning_rate, "learning rate");
  auto* t_wd = train->add_option("--weight-decay", rc.train.weight_decay,
                                 "decoupled weight decay");
  auto* t_seed = train->add_option("--seed", rc.train.seed, "RNG seed");
  auto* t_out = train->add_option("--out", rc.output_dir, "output directory");
  auto* t_best = train->add_flag("--best-val", rc.best_val,
                                 "also keep the best-validation checkpoint");
  auto* t_json = train->add_flag("--json", rc.json_output, "machine-readable output");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--checkpoint", rc.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", rc.data_root, "dataset root")->required();
  eval->add_option("--split", rc.split, "split name (default test)");
  eval->add_option("--out", rc.output_dir, "output directory for metrics.json");
  eval->add_flag("--json", rc.json_output, "machine-readable output");

  auto* predict = app.add_subcommand("predict", "Classify a single image");
  predict->add_option("--checkpoint", rc.checkpoint, "checkpoint file")->required();
  predict->add_option("--image", rc.image_path, "image file")->required();
  predict->add_flag("--json", rc.json_output, "machine-readable output");

  auto* profile = app.add_subcommand("profile", "Time forward/backward passes");
  profile->add_option("--checkpoint", rc.checkpoint, "checkpoint file");
  profile->add_option("--model", rc.model_size, "tiny | base");
  profile->add_option("--batch-size", rc.train.batch_size, "batch size");
  profile->add_option("--batches", rc.profile_batches, "timed batches");
  profile->add_option("--warmup", rc.profile_warmup, "warm-up batches");
  profile->add_option("--seed", rc.train.seed, "RNG seed");
  profile->add_option("--out", rc.output_dir, "output directory for profile.json");
  profile->add_flag("--json", rc.json_output, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help text or the usage error
    return code == 0 ? 0 : 1;
  }

  if (train->parsed() && !config_file.empty()) {
    // config file provides defaults; explicitly passed flags win
    std::ifstream in(config_file);
    if (!in) throw vitforge::ConfigError("cannot read config file: " + config_file);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw vitforge::ConfigError("config file " + config_file + ": " + e.what());
    }
    vitforge::RunConfig from_file = j.get<vitforge::RunConfig>();
    if (t_data->count() == 0) rc.data_root = from_file.data_root;
    if (t_model->count() == 0) rc.model_size = from_file.model_size;
    if (t_epochs->count() == 0) rc.train.epochs = from_file.train.epochs;
    if (t_bs->count() == 0) rc.train.batch_size = from_file.train.batch_size;
    if (t_lr->count() == 0) rc.train.learning_rate = from_file.train.learning_rate;
    if (t_wd->count() == 0) rc.train.weight_decay = from_file.train.weight_decay;
    if (t_seed->count() == 0) rc.train.seed = from_file.train.seed;
    if (t_out->count() == 0) rc.output_dir = from_file.output_dir;
    if (t_best->count() == 0) rc.best_val = from_file.best_val;
    if (t_json->count() == 0) rc.json_output = from_file.json_output;
  }

  if (scan->parsed()) {
    rc.command = "scan";
    return cmd_scan(rc);
  }
  if (train->parsed()) {
    rc.command = "train";
    if (rc.data_root.empty()) {
      throw vitforge::ConfigError("train requires --data (or data_root in --config)");
    }
    rc.train.validate();
    return cmd_train(rc);
  }
  if (eval->parsed()) {
    rc.command = "eval";
    return cmd_eval(rc);
  }
  if (predict->parsed()) {
    rc.command = "predict";
    return cmd_predict(rc);
  }
  if (profile->parsed()) {
    rc.command = "profile";
    return cmd_profile(rc);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const vitforge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const vitforge::NumericError& e) {
    std::cerr << "numeric fault: " << e.what() << "\n";
    return 3;
  } catch (const vitforge::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const vitforge::DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const vitforge::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
