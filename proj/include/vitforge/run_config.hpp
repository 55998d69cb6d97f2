#pragma once

#include <string>

#include <json.hpp>

#include "vitforge/checkpoint.hpp"
#include "vitforge/errors.hpp"
#include "vitforge/train.hpp"
#include "vitforge/vit.hpp"

namespace vitforge {

// Fully serializable CLI run configuration. A parsed config echoes back to a
// canonical JSON form: to_json(from_json(j)) is stable, which makes runs
// reproducible from the emitted run_config.json alone.
struct RunConfig {
  std::string command;
  std::string data_root;
  std::string model_size = "tiny";  // "tiny" | "base"
  TrainConfig train;
  std::string output_dir = "vitforge_run";
  std::string checkpoint;
  std::string split = "test";
  std::string image_path;
  bool best_val = false;
  bool json_output = false;
  int profile_batches = 10;
  int profile_warmup = 3;

  ViTConfig model_config() const {
    if (model_size == "base") return ViTConfig::base();
    if (model_size == "tiny") return ViTConfig::tiny();
    throw ConfigError("unknown model size '" + model_size + "' (use tiny or base)");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"command", c.command},
       {"data_root", c.data_root},
       {"model_size", c.model_size},
       {"train", c.train},
       {"output_dir", c.output_dir},
       {"checkpoint", c.checkpoint},
       {"split", c.split},
       {"image_path", c.image_path},
       {"best_val", c.best_val},
       {"json_output", c.json_output},
       {"profile_batches", c.profile_batches},
       {"profile_warmup", c.profile_warmup}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  c.command = j.value("command", std::string{});
  c.data_root = j.value("data_root", std::string{});
  c.model_size = j.value("model_size", std::string{"tiny"});
  if (j.contains("train")) j.at("train").get_to(c.train);
  c.output_dir = j.value("output_dir", std::string{"vitforge_run"});
  c.checkpoint = j.value("checkpoint", std::string{});
  c.split = j.value("split", std::string{"test"});
  c.image_path = j.value("image_path", std::string{});
  c.best_val = j.value("best_val", false);
  c.json_output = j.value("json_output", false);
  c.profile_batches = j.value("profile_batches", 10);
  c.profile_warmup = j.value("profile_warmup", 3);
}

}  // namespace vitforge
