#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "vlmpar/heads.hpp"
#include "vlmpar/model.hpp"
#include "vlmpar/training.hpp"

namespace vlmpar {

struct PathsConfig {
  std::string data;
  std::string eval_data;    // optional held-out set for ablate
  std::string vocab;        // defaults to <data>/vocab.txt
  std::string weights_in;   // optional container applied after seeding
  std::string weights_out;
  std::string report_out;   // directory for manifest.json and history.csv
  std::string cache;        // optional embedding cache file
};

/// Everything a command needs, fully resolvable from defaults.
///
/// JSON schema (every key optional, unknown keys rejected):
///   seed
///   model { d_model num_layers num_heads mlp_hidden patch_size image_hw
///           max_tokens vocab_size ln_eps init_scale fusion_heads
///           fusion_ln_eps pooling attributes[{name prompt num_classes}] }
///   loss  { lambda_ce lambda_focal focal_gamma smoothing }
///   train { epochs batch_size learning_rate optimizer adam_beta1 adam_beta2
///           adam_eps seed ablation threads }
///   paths { data eval_data vocab weights_in weights_out report_out cache }
struct RunConfig {
  std::uint64_t seed = 1234;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  PathsConfig paths;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  /// Resolved form with every default spelled out.
  nlohmann::ordered_json to_json() const;
};

}  // namespace vlmpar
