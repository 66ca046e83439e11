#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsdiff/audio.hpp"
#include "zsdiff/model.hpp"

namespace zsdiff {

struct TrainConfig {
  int64_t steps = 1000;
  int64_t batch_size = 8;
  double learning_rate = 1e-4;
  int64_t warmup_steps = 4000;
  int64_t lambda_bin_ramp_steps = 6000;
  double weight_diffusion = 1.0;
  double weight_prior = 1.0;
  double weight_align = 1.0;
  std::vector<std::string> freeze;
  int64_t checkpoint_interval = 1000;
  bool detach_mu = false;
  bool sigma_weighted_diffusion = true;
  double max_grad_norm = 1.0;
  /// Fine-tuning: regularization examples per target example in each batch.
  double finetune_mix_ratio = 1.0;

  void validate() const;
};

/// Everything that determines a run. Serialized as JSON with sections
/// "features", "model", "train" plus top-level "seed", "corpus", "out_dir".
struct RunConfig {
  uint64_t seed = 0;
  FeatureConfig features;
  ModelConfig model;
  TrainConfig train;
  std::string corpus;
  std::string out_dir = "run";

  nlohmann::json to_json() const;
  /// Unknown or mistyped keys raise ConfigError naming the key path ("train.steps").
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Identifies the parameter layout (features + model sections).
  std::string model_hash() const;
};

/// Small model used by the overfit experiments and tests.
RunConfig desk_config(int64_t width = 64);

}  // namespace zsdiff
