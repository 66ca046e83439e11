#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zsdiff/archive.hpp"
#include "zsdiff/config.hpp"
#include "zsdiff/data.hpp"
#include "zsdiff/model.hpp"
#include "zsdiff/text.hpp"

namespace zsdiff {

inline constexpr const char* kCheckpointMagic = "ZSDIFF-CHECKPOINT";
inline constexpr const char* kCheckpointVersion = "1.0.0";

/// Versioned parameter archive: "<module>/..." parameters, "optimizer/<param>/{exp_avg,exp_avg_sq,step}",
/// "stats/{mean,std}", "step", plus string attributes magic/version/config_hash/config/vocab.
struct Checkpoint {
  NamedArrays archive;

  int64_t step() const;
  std::string config_hash() const;
  RunConfig config() const;
  Vocabulary vocab() const;
  MelStats stats() const;
  /// Parameters only (no optimizer state), keyed as in AcousticModelImpl::named_state.
  std::map<std::string, torch::Tensor> parameters() const;

  void save(const std::filesystem::path& path) const;
  /// Refuses archives with a foreign magic or major version; `expected_hash`, if set, must match
  /// unless `allow_mismatch`.
  static Checkpoint load(const std::filesystem::path& path, const std::optional<std::string>& expected_hash = {},
                         bool allow_mismatch = false);

  /// Bitwise equality of every array and string.
  bool identical_to(const Checkpoint& other) const;
  /// Names of parameter arrays whose bits differ.
  std::vector<std::string> differing_parameters(const Checkpoint& other) const;
};

struct StepMetrics {
  int64_t step = 0;  // step index that produced these losses (0-based)
  std::map<std::string, double> losses;
  double learning_rate = 0.0;
  double lambda_bin = 0.0;
};

/// Seeded, resumable optimization loop over the full objective.
class Trainer {
 public:
  Trainer(RunConfig config, Vocabulary vocab, MelStats stats);
  static Trainer from_checkpoint(const Checkpoint& checkpoint);

  /// Replaces the trainable set (complement of the freeze list). Rebuilds the optimizer,
  /// keeping moment estimates of parameters that stay trainable.
  void set_trainable_groups(const std::vector<std::string>& groups);
  std::vector<std::string> trainable_groups() const { return trainable_; }

  using StepCallback = std::function<void(const StepMetrics&)>;
  /// Runs `steps` optimizer steps on raw (unnormalized) utterances. When `regularization` is
  /// given, each batch mixes it with `corpus` at train.finetune_mix_ratio. Non-finite losses
  /// abort with RuntimeError before the parameters are touched.
  std::vector<StepMetrics> run(const std::vector<Utterance>& corpus, int64_t steps, const StepCallback& callback = {},
                               const std::vector<Utterance>* regularization = nullptr);

  /// Full training run: checkpoints every interval into out_dir (atomic), metrics appended to
  /// out_dir/metrics.jsonl, final checkpoint at out_dir/checkpoint.zsd.
  void train_to_disk(const std::vector<Utterance>& corpus, int64_t steps, const std::filesystem::path& out_dir,
                     const std::vector<Utterance>* regularization = nullptr);

  Checkpoint checkpoint();
  AcousticModel& model() { return model_; }
  const RunConfig& config() const { return config_; }
  RunConfig& mutable_config() { return config_; }
  const MelStats& stats() const { return stats_; }
  const Vocabulary& vocab() const { return vocab_; }
  int64_t step() const { return step_; }

  /// Normalized copy of a raw utterance list.
  std::vector<Utterance> normalize(const std::vector<Utterance>& corpus) const;

  double learning_rate_at(int64_t step) const;
  double lambda_bin_at(int64_t step) const;

 private:
  void rebuild_optimizer(const std::map<std::string, std::map<std::string, torch::Tensor>>& moments);
  std::map<std::string, std::map<std::string, torch::Tensor>> export_moments() const;

  RunConfig config_;
  Vocabulary vocab_;
  MelStats stats_;
  AcousticModel model_{nullptr};
  std::vector<std::string> trainable_;
  std::vector<std::pair<std::string, torch::Tensor>> trainable_params_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  int64_t step_ = 0;
};

/// Fresh model from config, seeded.
AcousticModel make_model(const RunConfig& config);

/// Loads a checkpoint and updates only `groups` for `steps` steps on `target` (mixed with
/// `regularization` when non-null). Empty `groups` returns the input checkpoint unchanged.
Checkpoint finetune(const Checkpoint& checkpoint, const std::vector<Utterance>& target,
                    const std::vector<std::string>& groups, int64_t steps,
                    const std::vector<Utterance>* regularization = nullptr);

}  // namespace zsdiff
