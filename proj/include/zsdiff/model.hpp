#pragma once

#include <torch/torch.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zsdiff/alignment.hpp"
#include "zsdiff/audio.hpp"
#include "zsdiff/data.hpp"
#include "zsdiff/diffusion.hpp"
#include "zsdiff/encoder.hpp"
#include "zsdiff/score_net.hpp"
#include "zsdiff/style_encoder.hpp"

namespace zsdiff {

struct ModelConfig {
  int64_t vocab_size = 36;
  int64_t n_mels = 80;
  int64_t width = 128;  // text / style-adaptive encoder width d
  int64_t heads = 2;
  int64_t ff_width = 512;
  int64_t encoder_blocks = 4;
  int64_t max_tokens = 512;
  int64_t style_width = 128;
  int64_t style_dim = 128;
  int64_t aligner_width = 128;
  int64_t unet_channels = 32;
  int64_t unet_groups = 8;
  double dropout = 0.1;
  NoiseSchedule schedule;

  StyleEncoderOptions style_encoder_options() const;
  EncoderOptions encoder_options() const;
  ScoreNetOptions score_net_options() const;
};

/// Trainable parameter groups, named as in checkpoints and freeze lists.
inline const std::vector<std::string>& parameter_groups() {
  static const std::vector<std::string> groups{"style_encoder",      "text_encoder",
                                               "aligner",            "duration_predictor",
                                               "style_adaptive_encoder", "diffusion"};
  return groups;
}
/// Accepts the canonical names plus the short forms "sae" and "diff". InputError otherwise.
std::string canonical_group(const std::string& name);
/// Parameter-name prefix ("hier_encoder.sae.") owned by a group.
std::string group_prefix(const std::string& group);

struct HierarchicalEncoderImpl : torch::nn::Module {
  explicit HierarchicalEncoderImpl(const EncoderOptions& options);
  TextEncoder text{nullptr};
  Aligner aligner{nullptr};
  DurationPredictor duration{nullptr};
  StyleAdaptiveEncoder sae{nullptr};
};
TORCH_MODULE(HierarchicalEncoder);

struct DiffusionModelImpl : torch::nn::Module {
  explicit DiffusionModelImpl(const ScoreNetOptions& options);
  ScoreNet unet{nullptr};
};
TORCH_MODULE(DiffusionModel);

/// The full acoustic model: style encoder, hierarchical encoder, score network.
struct AcousticModelImpl : torch::nn::Module {
  explicit AcousticModelImpl(const ModelConfig& config);

  ModelConfig config;
  MelStyleEncoder style_encoder{nullptr};
  HierarchicalEncoder hier_encoder{nullptr};
  DiffusionModel diffusion{nullptr};

  /// Parameters keyed "style_encoder/...", "hier_encoder/sae/...", "diffusion/unet/...".
  std::map<std::string, torch::Tensor> named_state();
  void load_named_state(const std::map<std::string, torch::Tensor>& state);
  std::vector<torch::Tensor> group_parameters(const std::string& group);
};
TORCH_MODULE(AcousticModel);

/// Per-example Monte-Carlo draw for the diffusion loss.
struct DiffusionDraw {
  torch::Tensor t;                 // [B]
  std::vector<torch::Tensor> eps;  // per example [m_i, n_mels]
};
/// t ~ U(t_min, horizon), eps ~ N(0, I).
DiffusionDraw draw_diffusion_noise(const Batch& batch, int64_t n_mels, torch::ScalarType dtype, at::Generator& gen,
                                   double horizon = 1.0);

struct LossOptions {
  double lambda_bin = 1.0;
  double weight_diff = 1.0;
  double weight_prior = 1.0;
  double weight_align = 1.0;
  bool detach_mu_for_diffusion = false;
  bool sigma_weighted_diffusion = true;
};

/// Every term already carries its weight, so total == diffusion + prior + forward_sum + binarization + duration.
struct LossBreakdown {
  torch::Tensor total;
  torch::Tensor diffusion, prior, forward_sum, binarization, duration;
  std::vector<AlignmentResult> alignments;
  torch::Tensor mu;     // [B, M, n_mels]
  torch::Tensor style;  // [B, S]

  std::map<std::string, double> values() const;
};

/// Full training objective on a batch. Examples with infeasible alignments are dropped with a warning.
LossBreakdown total_loss(AcousticModel& model, const Batch& batch, const DiffusionDraw& draw,
                         const LossOptions& options);

/// Text-and-style forward pass shared by training and synthesis.
struct EncodedBatch {
  torch::Tensor style;          // [B, S]
  torch::Tensor text_hidden;    // [B, N, d]
  torch::Tensor log_durations;  // [B, N]
};
EncodedBatch encode_batch(AcousticModel& model, const Batch& batch);

/// Regulates rows of text_hidden[b] by durations[b] and pads to the longest: -> ([B, M, d], mask [B, M]).
std::pair<torch::Tensor, torch::Tensor> regulate_batch(const torch::Tensor& text_hidden,
                                                       const std::vector<std::vector<int64_t>>& durations);

struct SynthesisOptions {
  SamplerOptions sampler;
  double pace = 1.0;
  /// Teacher forcing: use these durations instead of the predictor's.
  std::optional<std::vector<int64_t>> durations;
};

struct SynthesisResult {
  MelSpectrogram mel;  // normalized domain
  torch::Tensor mu;    // [m, n_mels]
  std::vector<int64_t> durations;
  int score_evaluations = 0;
};

/// Zero-shot synthesis: reference mel (normalized) -> s; tokens -> durations -> mu -> reverse SDE.
SynthesisResult synthesize(AcousticModel& model, const std::vector<int64_t>& tokens,
                           const MelSpectrogram& reference, const SynthesisOptions& options,
                           const TraceFn& trace = {});

/// Reverse SDE driven by the score network for a fixed mu [B, M, n_mels].
torch::Tensor sample_with_network(AcousticModel& model, const torch::Tensor& mu, const torch::Tensor& style,
                                  const torch::Tensor& mask, const SamplerOptions& options, int* evaluations = nullptr,
                                  const TraceFn& trace = {});

}  // namespace zsdiff
