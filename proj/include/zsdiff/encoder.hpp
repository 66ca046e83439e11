#pragma once

#include <torch/torch.h>

#include <vector>

#include "zsdiff/nn.hpp"

// Hierarchical encoder: text encoder -> aligner / duration predictor / length
// regulation -> style-adaptive encoder producing the prior mean.

namespace zsdiff {

struct EncoderOptions {
  int64_t vocab_size = 36;
  int64_t n_mels = 80;
  int64_t width = 128;
  int64_t heads = 2;
  int64_t ff_width = 512;
  int64_t blocks = 4;
  int64_t max_tokens = 512;
  int64_t style_dim = 128;
  int64_t aligner_width = 128;
  double dropout = 0.1;
};

/// Token embedding + sinusoidal positions + pre-norm transformer blocks. Style-free.
struct TextEncoderImpl : torch::nn::Module {
  explicit TextEncoderImpl(const EncoderOptions& options);
  /// tokens [B, N] int64, mask [B, N] -> H [B, N, width]
  torch::Tensor forward(const torch::Tensor& tokens, const torch::Tensor& mask);

  EncoderOptions options;
  torch::nn::Embedding embed{nullptr};
  torch::nn::ModuleList blocks;
  torch::nn::LayerNorm final_norm{nullptr};
};
TORCH_MODULE(TextEncoder);

/// Alignment energies -||q_j - k_i||^2 between conv-encoded mel frames and text rows.
struct AlignerImpl : torch::nn::Module {
  explicit AlignerImpl(const EncoderOptions& options);
  /// -> energies [B, M, N]; padded tokens get -inf so row-softmax ignores them.
  torch::Tensor forward(const torch::Tensor& text_hidden, const torch::Tensor& text_mask,
                        const torch::Tensor& mels, const torch::Tensor& mel_mask);
  torch::Tensor encode_mel(const torch::Tensor& mels, const torch::Tensor& mask);
  torch::Tensor encode_text(const torch::Tensor& text_hidden, const torch::Tensor& mask);

  nn::MaskedConv1d mel_conv1{nullptr}, mel_conv2{nullptr};
  nn::MaskedConv1d text_conv1{nullptr}, text_conv2{nullptr};
};
TORCH_MODULE(Aligner);

/// -||q_j - k_i||^2 for q [B, M, D], k [B, N, D].
torch::Tensor negative_sq_distance(const torch::Tensor& q, const torch::Tensor& k);

/// Per-token log-duration from H with the style vector added after projection.
struct DurationPredictorImpl : torch::nn::Module {
  explicit DurationPredictorImpl(const EncoderOptions& options);
  /// -> log durations [B, N], zero on padding
  torch::Tensor forward(const torch::Tensor& text_hidden, const torch::Tensor& style, const torch::Tensor& mask);

  torch::nn::Linear style_proj{nullptr};
  nn::MaskedConv1d conv1{nullptr}, conv2{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Linear out{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(DurationPredictor);

/// Masked mean of (log_pred - log(durations))^2 over real tokens, averaged over the batch.
torch::Tensor duration_loss(const torch::Tensor& log_pred, const std::vector<std::vector<int64_t>>& durations,
                            const torch::Tensor& mask);

/// Transformer blocks normalized by SALN(., s), then a projection to mel bins.
struct StyleAdaptiveEncoderImpl : torch::nn::Module {
  explicit StyleAdaptiveEncoderImpl(const EncoderOptions& options);
  /// regulated [B, M, width], style [B, S], mask [B, M] -> mu [B, M, n_mels]
  torch::Tensor forward(const torch::Tensor& regulated, const torch::Tensor& style, const torch::Tensor& mask);
  /// Every SALN map becomes gain 1 / bias 0 regardless of s.
  void rig_identity_saln();

  EncoderOptions options;
  torch::nn::ModuleList blocks;
  nn::Saln final_norm{nullptr};
  torch::nn::Linear project{nullptr};
};
TORCH_MODULE(StyleAdaptiveEncoder);

/// Mean of (mu - y)^2 over real elements of each example, averaged over the batch.
torch::Tensor prior_loss(const torch::Tensor& mu, const torch::Tensor& y, const torch::Tensor& mel_mask);

}  // namespace zsdiff
