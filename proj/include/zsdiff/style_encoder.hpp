#pragma once

#include <torch/torch.h>

#include "zsdiff/audio.hpp"
#include "zsdiff/nn.hpp"

namespace zsdiff {

struct StyleEncoderOptions {
  int64_t n_mels = 80;
  int64_t width = 128;
  int64_t style_dim = 128;
  int64_t heads = 2;
  int64_t kernel = 5;
  double dropout = 0.1;
};

/// Minimum reference length accepted by encode_style.
inline constexpr int64_t kMinStyleFrames = 4;

/// Mel-style encoder: per-frame spectral MLP, gated temporal convolutions,
/// one self-attention layer, masked temporal average pooling, output projection.
struct MelStyleEncoderImpl : torch::nn::Module {
  explicit MelStyleEncoderImpl(const StyleEncoderOptions& options);

  /// mels [B, M, n_mels], mask [B, M] -> [B, style_dim]
  torch::Tensor forward(const torch::Tensor& mels, const torch::Tensor& mask);
  /// Frame features right before pooling, [B, M, width].
  torch::Tensor frame_features(const torch::Tensor& mels, const torch::Tensor& mask);

  StyleEncoderOptions options;
  /// Skips the self-attention layer (ablation hook for pooling tests).
  bool bypass_attention = false;

  torch::nn::Linear spectral1{nullptr}, spectral2{nullptr};
  nn::MaskedConv1d temporal1{nullptr}, temporal2{nullptr};
  nn::MultiHeadAttention attention{nullptr};
  torch::nn::Linear project{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(MelStyleEncoder);

/// s = h(Y) for a single mel. Throws InputError for m < 4 or non-finite input.
torch::Tensor encode_style(const MelSpectrogram& mel, MelStyleEncoder& encoder);

/// Cosine of the angle between two vectors; InputError if either is zero.
double cosine_similarity(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace zsdiff
