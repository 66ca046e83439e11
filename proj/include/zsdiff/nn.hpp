#pragma once

#include <torch/torch.h>

// Shared layers. Sequence tensors are [B, T, C]; masks are [B, T] bool, true on real frames.
// Every layer here leaves padded positions at zero so that padding never leaks into real rows.

namespace zsdiff::nn {

torch::Tensor mask_as(const torch::Tensor& mask, const torch::Tensor& like);  // [B, T, 1] in like's dtype
inline torch::Tensor apply_mask(const torch::Tensor& x, const torch::Tensor& mask) {
  return x * mask_as(mask, x);
}

/// [T, dim] sinusoidal table.
torch::Tensor sinusoidal_positions(int64_t length, int64_t dim, torch::ScalarType dtype);
/// [B, dim] embedding of scalar times (scaled by `scale` first).
torch::Tensor sinusoidal_embedding(const torch::Tensor& t, int64_t dim, double scale);

torch::Tensor mish(const torch::Tensor& x);

/// g * (h - mean(h)) / sqrt(var(h) + eps) + b along the last axis.
torch::Tensor saln(const torch::Tensor& h, const torch::Tensor& gain, const torch::Tensor& bias, double eps = 1e-5);

/// Style-adaptive layer norm: (gain, bias) = split(Linear(s)).
struct SalnImpl : torch::nn::Module {
  SalnImpl(int64_t width, int64_t style_dim);
  /// h [B, T, W], s [B, S]
  torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& s);
  /// Sets the affine map to gain 1 / bias 0 for every style vector.
  void rig_identity();

  int64_t width;
  torch::nn::Linear affine{nullptr};
};
TORCH_MODULE(Saln);

/// 'same'-padded 1-D convolution over the time axis of a [B, T, C] tensor.
struct MaskedConv1dImpl : torch::nn::Module {
  MaskedConv1dImpl(int64_t in, int64_t out, int64_t kernel);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);
  torch::nn::Conv1d conv{nullptr};
};
TORCH_MODULE(MaskedConv1d);

struct MultiHeadAttentionImpl : torch::nn::Module {
  MultiHeadAttentionImpl(int64_t width, int64_t heads, double dropout);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

  int64_t width, heads;
  torch::nn::Linear qkv{nullptr}, out{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(MultiHeadAttention);

struct BlockOptions {
  int64_t width = 128;
  int64_t heads = 2;
  int64_t ff_width = 512;
  int64_t ff_kernel = 3;
  double dropout = 0.1;
  /// 0 selects plain LayerNorm, otherwise SALN conditioned on a style vector of this size.
  int64_t style_dim = 0;
};

/// Pre-norm transformer block with a convolutional feed-forward.
struct TransformerBlockImpl : torch::nn::Module {
  explicit TransformerBlockImpl(const BlockOptions& options);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask, const torch::Tensor& style = {});

  torch::Tensor norm(int which, const torch::Tensor& x, const torch::Tensor& style);

  BlockOptions options;
  torch::nn::LayerNorm ln1{nullptr}, ln2{nullptr};
  Saln saln1{nullptr}, saln2{nullptr};
  MultiHeadAttention attention{nullptr};
  MaskedConv1d ff1{nullptr}, ff2{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(TransformerBlock);

}  // namespace zsdiff::nn
