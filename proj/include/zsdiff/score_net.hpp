#pragma once

#include <torch/torch.h>

// Noise estimation U-Net over the (mel-bin x frame) grid. Inputs are stacked as two
// channels (Y_t, mu); the diffusion time enters through a sinusoidal embedding MLP and
// the style vector is projected and broadcast-added inside every residual block.
// Frame masks are honored everywhere (group-norm statistics and attention included),
// so padding never changes the output on real frames.

namespace zsdiff {

struct ScoreNetOptions {
  int64_t n_mels = 80;
  int64_t channels = 32;  // level-0 width; level 1 doubles it
  int64_t groups = 8;
  int64_t style_dim = 128;
  int64_t attention_heads = 4;
  int64_t attention_head_dim = 32;
  double time_scale = 1000.0;
};

/// Group norm with statistics taken over real frames only. x [B, C, F, T], mask [B, 1, 1, T].
struct MaskedGroupNormImpl : torch::nn::Module {
  MaskedGroupNormImpl(int64_t channels, int64_t groups);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);
  int64_t groups;
  torch::Tensor weight, bias;
};
TORCH_MODULE(MaskedGroupNorm);

struct ConvNormBlockImpl : torch::nn::Module {
  ConvNormBlockImpl(int64_t in, int64_t out, int64_t groups);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);
  torch::nn::Conv2d conv{nullptr};
  MaskedGroupNorm norm{nullptr};
};
TORCH_MODULE(ConvNormBlock);

struct ResidualBlockImpl : torch::nn::Module {
  ResidualBlockImpl(int64_t in, int64_t out, int64_t time_dim, int64_t style_dim, int64_t groups);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask, const torch::Tensor& time_emb,
                        const torch::Tensor& style);
  ConvNormBlock block1{nullptr}, block2{nullptr};
  torch::nn::Linear time_proj{nullptr}, style_proj{nullptr};
  torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Linear attention over all (bin, frame) positions; keys on padded frames are excluded.
struct LinearAttentionImpl : torch::nn::Module {
  LinearAttentionImpl(int64_t channels, int64_t heads, int64_t head_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);
  int64_t heads, head_dim;
  torch::nn::Conv2d qkv{nullptr}, out{nullptr};
};
TORCH_MODULE(LinearAttention);

struct ScoreNetImpl : torch::nn::Module {
  explicit ScoreNetImpl(const ScoreNetOptions& options);

  /// y_t, mu [B, M, n_mels]; t [B]; style [B, S]; mask [B, M] -> [B, M, n_mels]
  torch::Tensor forward(const torch::Tensor& y_t, const torch::Tensor& t, const torch::Tensor& mu,
                        const torch::Tensor& style, const torch::Tensor& mask);

  ScoreNetOptions options;
  torch::nn::Linear time_mlp1{nullptr}, time_mlp2{nullptr};
  ResidualBlock down0a{nullptr}, down0b{nullptr}, down1a{nullptr}, down1b{nullptr};
  torch::nn::Conv2d downsample{nullptr};
  ResidualBlock mid1{nullptr}, mid2{nullptr};
  LinearAttention mid_attention{nullptr};
  ResidualBlock up1{nullptr}, up0{nullptr};
  torch::nn::ConvTranspose2d upsample{nullptr};
  ConvNormBlock final_block{nullptr};
  torch::nn::Conv2d final_conv{nullptr};
};
TORCH_MODULE(ScoreNet);

}  // namespace zsdiff
