#include "zsdiff/score_net.hpp"

#include <limits>

#include "zsdiff/error.hpp"
#include "zsdiff/nn.hpp"

namespace zsdiff {

MaskedGroupNormImpl::MaskedGroupNormImpl(int64_t channels, int64_t groups_) : groups(groups_) {
  TORCH_CHECK(channels % groups == 0, "group count must divide channels");
  weight = register_parameter("weight", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor MaskedGroupNormImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto b = x.size(0), c = x.size(1), f = x.size(2), t = x.size(3);
  auto xg = x.view({b, groups, c / groups, f, t});
  auto mg = mask.view({b, 1, 1, 1, t}).to(x.scalar_type());
  auto count = (mg.sum({2, 3, 4}, true) * (c / groups) * f).clamp_min(1.0);
  auto mean = (xg * mg).sum({2, 3, 4}, true) / count;
  auto var = ((xg - mean).pow(2) * mg).sum({2, 3, 4}, true) / count;
  auto normed = ((xg - mean) / torch::sqrt(var + 1e-5)).view({b, c, f, t});
  return (normed * weight.view({1, c, 1, 1}) + bias.view({1, c, 1, 1})) * mask.to(x.scalar_type());
}

ConvNormBlockImpl::ConvNormBlockImpl(int64_t in, int64_t out, int64_t groups) {
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)));
  norm = register_module("norm", MaskedGroupNorm(out, groups));
}

torch::Tensor ConvNormBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  auto m = mask.to(x.scalar_type());
  return nn::mish(norm(conv(x * m), mask)) * m;
}

ResidualBlockImpl::ResidualBlockImpl(int64_t in, int64_t out, int64_t time_dim, int64_t style_dim, int64_t groups) {
  block1 = register_module("block1", ConvNormBlock(in, out, groups));
  block2 = register_module("block2", ConvNormBlock(out, out, groups));
  time_proj = register_module("time_proj", torch::nn::Linear(time_dim, out));
  style_proj = register_module("style_proj", torch::nn::Linear(style_dim, out));
  skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask,
                                         const torch::Tensor& time_emb, const torch::Tensor& style) {
  auto m = mask.to(x.scalar_type());
  auto h = block1(x, mask);
  auto cond = time_proj(nn::mish(time_emb)) + style_proj(style);
  h = h + cond.unsqueeze(-1).unsqueeze(-1);
  h = block2(h, mask);
  return h + skip(x * m) * m;
}

LinearAttentionImpl::LinearAttentionImpl(int64_t channels, int64_t heads_, int64_t head_dim_)
    : heads(heads_), head_dim(head_dim_) {
  qkv = register_module("qkv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 3 * heads * head_dim, 1).bias(false)));
  out = register_module("out", torch::nn::Conv2d(torch::nn::Conv2dOptions(heads * head_dim, channels, 1)));
}

torch::Tensor LinearAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto b = x.size(0), f = x.size(2), t = x.size(3);
  auto m = mask.to(x.scalar_type());
  auto proj = qkv(x * m).view({b, 3, heads, head_dim, f * t});
  auto q = proj.select(1, 0), k = proj.select(1, 1), v = proj.select(1, 2);
  auto valid = mask.expand({b, 1, f, t}).reshape({b, 1, 1, f * t});
  k = torch::softmax(k.masked_fill(valid.logical_not(), -std::numeric_limits<double>::infinity()), -1);
  auto context = torch::matmul(k, v.transpose(-2, -1));          // [B, H, D, D]
  auto attended = torch::matmul(context.transpose(-2, -1), q);   // [B, H, D, F*T]
  return out(attended.reshape({b, heads * head_dim, f, t})) * m;
}

ScoreNetImpl::ScoreNetImpl(const ScoreNetOptions& opts) : options(opts) {
  const auto c = options.channels, g = options.groups, s = options.style_dim;
  const auto td = c;
  time_mlp1 = register_module("time_mlp1", torch::nn::Linear(c, 4 * c));
  time_mlp2 = register_module("time_mlp2", torch::nn::Linear(4 * c, td));
  down0a = register_module("down0a", ResidualBlock(2, c, td, s, g));
  down0b = register_module("down0b", ResidualBlock(c, c, td, s, g));
  downsample = register_module("downsample", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).stride(2).padding(1)));
  down1a = register_module("down1a", ResidualBlock(c, 2 * c, td, s, g));
  down1b = register_module("down1b", ResidualBlock(2 * c, 2 * c, td, s, g));
  mid1 = register_module("mid1", ResidualBlock(2 * c, 2 * c, td, s, g));
  mid_attention = register_module("mid_attention",
                                  LinearAttention(2 * c, options.attention_heads, options.attention_head_dim));
  mid2 = register_module("mid2", ResidualBlock(2 * c, 2 * c, td, s, g));
  up1 = register_module("up1", ResidualBlock(4 * c, 2 * c, td, s, g));
  upsample = register_module("upsample", torch::nn::ConvTranspose2d(
                                             torch::nn::ConvTranspose2dOptions(2 * c, c, 4).stride(2).padding(1)));
  up0 = register_module("up0", ResidualBlock(2 * c, c, td, s, g));
  final_block = register_module("final_block", ConvNormBlock(c, c, g));
  final_conv = register_module("final_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 1, 1)));
}

torch::Tensor ScoreNetImpl::forward(const torch::Tensor& y_t, const torch::Tensor& t, const torch::Tensor& mu,
                                    const torch::Tensor& style, const torch::Tensor& mask) {
  if (y_t.sizes() != mu.sizes() || y_t.dim() != 3 || y_t.size(2) != options.n_mels) {
    throw InputError("score_net: Y_t and mu must both be [B, M, n_mels]");
  }
  if (mask.size(0) != y_t.size(0) || mask.size(1) != y_t.size(1) || t.numel() != y_t.size(0)) {
    throw InputError("score_net: mask/time shape mismatch");
  }
  if (options.n_mels % 2 != 0) throw InputError("score_net: n_mels must be even");
  const auto frames = y_t.size(1);
  const auto padded = frames + (frames % 2);
  auto pad = [&](const torch::Tensor& x) {
    return padded == frames ? x : torch::constant_pad_nd(x, {0, 0, 0, padded - frames});
  };
  // [B, M, F] -> [B, C, F, T]
  auto x = torch::stack({pad(y_t), pad(mu)}, 1).transpose(2, 3);
  auto m0 = torch::constant_pad_nd(mask.to(torch::kInt64), {0, padded - frames})
                .to(torch::kBool)
                .view({mask.size(0), 1, 1, padded});
  auto m1 = m0.index({torch::indexing::Ellipsis, torch::indexing::Slice(0, torch::indexing::None, 2)});

  auto temb = nn::sinusoidal_embedding(t.to(y_t.scalar_type()), options.channels, options.time_scale);
  temb = time_mlp2(nn::mish(time_mlp1(temb)));

  auto h0 = down0b(down0a(x, m0, temb, style), m0, temb, style);
  auto h1 = downsample(h0 * m0.to(x.scalar_type())) * m1.to(x.scalar_type());
  h1 = down1b(down1a(h1, m1, temb, style), m1, temb, style);
  auto mid = mid1(h1, m1, temb, style);
  mid = mid + mid_attention(mid, m1);
  mid = mid2(mid, m1, temb, style);
  auto u1 = up1(torch::cat({mid, h1}, 1), m1, temb, style);
  auto u0 = upsample(u1 * m1.to(x.scalar_type())) * m0.to(x.scalar_type());
  u0 = up0(torch::cat({u0, h0}, 1), m0, temb, style);
  auto y = final_conv(final_block(u0, m0)) * m0.to(x.scalar_type());  // [B, 1, F, T]
  return y.squeeze(1).transpose(1, 2).narrow(1, 0, frames);
}

}  // namespace zsdiff
