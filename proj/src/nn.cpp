#include "zsdiff/nn.hpp"

#include <cmath>
#include <limits>

namespace zsdiff::nn {

torch::Tensor mask_as(const torch::Tensor& mask, const torch::Tensor& like) {
  return mask.unsqueeze(-1).to(like.scalar_type());
}

torch::Tensor sinusoidal_positions(int64_t length, int64_t dim, torch::ScalarType dtype) {
  auto pos = torch::arange(length, torch::TensorOptions().dtype(torch::kFloat64)).unsqueeze(1);
  auto i = torch::arange(dim / 2, torch::TensorOptions().dtype(torch::kFloat64)).unsqueeze(0);
  auto angle = pos / torch::pow(10000.0, 2.0 * i / dim);
  auto table = torch::zeros({length, dim}, torch::kFloat64);
  table.index_put_({torch::indexing::Slice(), torch::indexing::Slice(0, dim / 2 * 2, 2)}, torch::sin(angle));
  table.index_put_({torch::indexing::Slice(), torch::indexing::Slice(1, dim / 2 * 2, 2)}, torch::cos(angle));
  return table.to(dtype);
}

torch::Tensor sinusoidal_embedding(const torch::Tensor& t, int64_t dim, double scale) {
  const int64_t half = dim / 2;
  const double step = std::log(10000.0) / std::max<int64_t>(half - 1, 1);
  auto freqs = torch::exp(torch::arange(half, t.options()) * -step);
  auto arg = scale * t.unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(arg), torch::cos(arg)}, 1);
}

torch::Tensor mish(const torch::Tensor& x) { return x * torch::tanh(torch::softplus(x)); }

torch::Tensor saln(const torch::Tensor& h, const torch::Tensor& gain, const torch::Tensor& bias, double eps) {
  auto mean = h.mean(-1, true);
  auto var = (h - mean).pow(2).mean(-1, true);
  return gain * (h - mean) / torch::sqrt(var + eps) + bias;
}

SalnImpl::SalnImpl(int64_t width_, int64_t style_dim) : width(width_) {
  affine = register_module("affine", torch::nn::Linear(style_dim, 2 * width));
  torch::NoGradGuard guard;
  affine->bias.narrow(0, 0, width).fill_(1.0);
  affine->bias.narrow(0, width, width).zero_();
}

torch::Tensor SalnImpl::forward(const torch::Tensor& h, const torch::Tensor& s) {
  auto gb = affine(s).unsqueeze(1);  // [B, 1, 2W]
  return saln(h, gb.narrow(-1, 0, width), gb.narrow(-1, width, width));
}

void SalnImpl::rig_identity() {
  torch::NoGradGuard guard;
  affine->weight.zero_();
  affine->bias.narrow(0, 0, width).fill_(1.0);
  affine->bias.narrow(0, width, width).zero_();
}

MaskedConv1dImpl::MaskedConv1dImpl(int64_t in, int64_t out, int64_t kernel) {
  conv = register_module("conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(in, out, kernel).padding(kernel / 2)));
}

torch::Tensor MaskedConv1dImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  auto y = conv(apply_mask(x, mask).transpose(1, 2)).transpose(1, 2);
  return apply_mask(y, mask);
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int64_t width_, int64_t heads_, double dropout)
    : width(width_), heads(heads_) {
  TORCH_CHECK(width % heads == 0, "attention heads must divide the model width");
  qkv = register_module("qkv", torch::nn::Linear(width, 3 * width));
  out = register_module("out", torch::nn::Linear(width, width));
  drop = register_module("drop", torch::nn::Dropout(dropout));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto batch = x.size(0), time = x.size(1), head_dim = width / heads;
  auto proj = qkv(x).view({batch, time, 3, heads, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = proj[0], k = proj[1], v = proj[2];  // [B, H, T, D]
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  auto key_mask = mask.view({batch, 1, 1, time});
  scores = scores.masked_fill(key_mask.logical_not(), -std::numeric_limits<double>::infinity());
  auto attn = drop(torch::softmax(scores, -1));
  auto ctx = torch::matmul(attn, v).permute({0, 2, 1, 3}).reshape({batch, time, width});
  return apply_mask(out(ctx), mask);
}

TransformerBlockImpl::TransformerBlockImpl(const BlockOptions& opts) : options(opts) {
  if (options.style_dim > 0) {
    saln1 = register_module("saln1", Saln(options.width, options.style_dim));
    saln2 = register_module("saln2", Saln(options.width, options.style_dim));
  } else {
    ln1 = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({options.width})));
    ln2 = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({options.width})));
  }
  attention = register_module("attention", MultiHeadAttention(options.width, options.heads, options.dropout));
  ff1 = register_module("ff1", MaskedConv1d(options.width, options.ff_width, options.ff_kernel));
  ff2 = register_module("ff2", MaskedConv1d(options.ff_width, options.width, 1));
  drop = register_module("drop", torch::nn::Dropout(options.dropout));
}

torch::Tensor TransformerBlockImpl::norm(int which, const torch::Tensor& x, const torch::Tensor& style) {
  if (options.style_dim > 0) return which == 1 ? saln1(x, style) : saln2(x, style);
  return which == 1 ? ln1(x) : ln2(x);
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask,
                                            const torch::Tensor& style) {
  auto h = x + drop(attention(norm(1, x, style), mask));
  auto ff = ff2(torch::relu(ff1(norm(2, h, style), mask)), mask);
  return apply_mask(h + drop(ff), mask);
}

}  // namespace zsdiff::nn
