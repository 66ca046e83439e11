#include "zsdiff/encoder.hpp"

#include <cmath>
#include <limits>

#include "zsdiff/error.hpp"

namespace zsdiff {
namespace {

nn::BlockOptions block_options(const EncoderOptions& o, int64_t style_dim) {
  nn::BlockOptions b;
  b.width = o.width;
  b.heads = o.heads;
  b.ff_width = o.ff_width;
  b.dropout = o.dropout;
  b.style_dim = style_dim;
  return b;
}

torch::Tensor add_positions(const torch::Tensor& x, const torch::Tensor& mask) {
  auto pos = nn::sinusoidal_positions(x.size(1), x.size(2), x.scalar_type()).unsqueeze(0);
  return nn::apply_mask(x + pos, mask);
}

}  // namespace

TextEncoderImpl::TextEncoderImpl(const EncoderOptions& opts) : options(opts) {
  embed = register_module("embed", torch::nn::Embedding(
                                       torch::nn::EmbeddingOptions(options.vocab_size, options.width).padding_idx(0)));
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < options.blocks; ++i) blocks->push_back(nn::TransformerBlock(block_options(options, 0)));
  final_norm = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({options.width})));
}

torch::Tensor TextEncoderImpl::forward(const torch::Tensor& tokens, const torch::Tensor& mask) {
  if (tokens.size(1) > options.max_tokens) throw InputError("text_encode: input longer than max_tokens");
  if (tokens.size(1) < 1) throw InputError("text_encode: empty input");
  auto h = add_positions(embed(tokens) * std::sqrt(static_cast<double>(options.width)), mask);
  for (const auto& block : *blocks) h = block->as<nn::TransformerBlock>()->forward(h, mask);
  return nn::apply_mask(final_norm(h), mask);
}

AlignerImpl::AlignerImpl(const EncoderOptions& o) {
  mel_conv1 = register_module("mel_conv1", nn::MaskedConv1d(o.n_mels, o.aligner_width, 3));
  mel_conv2 = register_module("mel_conv2", nn::MaskedConv1d(o.aligner_width, o.aligner_width, 1));
  text_conv1 = register_module("text_conv1", nn::MaskedConv1d(o.width, o.aligner_width, 3));
  text_conv2 = register_module("text_conv2", nn::MaskedConv1d(o.aligner_width, o.aligner_width, 1));
}

torch::Tensor AlignerImpl::encode_mel(const torch::Tensor& mels, const torch::Tensor& mask) {
  return mel_conv2(torch::relu(mel_conv1(mels, mask)), mask);
}

torch::Tensor AlignerImpl::encode_text(const torch::Tensor& h, const torch::Tensor& mask) {
  return text_conv2(torch::relu(text_conv1(h, mask)), mask);
}

torch::Tensor negative_sq_distance(const torch::Tensor& q, const torch::Tensor& k) {
  auto diff = q.unsqueeze(2) - k.unsqueeze(1);  // [B, M, N, D]
  return -diff.pow(2).sum(-1);
}

torch::Tensor AlignerImpl::forward(const torch::Tensor& text_hidden, const torch::Tensor& text_mask,
                                   const torch::Tensor& mels, const torch::Tensor& mel_mask) {
  auto q = encode_mel(mels, mel_mask);
  auto k = encode_text(text_hidden, text_mask);
  auto energies = negative_sq_distance(q, k);
  return energies.masked_fill(text_mask.unsqueeze(1).logical_not(), -std::numeric_limits<double>::infinity());
}

DurationPredictorImpl::DurationPredictorImpl(const EncoderOptions& o) {
  style_proj = register_module("style_proj", torch::nn::Linear(o.style_dim, o.width));
  conv1 = register_module("conv1", nn::MaskedConv1d(o.width, o.width, 3));
  conv2 = register_module("conv2", nn::MaskedConv1d(o.width, o.width, 3));
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({o.width})));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({o.width})));
  out = register_module("out", torch::nn::Linear(o.width, 1));
  drop = register_module("drop", torch::nn::Dropout(o.dropout));
}

torch::Tensor DurationPredictorImpl::forward(const torch::Tensor& h, const torch::Tensor& style,
                                             const torch::Tensor& mask) {
  auto x = nn::apply_mask(h + style_proj(style).unsqueeze(1), mask);
  x = drop(norm1(torch::relu(conv1(x, mask))));
  x = drop(norm2(torch::relu(conv2(x, mask))));
  return out(x).squeeze(-1) * mask.to(x.scalar_type());
}

torch::Tensor duration_loss(const torch::Tensor& log_pred, const std::vector<std::vector<int64_t>>& durations,
                            const torch::Tensor& mask) {
  const auto batch = log_pred.size(0);
  if (static_cast<int64_t>(durations.size()) != batch) throw InputError("duration_loss: batch size mismatch");
  auto target = torch::zeros_like(log_pred);
  for (int64_t b = 0; b < batch; ++b) {
    const auto& d = durations[static_cast<size_t>(b)];
    auto logd = torch::log(torch::tensor(d, torch::kFloat64)).to(log_pred.scalar_type());
    target[b].narrow(0, 0, static_cast<int64_t>(d.size())).copy_(logd);
  }
  auto m = mask.to(log_pred.scalar_type());
  auto per_example = ((log_pred - target).pow(2) * m).sum(1) / m.sum(1).clamp_min(1.0);
  return per_example.mean();
}

StyleAdaptiveEncoderImpl::StyleAdaptiveEncoderImpl(const EncoderOptions& opts) : options(opts) {
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < options.blocks; ++i) {
    blocks->push_back(nn::TransformerBlock(block_options(options, options.style_dim)));
  }
  final_norm = register_module("final_norm", nn::Saln(options.width, options.style_dim));
  project = register_module("project", torch::nn::Linear(options.width, options.n_mels));
}

torch::Tensor StyleAdaptiveEncoderImpl::forward(const torch::Tensor& regulated, const torch::Tensor& style,
                                                const torch::Tensor& mask) {
  auto h = add_positions(regulated, mask);
  for (const auto& block : *blocks) h = block->as<nn::TransformerBlock>()->forward(h, mask, style);
  return nn::apply_mask(project(final_norm(h, style)), mask);
}

void StyleAdaptiveEncoderImpl::rig_identity_saln() {
  for (const auto& block : *blocks) {
    auto b = block->as<nn::TransformerBlock>();
    b->saln1->rig_identity();
    b->saln2->rig_identity();
  }
  final_norm->rig_identity();
}

torch::Tensor prior_loss(const torch::Tensor& mu, const torch::Tensor& y, const torch::Tensor& mel_mask) {
  if (mu.sizes() != y.sizes()) throw InputError("prior_loss: shape mismatch");
  auto m = nn::mask_as(mel_mask, mu);
  auto per_example = ((mu - y).pow(2) * m).sum({1, 2}) / (m.sum({1, 2}) * mu.size(2)).clamp_min(1.0);
  return per_example.mean();
}

}  // namespace zsdiff
