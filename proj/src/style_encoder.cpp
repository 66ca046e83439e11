#include "zsdiff/style_encoder.hpp"

#include "zsdiff/error.hpp"

namespace zsdiff {

MelStyleEncoderImpl::MelStyleEncoderImpl(const StyleEncoderOptions& opts) : options(opts) {
  spectral1 = register_module("spectral1", torch::nn::Linear(options.n_mels, options.width));
  spectral2 = register_module("spectral2", torch::nn::Linear(options.width, options.width));
  temporal1 = register_module("temporal1", nn::MaskedConv1d(options.width, 2 * options.width, options.kernel));
  temporal2 = register_module("temporal2", nn::MaskedConv1d(options.width, 2 * options.width, options.kernel));
  attention = register_module("attention", nn::MultiHeadAttention(options.width, options.heads, options.dropout));
  project = register_module("project", torch::nn::Linear(options.width, options.style_dim));
  drop = register_module("drop", torch::nn::Dropout(options.dropout));
}

torch::Tensor MelStyleEncoderImpl::frame_features(const torch::Tensor& mels, const torch::Tensor& mask) {
  auto h = drop(nn::mish(spectral1(mels)));
  h = nn::apply_mask(nn::mish(spectral2(h)), mask);
  for (auto* conv : {&temporal1, &temporal2}) {
    h = h + drop(torch::glu((*conv)(h, mask), -1));
  }
  if (!bypass_attention) h = h + drop(attention(h, mask));
  return nn::apply_mask(h, mask);
}

torch::Tensor MelStyleEncoderImpl::forward(const torch::Tensor& mels, const torch::Tensor& mask) {
  auto h = frame_features(mels, mask);
  auto count = mask.sum(1, true).to(h.scalar_type()).clamp_min(1.0);
  return project(h.sum(1) / count);
}

torch::Tensor encode_style(const MelSpectrogram& mel, MelStyleEncoder& encoder) {
  if (mel.frames.dim() != 2 || mel.frame_count() < kMinStyleFrames) {
    throw InputError("encode_style: reference needs at least 4 frames");
  }
  if (!torch::isfinite(mel.frames).all().item<bool>()) throw InputError("encode_style: non-finite mel");
  auto param = encoder->parameters().front();
  auto frames = mel.frames.to(param.scalar_type()).unsqueeze(0);
  auto mask = torch::ones({1, mel.frame_count()}, torch::kBool);
  return encoder(frames, mask).squeeze(0);
}

double cosine_similarity(const torch::Tensor& a, const torch::Tensor& b) {
  auto x = a.detach().to(torch::kFloat64).flatten();
  auto y = b.detach().to(torch::kFloat64).flatten();
  if (x.numel() != y.numel()) throw InputError("cosine_similarity: dimension mismatch");
  const double nx = x.norm().item<double>();
  const double ny = y.norm().item<double>();
  if (nx == 0.0 || ny == 0.0) throw InputError("cosine_similarity: zero vector");
  return std::clamp(torch::dot(x, y).item<double>() / (nx * ny), -1.0, 1.0);
}

}  // namespace zsdiff
