#include "zsdiff/model.hpp"

#include <algorithm>

#include "zsdiff/error.hpp"
#include "zsdiff/log.hpp"

namespace zsdiff {

StyleEncoderOptions ModelConfig::style_encoder_options() const {
  StyleEncoderOptions o;
  o.n_mels = n_mels;
  o.width = style_width;
  o.style_dim = style_dim;
  o.heads = heads;
  o.dropout = dropout;
  return o;
}

EncoderOptions ModelConfig::encoder_options() const {
  EncoderOptions o;
  o.vocab_size = vocab_size;
  o.n_mels = n_mels;
  o.width = width;
  o.heads = heads;
  o.ff_width = ff_width;
  o.blocks = encoder_blocks;
  o.max_tokens = max_tokens;
  o.style_dim = style_dim;
  o.aligner_width = aligner_width;
  o.dropout = dropout;
  return o;
}

ScoreNetOptions ModelConfig::score_net_options() const {
  ScoreNetOptions o;
  o.n_mels = n_mels;
  o.channels = unet_channels;
  o.groups = unet_groups;
  o.style_dim = style_dim;
  return o;
}

std::string canonical_group(const std::string& name) {
  if (name == "sae") return "style_adaptive_encoder";
  if (name == "diff") return "diffusion";
  const auto& groups = parameter_groups();
  if (std::find(groups.begin(), groups.end(), name) == groups.end()) {
    throw InputError("unknown parameter group '" + name + "'");
  }
  return name;
}

std::string group_prefix(const std::string& group) {
  const auto g = canonical_group(group);
  if (g == "style_encoder") return "style_encoder.";
  if (g == "text_encoder") return "hier_encoder.text.";
  if (g == "aligner") return "hier_encoder.aligner.";
  if (g == "duration_predictor") return "hier_encoder.duration.";
  if (g == "style_adaptive_encoder") return "hier_encoder.sae.";
  return "diffusion.";
}

HierarchicalEncoderImpl::HierarchicalEncoderImpl(const EncoderOptions& options) {
  text = register_module("text", TextEncoder(options));
  aligner = register_module("aligner", Aligner(options));
  duration = register_module("duration", DurationPredictor(options));
  sae = register_module("sae", StyleAdaptiveEncoder(options));
}

DiffusionModelImpl::DiffusionModelImpl(const ScoreNetOptions& options) {
  unet = register_module("unet", ScoreNet(options));
}

AcousticModelImpl::AcousticModelImpl(const ModelConfig& cfg) : config(cfg) {
  style_encoder = register_module("style_encoder", MelStyleEncoder(config.style_encoder_options()));
  hier_encoder = register_module("hier_encoder", HierarchicalEncoder(config.encoder_options()));
  diffusion = register_module("diffusion", DiffusionModel(config.score_net_options()));
}

std::map<std::string, torch::Tensor> AcousticModelImpl::named_state() {
  std::map<std::string, torch::Tensor> out;
  for (const auto& item : named_parameters(true)) {
    auto key = item.key();
    std::replace(key.begin(), key.end(), '.', '/');
    out.emplace(key, item.value());
  }
  return out;
}

void AcousticModelImpl::load_named_state(const std::map<std::string, torch::Tensor>& state) {
  torch::NoGradGuard guard;
  for (auto& [key, param] : named_state()) {
    auto it = state.find(key);
    if (it == state.end()) throw RuntimeError("checkpoint is missing parameter " + key);
    if (it->second.sizes() != param.sizes()) throw RuntimeError("checkpoint shape mismatch for " + key);
    param.copy_(it->second);
  }
}

std::vector<torch::Tensor> AcousticModelImpl::group_parameters(const std::string& group) {
  const auto prefix = group_prefix(group);
  std::vector<torch::Tensor> params;
  for (const auto& item : named_parameters(true)) {
    if (item.key().rfind(prefix, 0) == 0) params.push_back(item.value());
  }
  return params;
}

DiffusionDraw draw_diffusion_noise(const Batch& batch, int64_t n_mels, torch::ScalarType dtype, at::Generator& gen,
                                   double horizon) {
  DiffusionDraw draw;
  draw.t = torch::rand({batch.size()}, gen, torch::TensorOptions().dtype(torch::kFloat64)) *
               (horizon - kMinDiffusionTime) +
           kMinDiffusionTime;
  for (int64_t b = 0; b < batch.size(); ++b) {
    draw.eps.push_back(torch::randn({batch.mel_lengths[b], n_mels}, gen, torch::TensorOptions().dtype(dtype)));
  }
  return draw;
}

std::map<std::string, double> LossBreakdown::values() const {
  return {{"total", total.item<double>()},
          {"diffusion", diffusion.item<double>()},
          {"prior", prior.item<double>()},
          {"forward_sum", forward_sum.item<double>()},
          {"binarization", binarization.item<double>()},
          {"duration", duration.item<double>()}};
}

EncodedBatch encode_batch(AcousticModel& model, const Batch& batch) {
  EncodedBatch enc;
  enc.style = model->style_encoder(batch.mels, batch.mel_mask);
  enc.text_hidden = model->hier_encoder->text(batch.tokens, batch.token_mask);
  enc.log_durations = model->hier_encoder->duration(enc.text_hidden, enc.style, batch.token_mask);
  return enc;
}

std::pair<torch::Tensor, torch::Tensor> regulate_batch(const torch::Tensor& text_hidden,
                                                       const std::vector<std::vector<int64_t>>& durations) {
  std::vector<torch::Tensor> rows;
  int64_t longest = 0;
  for (size_t b = 0; b < durations.size(); ++b) {
    const auto n = static_cast<int64_t>(durations[b].size());
    rows.push_back(length_regulate(text_hidden[static_cast<int64_t>(b)].narrow(0, 0, n), durations[b]));
    longest = std::max(longest, rows.back().size(0));
  }
  auto mask = torch::zeros({static_cast<int64_t>(rows.size()), longest}, torch::kBool);
  for (size_t b = 0; b < rows.size(); ++b) {
    const auto m = rows[b].size(0);
    mask[static_cast<int64_t>(b)].narrow(0, 0, m).fill_(true);
    if (m < longest) rows[b] = torch::constant_pad_nd(rows[b], {0, 0, 0, longest - m});
  }
  return {torch::stack(rows), mask};
}

namespace {

Batch select_examples(const Batch& batch, const std::vector<int64_t>& keep) {
  auto idx = torch::tensor(keep, torch::kInt64);
  int64_t max_n = 0, max_m = 0;
  Batch out;
  for (auto i : keep) {
    max_n = std::max(max_n, batch.text_lengths[i]);
    max_m = std::max(max_m, batch.mel_lengths[i]);
    out.speaker_ids.push_back(batch.speaker_ids[i]);
    out.text_lengths.push_back(batch.text_lengths[i]);
    out.mel_lengths.push_back(batch.mel_lengths[i]);
  }
  out.tokens = batch.tokens.index_select(0, idx).narrow(1, 0, max_n);
  out.token_mask = batch.token_mask.index_select(0, idx).narrow(1, 0, max_n);
  out.mels = batch.mels.index_select(0, idx).narrow(1, 0, max_m);
  out.mel_mask = batch.mel_mask.index_select(0, idx).narrow(1, 0, max_m);
  return out;
}

}  // namespace

LossBreakdown total_loss(AcousticModel& model, const Batch& input, const DiffusionDraw& input_draw,
                         const LossOptions& options) {
  std::vector<int64_t> keep;
  for (int64_t b = 0; b < input.size(); ++b) {
    if (input.mel_lengths[b] >= input.text_lengths[b]) {
      keep.push_back(b);
    } else {
      log::warn("total_loss: dropping example ", b, " (", input.mel_lengths[b], " frames < ",
                input.text_lengths[b], " tokens)");
    }
  }
  if (keep.empty()) throw InputError("total_loss: no example with a feasible alignment");
  const bool all_kept = static_cast<int64_t>(keep.size()) == input.size();
  const Batch batch = all_kept ? input : select_examples(input, keep);
  DiffusionDraw draw = input_draw;
  if (!all_kept) {
    draw.t = input_draw.t.index_select(0, torch::tensor(keep, torch::kInt64));
    draw.eps.clear();
    for (auto i : keep) draw.eps.push_back(input_draw.eps[static_cast<size_t>(i)]);
  }

  const auto& cfg = model->config;
  auto enc = encode_batch(model, batch);
  auto energies = model->hier_encoder->aligner(enc.text_hidden, batch.token_mask, batch.mels, batch.mel_mask);
  auto log_soft = torch::log_softmax(energies, -1);

  LossBreakdown out;
  std::vector<std::vector<int64_t>> durations;
  std::vector<torch::Tensor> fs_terms, bin_terms;
  for (int64_t b = 0; b < batch.size(); ++b) {
    const auto m = batch.mel_lengths[b], n = batch.text_lengths[b];
    auto ls = log_soft[b].narrow(0, 0, m).narrow(1, 0, n);
    fs_terms.push_back(forward_sum_loss(ls) / static_cast<double>(m));
    auto [hard, dur] = viterbi_align(ls);
    auto soft = torch::exp(ls);
    bin_terms.push_back(binarization_loss(soft, hard));
    out.alignments.push_back({soft.detach(), hard, dur});
    durations.push_back(std::move(dur));
  }
  out.forward_sum = options.weight_align * torch::stack(fs_terms).mean();
  out.binarization = options.weight_align * options.lambda_bin * torch::stack(bin_terms).mean();
  out.duration = options.weight_align * duration_loss(enc.log_durations, durations, batch.token_mask);

  auto [regulated, reg_mask] = regulate_batch(enc.text_hidden, durations);
  const auto frames = batch.mels.size(1);
  if (regulated.size(1) < frames) regulated = torch::constant_pad_nd(regulated, {0, 0, 0, frames - regulated.size(1)});
  auto mu = model->hier_encoder->sae(regulated, enc.style, batch.mel_mask);
  out.prior = options.weight_prior * prior_loss(mu, batch.mels, batch.mel_mask);

  // Forward diffusion sample per example.
  const auto dtype = batch.mels.scalar_type();
  auto eps = torch::zeros_like(batch.mels);
  std::vector<double> sigmas, decays;
  for (int64_t b = 0; b < batch.size(); ++b) {
    eps[b].narrow(0, 0, batch.mel_lengths[b]).copy_(draw.eps[static_cast<size_t>(b)]);
    const double t = draw.t[b].item<double>();
    if (t < kMinDiffusionTime) throw InputError("diffusion_loss: t below t_min");
    const double bint = cfg.schedule.integral(t);
    sigmas.push_back(std::sqrt(-std::expm1(-bint)));
    decays.push_back(std::exp(-0.5 * bint));
  }
  auto sigma = torch::tensor(sigmas, torch::kFloat64).to(dtype);
  auto decay = torch::tensor(decays, torch::kFloat64).to(dtype).view({-1, 1, 1});
  auto mu_cond = options.detach_mu_for_diffusion ? mu.detach() : mu;
  auto y_t = nn::apply_mask((1.0 - decay) * mu_cond + decay * batch.mels + sigma.view({-1, 1, 1}) * eps,
                            batch.mel_mask);
  auto score = model->diffusion->unet(y_t, draw.t.to(dtype), mu_cond, enc.style, batch.mel_mask);
  out.diffusion = options.weight_diff * diffusion_loss_from_output(score, eps, sigma, batch.mel_mask,
                                                                   options.sigma_weighted_diffusion);

  out.total = out.diffusion + out.prior + out.forward_sum + out.binarization + out.duration;
  out.mu = mu;
  out.style = enc.style;
  return out;
}

torch::Tensor sample_with_network(AcousticModel& model, const torch::Tensor& mu, const torch::Tensor& style,
                                  const torch::Tensor& mask, const SamplerOptions& options, int* evaluations,
                                  const TraceFn& trace) {
  torch::NoGradGuard guard;
  int calls = 0;
  ScoreFn score = [&](const torch::Tensor& y, double t) {
    ++calls;
    auto tt = torch::full({mu.size(0)}, t, mu.options());
    return model->diffusion->unet(y, tt, mu, style, mask);
  };
  auto out = reverse_sample(mu, score, model->config.schedule, options, nn::mask_as(mask, mu), trace);
  if (evaluations) *evaluations = calls;
  return out;
}

SynthesisResult synthesize(AcousticModel& model, const std::vector<int64_t>& tokens, const MelSpectrogram& reference,
                           const SynthesisOptions& options, const TraceFn& trace) {
  if (tokens.empty()) throw InputError("synthesize: empty token sequence");
  if (!(options.pace > 0.0)) throw InputError("synthesize: pace must be positive");
  torch::NoGradGuard guard;
  auto dtype = model->parameters().front().scalar_type();
  auto style = encode_style(reference, model->style_encoder).unsqueeze(0).to(dtype);
  auto tok = torch::tensor(tokens, torch::kInt64).unsqueeze(0);
  auto tok_mask = torch::ones_like(tok, torch::kBool);
  auto hidden = model->hier_encoder->text(tok, tok_mask);

  SynthesisResult result;
  if (options.durations) {
    if (options.durations->size() != tokens.size()) throw InputError("synthesize: one duration per token required");
    result.durations = *options.durations;
  } else {
    auto log_dur = model->hier_encoder->duration(hidden, style, tok_mask)[0];
    result.durations = durations_from_log(log_dur, options.pace);
    auto raw = torch::exp(log_dur.to(torch::kFloat64)) * options.pace;
    if ((raw < 0.5).all().item<bool>()) log::warn("synthesize: every predicted duration clamped to 1");
  }
  auto [regulated, mask] = regulate_batch(hidden, {result.durations});
  auto mu = model->hier_encoder->sae(regulated, style, mask);
  auto mel = sample_with_network(model, mu, style, mask, options.sampler, &result.score_evaluations, trace);
  result.mu = mu[0];
  result.mel = {mel[0].contiguous(), reference.config_hash};
  return result;
}

}  // namespace zsdiff
