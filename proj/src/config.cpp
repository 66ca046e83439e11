#include "zsdiff/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "zsdiff/error.hpp"

namespace zsdiff {

using nlohmann::json;

namespace {

// Reads j[key] into out when present; type errors carry the dotted key path.
template <typename T>
void get(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(section.empty() ? key : section + "." + key, std::string("bad value: ") + e.what());
  }
}

void reject_unknown(const json& j, const std::string& section, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError(section.empty() ? "<root>" : section, "expected an object");
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      throw ConfigError(section.empty() ? item.key() : section + "." + item.key(), "unknown key");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("train.steps", "must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be > 0");
  if (warmup_steps < 0) throw ConfigError("train.warmup_steps", "must be >= 0");
  if (checkpoint_interval < 1) throw ConfigError("train.checkpoint_interval", "must be >= 1");
  if (finetune_mix_ratio < 0.0) throw ConfigError("train.finetune_mix_ratio", "must be >= 0");
  for (const auto& g : freeze) {
    try {
      canonical_group(g);
    } catch (const InputError&) {
      throw ConfigError("train.freeze", "unknown parameter group '" + g + "'");
    }
  }
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["corpus"] = corpus;
  j["out_dir"] = out_dir;
  j["features"] = {{"sample_rate_hz", features.sample_rate_hz}, {"n_fft", features.n_fft},
                   {"win_length", features.win_length},         {"hop_length", features.hop_length},
                   {"n_mels", features.n_mels},                 {"fmin_hz", features.fmin_hz},
                   {"fmax_hz", features.fmax_hz},               {"log_floor", features.log_floor}};
  const auto& m = model;
  j["model"] = {{"vocab_size", m.vocab_size},
                {"width", m.width},
                {"heads", m.heads},
                {"ff_width", m.ff_width},
                {"encoder_blocks", m.encoder_blocks},
                {"max_tokens", m.max_tokens},
                {"style_width", m.style_width},
                {"style_dim", m.style_dim},
                {"aligner_width", m.aligner_width},
                {"unet_channels", m.unet_channels},
                {"unet_groups", m.unet_groups},
                {"dropout", m.dropout},
                {"beta0", m.schedule.beta0},
                {"beta1", m.schedule.beta1},
                {"horizon", m.schedule.horizon}};
  const auto& t = train;
  j["train"] = {{"steps", t.steps},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"warmup_steps", t.warmup_steps},
                {"lambda_bin_ramp_steps", t.lambda_bin_ramp_steps},
                {"weight_diffusion", t.weight_diffusion},
                {"weight_prior", t.weight_prior},
                {"weight_align", t.weight_align},
                {"freeze", t.freeze},
                {"checkpoint_interval", t.checkpoint_interval},
                {"detach_mu", t.detach_mu},
                {"sigma_weighted_diffusion", t.sigma_weighted_diffusion},
                {"max_grad_norm", t.max_grad_norm},
                {"finetune_mix_ratio", t.finetune_mix_ratio}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, "", {"seed", "corpus", "out_dir", "features", "model", "train"});
  get(j, "", "seed", c.seed);
  get(j, "", "corpus", c.corpus);
  get(j, "", "out_dir", c.out_dir);
  if (j.contains("features")) {
    const auto& f = j["features"];
    reject_unknown(f, "features",
                   {"sample_rate_hz", "n_fft", "win_length", "hop_length", "n_mels", "fmin_hz", "fmax_hz", "log_floor"});
    get(f, "features", "sample_rate_hz", c.features.sample_rate_hz);
    get(f, "features", "n_fft", c.features.n_fft);
    get(f, "features", "win_length", c.features.win_length);
    get(f, "features", "hop_length", c.features.hop_length);
    get(f, "features", "n_mels", c.features.n_mels);
    get(f, "features", "fmin_hz", c.features.fmin_hz);
    get(f, "features", "fmax_hz", c.features.fmax_hz);
    get(f, "features", "log_floor", c.features.log_floor);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, "model",
                   {"vocab_size", "width", "heads", "ff_width", "encoder_blocks", "max_tokens", "style_width",
                    "style_dim", "aligner_width", "unet_channels", "unet_groups", "dropout", "beta0", "beta1",
                    "horizon"});
    auto& o = c.model;
    get(m, "model", "vocab_size", o.vocab_size);
    get(m, "model", "width", o.width);
    get(m, "model", "heads", o.heads);
    get(m, "model", "ff_width", o.ff_width);
    get(m, "model", "encoder_blocks", o.encoder_blocks);
    get(m, "model", "max_tokens", o.max_tokens);
    get(m, "model", "style_width", o.style_width);
    get(m, "model", "style_dim", o.style_dim);
    get(m, "model", "aligner_width", o.aligner_width);
    get(m, "model", "unet_channels", o.unet_channels);
    get(m, "model", "unet_groups", o.unet_groups);
    get(m, "model", "dropout", o.dropout);
    get(m, "model", "beta0", o.schedule.beta0);
    get(m, "model", "beta1", o.schedule.beta1);
    get(m, "model", "horizon", o.schedule.horizon);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, "train",
                   {"steps", "batch_size", "learning_rate", "warmup_steps", "lambda_bin_ramp_steps",
                    "weight_diffusion", "weight_prior", "weight_align", "freeze", "checkpoint_interval", "detach_mu",
                    "sigma_weighted_diffusion", "max_grad_norm", "finetune_mix_ratio"});
    auto& o = c.train;
    get(t, "train", "steps", o.steps);
    get(t, "train", "batch_size", o.batch_size);
    get(t, "train", "learning_rate", o.learning_rate);
    get(t, "train", "warmup_steps", o.warmup_steps);
    get(t, "train", "lambda_bin_ramp_steps", o.lambda_bin_ramp_steps);
    get(t, "train", "weight_diffusion", o.weight_diffusion);
    get(t, "train", "weight_prior", o.weight_prior);
    get(t, "train", "weight_align", o.weight_align);
    get(t, "train", "freeze", o.freeze);
    get(t, "train", "checkpoint_interval", o.checkpoint_interval);
    get(t, "train", "detach_mu", o.detach_mu);
    get(t, "train", "sigma_weighted_diffusion", o.sigma_weighted_diffusion);
    get(t, "train", "max_grad_norm", o.max_grad_norm);
    get(t, "train", "finetune_mix_ratio", o.finetune_mix_ratio);
  }
  try {
    c.features.validate();
  } catch (const InputError& e) {
    throw ConfigError("features", e.what());
  }
  try {
    c.model.schedule.validate();
  } catch (const InputError& e) {
    throw ConfigError("model.beta0", e.what());
  }
  if (c.model.n_mels != c.features.n_mels) c.model.n_mels = c.features.n_mels;
  if (c.model.width % c.model.heads != 0) throw ConfigError("model.heads", "must divide model.width");
  if (c.model.style_width % c.model.heads != 0) throw ConfigError("model.heads", "must divide model.style_width");
  if (c.model.unet_channels % c.model.unet_groups != 0) {
    throw ConfigError("model.unet_groups", "must divide model.unet_channels");
  }
  c.train.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("parse error: ") + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << to_json().dump(2) << '\n';
}

std::string RunConfig::model_hash() const {
  auto j = to_json();
  const std::string canon = j["features"].dump() + j["model"].dump();
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << "mc-" << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

RunConfig desk_config(int64_t width) {
  RunConfig c;
  c.model.width = width;
  c.model.ff_width = 4 * width;
  c.model.style_width = width;
  c.model.style_dim = width;
  c.model.aligner_width = width;
  c.model.unet_channels = 16;
  c.model.unet_groups = 4;
  return c;
}

}  // namespace zsdiff
