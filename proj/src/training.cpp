#include "zsdiff/training.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "zsdiff/error.hpp"
#include "zsdiff/log.hpp"

namespace zsdiff {
namespace {

constexpr const char* kParamPrefixes[] = {"style_encoder/", "hier_encoder/", "diffusion/"};

bool is_parameter_key(const std::string& key) {
  for (const char* p : kParamPrefixes) {
    if (key.rfind(p, 0) == 0) return true;
  }
  return false;
}

std::string slash_key(std::string key) {
  std::replace(key.begin(), key.end(), '.', '/');
  return key;
}

uint64_t mix_seed(uint64_t seed, int64_t step) {
  // splitmix64 of (seed, step)
  uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(step) + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string join_lines(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += s + '\n';
  return out;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<Utterance> sample_batch(const std::vector<Utterance>& corpus, int64_t count, at::Generator& gen) {
  std::vector<Utterance> out;
  const auto n = static_cast<int64_t>(corpus.size());
  while (static_cast<int64_t>(out.size()) < count) {
    auto perm = torch::randperm(n, gen, torch::kInt64);
    auto* p = perm.data_ptr<int64_t>();
    for (int64_t i = 0; i < n && static_cast<int64_t>(out.size()) < count; ++i) {
      out.push_back(corpus[static_cast<size_t>(p[i])]);
    }
  }
  return out;
}

}  // namespace

// ---- Checkpoint -----------------------------------------------------------

int64_t Checkpoint::step() const { return archive.array("step").item<int64_t>(); }
std::string Checkpoint::config_hash() const { return archive.string("config_hash"); }

RunConfig Checkpoint::config() const {
  return RunConfig::from_json(nlohmann::json::parse(archive.string("config")));
}

Vocabulary Checkpoint::vocab() const { return Vocabulary(split_lines(archive.string("vocab"))); }

MelStats Checkpoint::stats() const { return {archive.array("stats/mean"), archive.array("stats/std")}; }

std::map<std::string, torch::Tensor> Checkpoint::parameters() const {
  std::map<std::string, torch::Tensor> out;
  for (const auto& [key, value] : archive.arrays) {
    if (is_parameter_key(key)) out.emplace(key, value);
  }
  return out;
}

void Checkpoint::save(const std::filesystem::path& path) const { archive.save(path); }

Checkpoint Checkpoint::load(const std::filesystem::path& path, const std::optional<std::string>& expected_hash,
                            bool allow_mismatch) {
  Checkpoint ckpt{NamedArrays::load(path)};
  const auto& strings = ckpt.archive.strings;
  auto magic = strings.find("magic");
  if (magic == strings.end() || magic->second != kCheckpointMagic) {
    throw RuntimeError("not a checkpoint archive: " + path.string());
  }
  const auto version = ckpt.archive.string("version");
  const auto major = version.substr(0, version.find('.'));
  const std::string ours = kCheckpointVersion;
  if (major != ours.substr(0, ours.find('.')) && !allow_mismatch) {
    throw RuntimeError("checkpoint version " + version + " incompatible with " + ours);
  }
  if (expected_hash && *expected_hash != ckpt.config_hash() && !allow_mismatch) {
    throw RuntimeError("checkpoint config hash " + ckpt.config_hash() + " != expected " + *expected_hash);
  }
  return ckpt;
}

bool Checkpoint::identical_to(const Checkpoint& other) const {
  if (archive.strings != other.archive.strings) return false;
  if (archive.arrays.size() != other.archive.arrays.size()) return false;
  for (const auto& [key, value] : archive.arrays) {
    auto it = other.archive.arrays.find(key);
    if (it == other.archive.arrays.end() || !torch::equal(value, it->second)) return false;
  }
  return true;
}

std::vector<std::string> Checkpoint::differing_parameters(const Checkpoint& other) const {
  std::vector<std::string> out;
  for (const auto& [key, value] : parameters()) {
    auto it = other.archive.arrays.find(key);
    if (it == other.archive.arrays.end() || !torch::equal(value, it->second)) out.push_back(key);
  }
  return out;
}

// ---- Trainer --------------------------------------------------------------

AcousticModel make_model(const RunConfig& config) {
  torch::manual_seed(config.seed);
  auto cfg = config.model;
  cfg.n_mels = config.features.n_mels;
  return AcousticModel(cfg);
}

Trainer::Trainer(RunConfig config, Vocabulary vocab, MelStats stats)
    : config_(std::move(config)), vocab_(std::move(vocab)), stats_(std::move(stats)) {
  config_.train.validate();
  config_.model.vocab_size = vocab_.size();
  model_ = make_model(config_);
  std::set<std::string> frozen;
  for (const auto& g : config_.train.freeze) frozen.insert(canonical_group(g));
  std::vector<std::string> trainable;
  for (const auto& g : parameter_groups()) {
    if (!frozen.count(g)) trainable.push_back(g);
  }
  set_trainable_groups(trainable);
}

Trainer Trainer::from_checkpoint(const Checkpoint& ckpt) {
  Trainer trainer(ckpt.config(), ckpt.vocab(), ckpt.stats());
  trainer.model_->load_named_state(ckpt.parameters());
  trainer.step_ = ckpt.step();
  std::map<std::string, std::map<std::string, torch::Tensor>> moments;
  for (const auto& [key, value] : ckpt.archive.arrays) {
    if (key.rfind("optimizer/", 0) != 0) continue;
    const auto rest = key.substr(std::string("optimizer/").size());
    const auto slash = rest.rfind('/');
    moments[rest.substr(0, slash)][rest.substr(slash + 1)] = value;
  }
  trainer.rebuild_optimizer(moments);
  return trainer;
}

std::map<std::string, std::map<std::string, torch::Tensor>> Trainer::export_moments() const {
  std::map<std::string, std::map<std::string, torch::Tensor>> out;
  if (!optimizer_) return out;
  auto& state = optimizer_->state();
  for (const auto& [key, param] : trainable_params_) {
    auto it = state.find(param.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
    out[key]["exp_avg"] = s.exp_avg().clone();
    out[key]["exp_avg_sq"] = s.exp_avg_sq().clone();
    out[key]["step"] = torch::tensor(s.step(), torch::kInt64);
  }
  return out;
}

void Trainer::set_trainable_groups(const std::vector<std::string>& groups) {
  auto moments = export_moments();
  trainable_.clear();
  for (const auto& g : groups) trainable_.push_back(canonical_group(g));
  rebuild_optimizer(moments);
}

void Trainer::rebuild_optimizer(const std::map<std::string, std::map<std::string, torch::Tensor>>& moments) {
  std::set<std::string> prefixes;
  for (const auto& g : trainable_) prefixes.insert(group_prefix(g));
  trainable_params_.clear();
  std::vector<torch::Tensor> params;
  for (const auto& item : model_->named_parameters(true)) {
    bool train = false;
    for (const auto& p : prefixes) train = train || item.key().rfind(p, 0) == 0;
    item.value().set_requires_grad(train);
    if (train) {
      trainable_params_.emplace_back(slash_key(item.key()), item.value());
      params.push_back(item.value());
    }
  }
  optimizer_.reset();
  if (params.empty()) return;
  optimizer_ = std::make_unique<torch::optim::Adam>(params, torch::optim::AdamOptions(config_.train.learning_rate));
  auto& state = optimizer_->state();
  for (const auto& [key, param] : trainable_params_) {
    auto it = moments.find(key);
    if (it == moments.end()) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(it->second.at("step").item<int64_t>());
    s->exp_avg(it->second.at("exp_avg").clone());
    s->exp_avg_sq(it->second.at("exp_avg_sq").clone());
    state[param.unsafeGetTensorImpl()] = std::move(s);
  }
}

double Trainer::learning_rate_at(int64_t step) const {
  const auto& t = config_.train;
  if (t.warmup_steps <= 0) return t.learning_rate;
  return t.learning_rate * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(t.warmup_steps));
}

double Trainer::lambda_bin_at(int64_t step) const {
  const auto ramp = config_.train.lambda_bin_ramp_steps;
  if (ramp <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(step) / static_cast<double>(ramp));
}

std::vector<Utterance> Trainer::normalize(const std::vector<Utterance>& corpus) const {
  std::vector<Utterance> out = corpus;
  for (auto& u : out) u.mel = normalize_mel(u.mel, stats_);
  return out;
}

std::vector<StepMetrics> Trainer::run(const std::vector<Utterance>& raw_corpus, int64_t steps,
                                      const StepCallback& callback, const std::vector<Utterance>* regularization) {
  if (raw_corpus.empty()) throw InputError("train: empty corpus");
  if (steps < 0) throw InputError("train: negative step count");
  const auto corpus = normalize(raw_corpus);
  std::vector<Utterance> reg;
  if (regularization && !regularization->empty()) reg = normalize(*regularization);

  const auto& tc = config_.train;
  const auto dtype = model_->parameters().front().scalar_type();
  std::vector<StepMetrics> history;
  model_->train();
  for (int64_t i = 0; i < steps; ++i) {
    const uint64_t step_seed = mix_seed(config_.seed, step_);
    torch::manual_seed(step_seed);  // dropout
    auto gen = at::make_generator<at::CPUGeneratorImpl>(step_seed ^ 0xA5A5A5A5ULL);

    std::vector<Utterance> utts;
    if (reg.empty()) {
      utts = sample_batch(corpus, tc.batch_size, gen);
    } else {
      const auto n_target = std::max<int64_t>(
          1, static_cast<int64_t>(std::llround(tc.batch_size / (1.0 + tc.finetune_mix_ratio))));
      utts = sample_batch(corpus, n_target, gen);
      for (auto& u : sample_batch(reg, tc.batch_size - n_target, gen)) utts.push_back(std::move(u));
    }
    auto batch = collate(utts).to(dtype);
    if (!torch::isfinite(batch.mels).all().item<bool>()) {
      throw RuntimeError("training input at step " + std::to_string(step_) + " has non-finite features");
    }
    auto draw = draw_diffusion_noise(batch, config_.features.n_mels, dtype, gen, config_.model.schedule.horizon);

    LossOptions lo;
    lo.lambda_bin = lambda_bin_at(step_);
    lo.weight_diff = tc.weight_diffusion;
    lo.weight_prior = tc.weight_prior;
    lo.weight_align = tc.weight_align;
    lo.detach_mu_for_diffusion = tc.detach_mu;
    lo.sigma_weighted_diffusion = tc.sigma_weighted_diffusion;

    StepMetrics metrics;
    metrics.step = step_;
    metrics.learning_rate = learning_rate_at(step_);
    metrics.lambda_bin = lo.lambda_bin;
    if (optimizer_) {
      auto loss = total_loss(model_, batch, draw, lo);
      metrics.losses = loss.values();
      if (!std::isfinite(metrics.losses["total"])) {
        throw RuntimeError("training diverged at step " + std::to_string(step_) + " (non-finite loss)");
      }
      optimizer_->zero_grad();
      loss.total.backward();
      if (tc.max_grad_norm > 0.0) {
        std::vector<torch::Tensor> params;
        for (const auto& [k, p] : trainable_params_) params.push_back(p);
        torch::nn::utils::clip_grad_norm_(params, tc.max_grad_norm);
      }
      for (auto& group : optimizer_->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(metrics.learning_rate);
      }
      optimizer_->step();
    } else {
      torch::NoGradGuard guard;
      metrics.losses = total_loss(model_, batch, draw, lo).values();
    }
    ++step_;
    history.push_back(metrics);
    if (callback) callback(metrics);
  }
  model_->eval();
  return history;
}

void Trainer::train_to_disk(const std::vector<Utterance>& corpus, int64_t steps, const std::filesystem::path& out_dir,
                            const std::vector<Utterance>* regularization) {
  std::filesystem::create_directories(out_dir);
  std::ofstream metrics_log(out_dir / "metrics.jsonl", std::ios::app);
  const auto interval = config_.train.checkpoint_interval;
  int64_t done = 0;
  auto last_good = checkpoint();
  last_good.save(out_dir / "checkpoint.zsd");
  while (done < steps) {
    const auto chunk = std::min(interval - (step_ % interval), steps - done);
    try {
      run(corpus, chunk,
          [&](const StepMetrics& m) {
            nlohmann::json rec = {{"step", m.step}, {"lr", m.learning_rate}, {"lambda_bin", m.lambda_bin}};
            for (const auto& [k, v] : m.losses) rec[k] = v;
            metrics_log << rec.dump() << '\n';
            metrics_log.flush();
            if (m.step % 100 == 0) log::info("step ", m.step, " total ", m.losses.at("total"));
          },
          regularization);
    } catch (const RuntimeError&) {
      log::error("aborting; last good checkpoint at step ", last_good.step(), " kept in ", out_dir.string());
      throw;
    }
    done += chunk;
    last_good = checkpoint();
    last_good.save(out_dir / "checkpoint.zsd");
    if (step_ % interval == 0) last_good.save(out_dir / ("checkpoint_" + std::to_string(step_) + ".zsd"));
  }
}

Checkpoint Trainer::checkpoint() {
  Checkpoint ckpt;
  auto& a = ckpt.archive;
  a.strings["magic"] = kCheckpointMagic;
  a.strings["version"] = kCheckpointVersion;
  a.strings["config_hash"] = config_.model_hash();
  a.strings["config"] = config_.to_json().dump();
  a.strings["vocab"] = join_lines(vocab_.symbols());
  for (const auto& [key, value] : model_->named_state()) a.arrays[key] = value.detach().clone();
  for (const auto& [key, fields] : export_moments()) {
    for (const auto& [field, value] : fields) a.arrays["optimizer/" + key + "/" + field] = value;
  }
  a.arrays["stats/mean"] = stats_.mean.clone();
  a.arrays["stats/std"] = stats_.std.clone();
  a.arrays["step"] = torch::tensor(step_, torch::kInt64);
  return ckpt;
}

Checkpoint finetune(const Checkpoint& checkpoint, const std::vector<Utterance>& target,
                    const std::vector<std::string>& groups, int64_t steps,
                    const std::vector<Utterance>* regularization) {
  for (const auto& g : groups) canonical_group(g);
  if (groups.empty()) return checkpoint;
  auto trainer = Trainer::from_checkpoint(checkpoint);
  trainer.set_trainable_groups(groups);
  trainer.run(target, steps, {}, regularization);
  return trainer.checkpoint();
}

}  // namespace zsdiff
