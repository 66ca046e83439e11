#include "zsdiff/commands.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "zsdiff/archive.hpp"
#include "zsdiff/error.hpp"
#include "zsdiff/log.hpp"

namespace zsdiff {
namespace {

void require_file(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw InputError(std::string(what) + " not found: " + path.string());
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

}  // namespace

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void SynthesisRequest::validate() const {
  if (text.empty()) throw InputError("synth: --text is required");
  if (n_steps < 1) throw InputError("synth: --n-steps must be >= 1");
  if (!(pace > 0.0)) throw InputError("synth: --pace must be > 0");
  if (!(temperature > 0.0)) throw InputError("synth: --temperature must be > 0");
  if (gl_iters < 1) throw InputError("synth: --gl-iters must be >= 1");
  parse_solver(solver);
  if (output_wav.empty()) throw InputError("synth: --out is required");
}

fs::path mel_archive_path(const fs::path& wav) {
  auto p = wav;
  p.replace_extension(".mel");
  return p;
}

SynthesisOutcome cmd_synthesize(const SynthesisRequest& req) {
  req.validate();
  require_file(req.checkpoint, "checkpoint");
  require_file(req.reference_wav, "reference wav");
  auto ckpt = Checkpoint::load(req.checkpoint, std::nullopt, req.allow_mismatch);
  auto trainer = Trainer::from_checkpoint(ckpt);
  auto& model = trainer.model();
  model->eval();
  const auto cfg = trainer.config();
  const auto& features = cfg.features;

  auto wave = read_wav(req.reference_wav);
  auto samples = resample_linear(wave.samples, wave.sample_rate_hz, features.sample_rate_hz);
  auto reference = normalize_mel(wave_to_mel(samples, features), trainer.stats());
  auto tokens = tokenize(req.text, trainer.vocab());

  SynthesisOptions options;
  options.sampler.n_steps = req.n_steps;
  options.sampler.solver = parse_solver(req.solver);
  options.sampler.temperature = req.temperature;
  options.sampler.seed = req.seed;
  options.pace = req.pace;

  NamedArrays trace_archive;
  TraceFn trace;
  if (req.trace_archive) {
    trace = [&](int step, double t, const torch::Tensor& y) {
      if ((step + 1) % std::max(1, req.trace_every) != 0 && step + 1 != req.n_steps) return;
      std::ostringstream key;
      key << "step" << std::setw(4) << std::setfill('0') << (step + 1);
      trace_archive.arrays[key.str()] = y[0].clone();
      trace_archive.strings[key.str() + "_t"] = std::to_string(t);
    };
  }
  auto result = synthesize(model, tokens, reference, options, trace);
  auto mel = denormalize_mel(result.mel, trainer.stats());
  mel.config_hash = features.hash();
  auto audio = mel_to_wave(mel, features, req.gl_iters, req.seed);
  write_wav(req.output_wav, audio, features.sample_rate_hz);

  SynthesisOutcome out;
  out.durations = result.durations;
  out.frames = mel.frame_count();
  out.samples = audio.size();
  out.score_evaluations = result.score_evaluations;
  out.mel_archive = mel_archive_path(req.output_wav);
  save_mel(out.mel_archive, mel);
  if (req.trace_archive) trace_archive.save(*req.trace_archive);
  return out;
}

std::string SecsReport::text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << "pair\t" << i << "\ttarget=" << r.target << "\treference=" << r.reference << "\tcontrol=" << r.control
       << "\tsame=" << r.same << "\tcross=" << r.cross << '\n';
  }
  os << "summary\tsame_speaker\tmean=" << same_mean << "\tstd=" << same_std << '\n';
  os << "summary\tcross_speaker\tmean=" << cross_mean << "\tstd=" << cross_std << '\n';
  return os.str();
}

SecsReport eval_secs(AcousticModel& model, const MelStats& stats, const std::vector<Utterance>& raw,
                     const SecsOptions& options) {
  std::map<std::string, std::vector<size_t>> by_speaker;
  for (size_t i = 0; i < raw.size(); ++i) by_speaker[raw[i].speaker_id].push_back(i);
  if (by_speaker.size() < 2) throw InputError("eval-secs: corpus needs at least 2 speakers");
  std::vector<size_t> targets;
  for (const auto& [spk, idx] : by_speaker) {
    if (idx.size() >= 2) targets.insert(targets.end(), idx.begin(), idx.end());
  }
  if (targets.empty()) throw InputError("eval-secs: no speaker has two utterances");
  if (options.n_pairs < 1) throw InputError("eval-secs: n_pairs must be >= 1");

  model->eval();
  torch::NoGradGuard guard;
  std::mt19937_64 rng(options.seed);
  auto pick = [&](size_t n) { return std::uniform_int_distribution<size_t>(0, n - 1)(rng); };
  SecsReport report;
  std::vector<double> same, cross;
  for (int p = 0; p < options.n_pairs; ++p) {
    const auto& target = raw[targets[pick(targets.size())]];
    const auto& pool = by_speaker[target.speaker_id];
    size_t ref_idx;
    do {
      ref_idx = pool[pick(pool.size())];
    } while (raw[ref_idx].id == target.id);
    std::vector<size_t> others;
    for (size_t i = 0; i < raw.size(); ++i) {
      if (raw[i].speaker_id != target.speaker_id) others.push_back(i);
    }
    const auto& control = raw[others[pick(others.size())]];
    const auto& reference = raw[ref_idx];

    SynthesisOptions so;
    so.sampler = options.sampler;
    so.sampler.seed = options.seed * 1000003ULL + static_cast<uint64_t>(p);
    auto synth = synthesize(model, target.token_ids, normalize_mel(reference.mel, stats), so);
    auto s_synth = encode_style(synth.mel, model->style_encoder);
    auto s_truth = encode_style(normalize_mel(target.mel, stats), model->style_encoder);
    auto s_control = encode_style(normalize_mel(control.mel, stats), model->style_encoder);
    SecsRow row{target.id, reference.id, control.id, zsdiff::cosine_similarity(s_synth, s_truth),
                zsdiff::cosine_similarity(s_synth, s_control)};
    same.push_back(row.same);
    cross.push_back(row.cross);
    report.rows.push_back(std::move(row));
  }
  std::tie(report.same_mean, report.same_std) = mean_std(same);
  std::tie(report.cross_mean, report.cross_std) = mean_std(cross);
  return report;
}

SecsReport cmd_eval_secs(const fs::path& checkpoint, const fs::path& corpus_dir, const SecsOptions& options,
                         bool allow_mismatch) {
  require_file(checkpoint, "checkpoint");
  require_file(corpus_dir / "metadata.txt", "corpus metadata");
  auto trainer = Trainer::from_checkpoint(Checkpoint::load(checkpoint, std::nullopt, allow_mismatch));
  auto corpus = load_corpus(corpus_dir, trainer.vocab(), trainer.config().features);
  return eval_secs(trainer.model(), trainer.stats(), corpus, options);
}

void cmd_make_synthetic(int speakers, int utts, uint64_t seed, const fs::path& out) {
  if (out.empty()) throw InputError("make-synthetic: --out is required");
  make_synthetic_corpus(speakers, utts, seed, out);
}

size_t cmd_prepare(const fs::path& corpus_dir, const fs::path& out_dir, const FeatureConfig& features) {
  require_file(corpus_dir / "metadata.txt", "corpus metadata");
  const auto vocab = Vocabulary::default_characters();
  auto corpus = load_corpus(corpus_dir, vocab, features);
  fs::create_directories(out_dir / "mels");
  std::vector<MelSpectrogram> mels;
  for (const auto& u : corpus) {
    save_mel(out_dir / "mels" / (u.id + ".mel"), u.mel);
    mels.push_back(u.mel);
  }
  if (!mels.empty()) {
    auto stats = MelStats::from_corpus(mels);
    NamedArrays archive;
    archive.arrays["mean"] = stats.mean;
    archive.arrays["std"] = stats.std;
    archive.strings["config_hash"] = features.hash();
    archive.save(out_dir / "stats.zsd");
  }
  vocab.save(out_dir / "vocab.txt");
  return corpus.size();
}

void dump_alignments(AcousticModel& model, const MelStats& stats, const std::vector<Utterance>& corpus,
                     const fs::path& archive_path) {
  model->eval();
  torch::NoGradGuard guard;
  NamedArrays archive;
  const auto dtype = model->parameters().front().scalar_type();
  for (const auto& u : corpus) {
    auto batch = collate({Utterance{u.id, u.speaker_id, u.token_ids, normalize_mel(u.mel, stats)}}).to(dtype);
    auto enc = encode_batch(model, batch);
    auto energies = model->hier_encoder->aligner(enc.text_hidden, batch.token_mask, batch.mels, batch.mel_mask);
    auto log_soft = torch::log_softmax(energies, -1)[0];
    auto [hard, durations] = viterbi_align(log_soft);
    archive.arrays[u.id + "/soft"] = torch::exp(log_soft);
    archive.arrays[u.id + "/hard"] = hard;
    archive.arrays[u.id + "/durations"] = torch::tensor(durations, torch::kInt64);
  }
  archive.save(archive_path);
}

fs::path cmd_train(const TrainRequest& req) {
  auto config = RunConfig::load(req.config);
  if (req.steps) config.train.steps = *req.steps;
  if (req.seed) config.seed = *req.seed;
  if (req.corpus) config.corpus = req.corpus->string();
  if (req.out_dir) config.out_dir = req.out_dir->string();
  config.train.validate();
  if (config.corpus.empty()) throw ConfigError("corpus", "no corpus directory given");
  require_file(fs::path(config.corpus) / "metadata.txt", "corpus metadata");

  std::optional<Trainer> trainer;
  Vocabulary vocab = Vocabulary::default_characters();
  auto corpus = load_corpus(config.corpus, vocab, config.features);
  if (corpus.empty()) throw InputError("train: corpus is empty");
  int64_t remaining = config.train.steps;
  if (req.resume) {
    auto ckpt = Checkpoint::load(*req.resume);
    trainer.emplace(Trainer::from_checkpoint(ckpt));
    remaining = std::max<int64_t>(0, config.train.steps - trainer->step());
  } else {
    std::vector<MelSpectrogram> mels;
    for (const auto& u : corpus) mels.push_back(u.mel);
    trainer.emplace(config, vocab, MelStats::from_corpus(mels));
  }
  const fs::path out_dir = config.out_dir;
  fs::create_directories(out_dir);
  trainer->config().save(out_dir / "config.json");
  trainer->train_to_disk(corpus, remaining, out_dir);
  if (req.dump_alignments) dump_alignments(trainer->model(), trainer->stats(), corpus, *req.dump_alignments);
  return out_dir / "checkpoint.zsd";
}

fs::path cmd_finetune(const FinetuneRequest& req) {
  require_file(req.checkpoint, "checkpoint");
  require_file(req.corpus / "metadata.txt", "corpus metadata");
  if (req.out.empty()) throw InputError("finetune: --out is required");
  if (req.steps < 0) throw InputError("finetune: --steps must be >= 0");
  for (const auto& g : req.groups) canonical_group(g);
  auto ckpt = Checkpoint::load(req.checkpoint, std::nullopt, req.allow_mismatch);
  const auto features = ckpt.config().features;
  auto target = load_corpus(req.corpus, ckpt.vocab(), features);
  if (target.empty()) throw InputError("finetune: target corpus is empty");
  std::vector<Utterance> reg;
  if (req.regularization_corpus) {
    require_file(*req.regularization_corpus / "metadata.txt", "regularization corpus metadata");
    reg = load_corpus(*req.regularization_corpus, ckpt.vocab(), features);
  }
  if (req.seed) {
    auto cfg = ckpt.config();
    cfg.seed = *req.seed;
    ckpt.archive.strings["config"] = cfg.to_json().dump();
  }
  auto out = finetune(ckpt, target, req.groups, req.steps, reg.empty() ? nullptr : &reg);
  out.save(req.out);
  return req.out;
}

}  // namespace zsdiff
