#include "zsdiff/data.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "zsdiff/error.hpp"
#include "zsdiff/log.hpp"

namespace zsdiff {
namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace

Batch Batch::example(int64_t i) const {
  const auto n = text_lengths.at(i);
  const auto m = mel_lengths.at(i);
  Batch b;
  b.tokens = tokens.narrow(0, i, 1).narrow(1, 0, n).contiguous();
  b.token_mask = token_mask.narrow(0, i, 1).narrow(1, 0, n).contiguous();
  b.mels = mels.narrow(0, i, 1).narrow(1, 0, m).contiguous();
  b.mel_mask = mel_mask.narrow(0, i, 1).narrow(1, 0, m).contiguous();
  b.speaker_ids = {speaker_ids.at(i)};
  b.text_lengths = {n};
  b.mel_lengths = {m};
  return b;
}

Batch Batch::to(torch::ScalarType dtype) const {
  Batch b = *this;
  b.mels = mels.to(dtype);
  return b;
}

std::vector<Utterance> load_corpus(const std::filesystem::path& root, const Vocabulary& vocab,
                                   const FeatureConfig& features) {
  const auto meta_path = root / "metadata.txt";
  std::ifstream meta(meta_path);
  if (!meta) throw RuntimeError("missing corpus metadata: " + meta_path.string());
  std::vector<Utterance> utts;
  std::string line;
  int line_no = 0;
  while (std::getline(meta, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, '|');
    if (fields.size() != 4) {
      log::warn(meta_path.string(), ":", line_no, ": expected id|speaker|transcript|wav, skipping");
      continue;
    }
    Utterance utt;
    utt.id = fields[0];
    utt.speaker_id = fields[1];
    try {
      utt.token_ids = tokenize(fields[2], vocab);
    } catch (const InputError& e) {
      log::warn("utterance ", utt.id, ": ", e.what(), ", skipping");
      continue;
    }
    Wave wave;
    try {
      wave = read_wav(root / fields[3]);
    } catch (const std::exception& e) {
      log::warn("utterance ", utt.id, ": ", e.what(), ", skipping");
      continue;
    }
    auto samples = resample_linear(wave.samples, wave.sample_rate_hz, features.sample_rate_hz);
    if (samples.empty()) {
      log::warn("utterance ", utt.id, ": empty audio, skipping");
      continue;
    }
    utt.mel = wave_to_mel(samples, features);
    if (utt.mel.frame_count() < static_cast<int64_t>(utt.token_ids.size())) {
      log::warn("utterance ", utt.id, ": ", utt.mel.frame_count(), " frames < ", utt.token_ids.size(),
                " tokens, dropping");
      continue;
    }
    utts.push_back(std::move(utt));
  }
  return utts;
}

SyntheticVoice synthetic_voice(int speaker_index) {
  const int k = speaker_index;
  return {80.0 * std::pow(2.0, 0.75 * k), -2.0 - 2.0 * (k % 3), 1.0 + 0.06 * (k % 4)};
}

std::vector<float> render_synthetic(const std::string& transcript, int speaker_index, uint64_t seed,
                                    const SyntheticCorpusOptions& options) {
  const auto& fc = options.features;
  const auto voice = synthetic_voice(speaker_index);
  const int seg = options.symbol_frames * fc.hop_length;
  const auto symbols = static_cast<int>(transcript.size());
  const int total = symbols * seg - 1;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  std::normal_distribution<double> noise(0.0, 1e-3);
  const double f0 = voice.f0_hz * (1.0 + jitter(rng));
  const double nyquist = 0.47 * fc.sample_rate_hz;
  const int harmonics = static_cast<int>(nyquist / f0);
  const auto alphabet_size = static_cast<double>(std::max<size_t>(options.alphabet.size(), 2));

  std::vector<double> phase(harmonics, 0.0);
  std::vector<float> wave(total);
  for (int s = 0; s < symbols; ++s) {
    auto pos = options.alphabet.find(transcript[s]);
    const double j = pos == std::string::npos ? 0.0 : static_cast<double>(pos);
    const double formant = voice.formant_scale * 300.0 * std::pow(3500.0 / 300.0, j / (alphabet_size - 1.0));
    const double bandwidth = 150.0 + 0.15 * formant;
    std::vector<double> amp(harmonics);
    double norm = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      const double f = (h + 1) * f0;
      const double peak = std::exp(-0.5 * std::pow((f - formant) / bandwidth, 2.0));
      const double tilt = std::pow(10.0, voice.tilt_db_per_octave * std::log2(h + 1.0) / 20.0);
      amp[h] = tilt * (0.15 + peak);
      norm += amp[h];
    }
    for (auto& a : amp) a *= 0.6 / norm;
    for (int i = 0; i < seg && s * seg + i < total; ++i) {
      double v = 0.0;
      for (int h = 0; h < harmonics; ++h) {
        phase[h] += 2.0 * std::numbers::pi * (h + 1) * f0 / fc.sample_rate_hz;
        v += amp[h] * std::sin(phase[h]);
      }
      wave[s * seg + i] = static_cast<float>(std::clamp(v + noise(rng), -1.0, 1.0));
    }
  }
  return wave;
}

void make_synthetic_corpus(int n_speakers, int utts_per_speaker, uint64_t seed,
                           const std::filesystem::path& out, const SyntheticCorpusOptions& options) {
  if (n_speakers < 2) throw InputError("make_synthetic_corpus: need at least 2 speakers");
  if (utts_per_speaker < 1) throw InputError("make_synthetic_corpus: need at least 1 utterance per speaker");
  if (options.alphabet.empty() || options.min_symbols < 1 || options.max_symbols < options.min_symbols) {
    throw InputError("make_synthetic_corpus: bad symbol options");
  }
  std::filesystem::create_directories(out / "wavs");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> length(options.min_symbols, options.max_symbols);
  std::uniform_int_distribution<size_t> pick(0, options.alphabet.size() - 1);
  std::ofstream meta(out / "metadata.txt");
  if (!meta) throw RuntimeError("cannot write " + (out / "metadata.txt").string());
  for (int k = 0; k < n_speakers; ++k) {
    const int speaker = options.first_speaker + k;
    std::ostringstream spk;
    spk << "spk" << std::setw(2) << std::setfill('0') << speaker;
    for (int u = 0; u < utts_per_speaker; ++u) {
      std::string transcript;
      const int len = length(rng);
      for (int i = 0; i < len; ++i) transcript += options.alphabet[pick(rng)];
      std::ostringstream id;
      id << spk.str() << "_" << std::setw(3) << std::setfill('0') << u;
      const auto rel = std::filesystem::path("wavs") / (id.str() + ".wav");
      write_wav(out / rel, render_synthetic(transcript, speaker, rng(), options), options.features.sample_rate_hz);
      meta << id.str() << '|' << spk.str() << '|' << transcript << '|' << rel.generic_string() << '\n';
    }
  }
}

Batch collate(const std::vector<Utterance>& utts) {
  if (utts.empty()) throw InputError("collate: empty utterance list");
  const auto batch = static_cast<int64_t>(utts.size());
  int64_t max_n = 0, max_m = 0;
  const int64_t n_mels = utts.front().mel.n_mels();
  for (const auto& u : utts) {
    max_n = std::max<int64_t>(max_n, static_cast<int64_t>(u.token_ids.size()));
    max_m = std::max(max_m, u.mel.frame_count());
    if (u.mel.n_mels() != n_mels) throw InputError("collate: inconsistent mel bin counts");
  }
  Batch b;
  b.tokens = torch::zeros({batch, max_n}, torch::kInt64);
  b.token_mask = torch::zeros({batch, max_n}, torch::kBool);
  b.mels = torch::zeros({batch, max_m, n_mels}, utts.front().mel.frames.dtype());
  b.mel_mask = torch::zeros({batch, max_m}, torch::kBool);
  for (int64_t i = 0; i < batch; ++i) {
    const auto& u = utts[i];
    const auto n = static_cast<int64_t>(u.token_ids.size());
    const auto m = u.mel.frame_count();
    b.tokens[i].narrow(0, 0, n).copy_(torch::tensor(u.token_ids, torch::kInt64));
    b.token_mask[i].narrow(0, 0, n).fill_(true);
    b.mels[i].narrow(0, 0, m).copy_(u.mel.frames);
    b.mel_mask[i].narrow(0, 0, m).fill_(true);
    b.speaker_ids.push_back(u.speaker_id);
    b.text_lengths.push_back(n);
    b.mel_lengths.push_back(m);
  }
  return b;
}

}  // namespace zsdiff
