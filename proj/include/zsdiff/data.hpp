#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zsdiff/audio.hpp"
#include "zsdiff/text.hpp"

namespace zsdiff {

struct Utterance {
  std::string id;
  std::string speaker_id;
  std::vector<int64_t> token_ids;  // n >= 1
  MelSpectrogram mel;              // m >= n
};

/// Padded minibatch. Masks are true on real positions.
struct Batch {
  torch::Tensor tokens;      // [B, N] int64, padded with Vocabulary::kPadId
  torch::Tensor token_mask;  // [B, N] bool
  torch::Tensor mels;        // [B, M, n_mels], zero-padded
  torch::Tensor mel_mask;    // [B, M] bool
  std::vector<std::string> speaker_ids;
  std::vector<int64_t> text_lengths;
  std::vector<int64_t> mel_lengths;

  int64_t size() const { return static_cast<int64_t>(speaker_ids.size()); }
  /// Unpadded slice of example i as a batch of one.
  Batch example(int64_t i) const;
  Batch to(torch::ScalarType dtype) const;
};

/// Reads `root/metadata.txt` (`id|speaker|transcript|relative_wav_path` per line).
/// Unreadable wavs and utterances with fewer frames than tokens are skipped with a warning.
std::vector<Utterance> load_corpus(const std::filesystem::path& root, const Vocabulary& vocab,
                                   const FeatureConfig& features = {});

struct SyntheticCorpusOptions {
  int symbol_frames = 8;
  int min_symbols = 4;
  int max_symbols = 7;
  std::string alphabet = "abcdefgh";
  /// Index of the first generated speaker; speaker k always gets the same voice.
  int first_speaker = 0;
  FeatureConfig features;
};

/// Voice parameters of synthetic speaker k.
struct SyntheticVoice {
  double f0_hz;
  double tilt_db_per_octave;
  double formant_scale;
};
SyntheticVoice synthetic_voice(int speaker_index);

/// Renders `transcript` for speaker k: each symbol a fixed-length harmonic segment
/// with a symbol-specific formant. Length = symbols * frames * hop - 1 samples, so the
/// centered mel has exactly symbols * frames rows.
std::vector<float> render_synthetic(const std::string& transcript, int speaker_index, uint64_t seed,
                                    const SyntheticCorpusOptions& options = {});

/// Writes metadata.txt + wavs/ under `out`. Deterministic given seed.
void make_synthetic_corpus(int n_speakers, int utts_per_speaker, uint64_t seed,
                           const std::filesystem::path& out, const SyntheticCorpusOptions& options = {});

/// Pads to the longest text and mel in the list.
Batch collate(const std::vector<Utterance>& utts);

}  // namespace zsdiff
