#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace zsdiff {

/// STFT and mel-filterbank settings. Defaults: 16 kHz, 12.5 ms hop, 80 bins.
struct FeatureConfig {
  int sample_rate_hz = 16000;
  int n_fft = 1024;
  int win_length = 800;
  int hop_length = 200;
  int n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-5;

  /// Throws InputError when the invariants (hop <= win <= n_fft, fmin < fmax <= sr/2) fail.
  void validate() const;
  /// Stable identifier of the field values, stored alongside every mel.
  std::string hash() const;
};

/// Log-mel amplitude matrix, one row per frame.
struct MelSpectrogram {
  torch::Tensor frames;  // [m, n_mels], float32 unless stated otherwise
  std::string config_hash;

  int64_t frame_count() const { return frames.size(0); }
  int64_t n_mels() const { return frames.size(1); }
};

/// Per-bin standardization statistics.
struct MelStats {
  torch::Tensor mean;  // [n_mels]
  torch::Tensor std;   // [n_mels]

  static MelStats identity(int n_mels);
  /// Per-bin mean/std over every frame of every mel.
  static MelStats from_corpus(const std::vector<MelSpectrogram>& mels);
};

/// [n_mels, n_fft/2+1] Slaney-normalized mel filterbank on the HTK mel scale.
torch::Tensor mel_filterbank(const FeatureConfig& config);

/// Centered STFT magnitude, [frames, n_fft/2+1]. Zero-padded at both ends.
torch::Tensor stft_magnitude(const torch::Tensor& wave, const FeatureConfig& config);

/// m = floor(len / hop) + 1 frames of log(max(mel, log_floor)).
MelSpectrogram wave_to_mel(const std::vector<float>& wave, const FeatureConfig& config);
MelSpectrogram wave_to_mel(const torch::Tensor& wave, const FeatureConfig& config);

/// Griffin-Lim reconstruction from a (denormalized) log-mel. The phase init is seeded.
std::vector<float> mel_to_wave(const MelSpectrogram& mel, const FeatureConfig& config, int gl_iters,
                               uint64_t seed = 0);

/// || |STFT(wave)| - target ||_F / ||target||_F
double spectral_convergence(const torch::Tensor& wave, const torch::Tensor& target_magnitude,
                            const FeatureConfig& config);

/// Griffin-Lim against an explicit linear magnitude [frames, n_fft/2+1].
torch::Tensor griffin_lim(const torch::Tensor& magnitude, const FeatureConfig& config, int gl_iters,
                          uint64_t seed = 0);

MelSpectrogram normalize_mel(const MelSpectrogram& mel, const MelStats& stats);
MelSpectrogram denormalize_mel(const MelSpectrogram& mel, const MelStats& stats);

/// Mel archive: keys "mel" and "config_hash".
void save_mel(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::filesystem::path& path);

// ---- WAV I/O ------------------------------------------------------------

struct Wave {
  std::vector<float> samples;  // mono, [-1, 1]
  int sample_rate_hz = 16000;
};

/// PCM16 or float32 WAV; multi-channel input is averaged down to mono.
Wave read_wav(const std::filesystem::path& path);
/// Writes mono float32 WAV.
void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate_hz);
/// Linear-interpolation resampler.
std::vector<float> resample_linear(const std::vector<float>& samples, int from_hz, int to_hz);

}  // namespace zsdiff
