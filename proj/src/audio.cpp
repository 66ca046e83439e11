#include "zsdiff/audio.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "zsdiff/archive.hpp"
#include "zsdiff/error.hpp"

namespace zsdiff {
namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

torch::Tensor hann(const FeatureConfig& config, torch::ScalarType dtype) {
  return torch::hann_window(config.win_length, torch::TensorOptions().dtype(dtype));
}

torch::Tensor complex_stft(const torch::Tensor& wave, const FeatureConfig& config) {
  return torch::stft(wave, config.n_fft, config.hop_length, config.win_length,
                     hann(config, wave.scalar_type()), /*center=*/true, "constant",
                     /*normalized=*/false, /*onesided=*/true, /*return_complex=*/true);
}

torch::Tensor inverse_stft(const torch::Tensor& spec, const FeatureConfig& config, int64_t length) {
  auto dtype = spec.scalar_type() == torch::kComplexDouble ? torch::kFloat64 : torch::kFloat32;
  return torch::istft(spec, config.n_fft, config.hop_length, config.win_length, hann(config, dtype),
                      /*center=*/true, /*normalized=*/false, /*onesided=*/true, length);
}

void check_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) throw InputError(std::string(what) + " contains non-finite values");
}

}  // namespace

void FeatureConfig::validate() const {
  if (sample_rate_hz <= 0) throw InputError("sample_rate_hz must be positive");
  if (n_mels <= 0) throw InputError("n_mels must be positive");
  if (!(hop_length > 0 && hop_length <= win_length && win_length <= n_fft)) {
    throw InputError("require 0 < hop_length <= win_length <= n_fft");
  }
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
    throw InputError("require 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (!(log_floor > 0.0)) throw InputError("log_floor must be positive");
}

std::string FeatureConfig::hash() const {
  std::ostringstream canon;
  canon << std::setprecision(17) << sample_rate_hz << '|' << n_fft << '|' << win_length << '|'
        << hop_length << '|' << n_mels << '|' << fmin_hz << '|' << fmax_hz << '|' << log_floor;
  // FNV-1a 64
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canon.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << "fc-" << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

MelStats MelStats::identity(int n_mels) {
  return {torch::zeros({n_mels}), torch::ones({n_mels})};
}

MelStats MelStats::from_corpus(const std::vector<MelSpectrogram>& mels) {
  if (mels.empty()) throw InputError("cannot compute mel statistics of an empty corpus");
  std::vector<torch::Tensor> all;
  all.reserve(mels.size());
  for (const auto& mel : mels) all.push_back(mel.frames.to(torch::kFloat64));
  auto stacked = torch::cat(all, 0);
  auto mean = stacked.mean(0);
  auto std = stacked.std(0, /*unbiased=*/false).clamp_min(1e-4);
  return {mean.to(torch::kFloat32), std.to(torch::kFloat32)};
}

torch::Tensor mel_filterbank(const FeatureConfig& config) {
  config.validate();
  const int n_freqs = config.n_fft / 2 + 1;
  std::vector<double> mel_points(config.n_mels + 2);
  const double mel_lo = hz_to_mel(config.fmin_hz);
  const double mel_hi = hz_to_mel(config.fmax_hz);
  for (int i = 0; i < config.n_mels + 2; ++i) {
    mel_points[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (config.n_mels + 1));
  }
  auto fb = torch::zeros({config.n_mels, n_freqs}, torch::kFloat64);
  auto acc = fb.accessor<double, 2>();
  for (int b = 0; b < config.n_mels; ++b) {
    const double lo = mel_points[b], center = mel_points[b + 1], hi = mel_points[b + 2];
    const double norm = 2.0 / (hi - lo);
    for (int k = 0; k < n_freqs; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate_hz / config.n_fft;
      double w = 0.0;
      if (f > lo && f <= center) w = (f - lo) / (center - lo);
      else if (f > center && f < hi) w = (hi - f) / (hi - center);
      acc[b][k] = w * norm;
    }
  }
  return fb.to(torch::kFloat32);
}

torch::Tensor stft_magnitude(const torch::Tensor& wave, const FeatureConfig& config) {
  return complex_stft(wave, config).abs().transpose(0, 1).contiguous();
}

MelSpectrogram wave_to_mel(const std::vector<float>& wave, const FeatureConfig& config) {
  auto tensor = torch::from_blob(const_cast<float*>(wave.data()), {static_cast<int64_t>(wave.size())},
                                 torch::kFloat32)
                    .clone();
  return wave_to_mel(tensor, config);
}

MelSpectrogram wave_to_mel(const torch::Tensor& wave, const FeatureConfig& config) {
  config.validate();
  if (wave.dim() != 1 || wave.numel() == 0) throw InputError("wave_to_mel: empty or non-1-D wave");
  check_finite(wave, "wave");
  auto mag = stft_magnitude(wave.to(torch::kFloat32), config);  // [m, F]
  auto mel = torch::matmul(mag, mel_filterbank(config).transpose(0, 1));
  auto logmel = torch::log(torch::clamp_min(mel, config.log_floor));
  return {logmel.contiguous(), config.hash()};
}

torch::Tensor griffin_lim(const torch::Tensor& magnitude, const FeatureConfig& config, int gl_iters,
                          uint64_t seed) {
  if (gl_iters < 1) throw InputError("gl_iters must be >= 1");
  auto target = magnitude.to(torch::kFloat64).transpose(0, 1).contiguous();  // [F, m]
  const int64_t frames = target.size(1);
  const int64_t length = (frames - 1) * config.hop_length;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto phase = torch::rand(target.sizes(), gen, torch::kFloat64) * (2.0 * std::numbers::pi);
  auto angles = torch::polar(torch::ones_like(phase), phase);
  torch::Tensor wave;
  for (int it = 0; it < gl_iters; ++it) {
    wave = inverse_stft(target * angles, config, length);
    auto rebuilt = complex_stft(wave, config);
    angles = rebuilt / rebuilt.abs().clamp_min(1e-16);
  }
  wave = inverse_stft(target * angles, config, length);
  return wave.to(torch::kFloat32);
}

std::vector<float> mel_to_wave(const MelSpectrogram& mel, const FeatureConfig& config, int gl_iters,
                               uint64_t seed) {
  if (gl_iters < 1) throw InputError("gl_iters must be >= 1");
  check_finite(mel.frames, "mel");
  auto fb = mel_filterbank(config).to(torch::kFloat64);
  auto inv = torch::linalg_pinv(fb);  // [F, n_mels]
  auto linear = torch::matmul(torch::exp(mel.frames.to(torch::kFloat64)), inv.transpose(0, 1)).clamp_min(0.0);
  auto wave = griffin_lim(linear, config, gl_iters, seed).contiguous();
  return {wave.data_ptr<float>(), wave.data_ptr<float>() + wave.numel()};
}

double spectral_convergence(const torch::Tensor& wave, const torch::Tensor& target_magnitude,
                            const FeatureConfig& config) {
  auto mag = stft_magnitude(wave.to(torch::kFloat64), config);
  auto target = target_magnitude.to(torch::kFloat64);
  const int64_t frames = std::min(mag.size(0), target.size(0));
  mag = mag.narrow(0, 0, frames);
  target = target.narrow(0, 0, frames);
  return ((mag - target).norm() / target.norm().clamp_min(1e-300)).item<double>();
}

MelSpectrogram normalize_mel(const MelSpectrogram& mel, const MelStats& stats) {
  if ((stats.std <= 0).any().item<bool>()) throw InputError("normalize_mel: std must be > 0");
  return {(mel.frames - stats.mean.to(mel.frames.dtype())) / stats.std.to(mel.frames.dtype()), mel.config_hash};
}

MelSpectrogram denormalize_mel(const MelSpectrogram& mel, const MelStats& stats) {
  if ((stats.std <= 0).any().item<bool>()) throw InputError("denormalize_mel: std must be > 0");
  return {mel.frames * stats.std.to(mel.frames.dtype()) + stats.mean.to(mel.frames.dtype()), mel.config_hash};
}

void save_mel(const std::filesystem::path& path, const MelSpectrogram& mel) {
  NamedArrays archive;
  archive.arrays["mel"] = mel.frames;
  archive.strings["config_hash"] = mel.config_hash;
  archive.save(path);
}

MelSpectrogram load_mel(const std::filesystem::path& path) {
  auto archive = NamedArrays::load(path);
  return {archive.array("mel"), archive.string("config_hash")};
}

// ---- WAV ----------------------------------------------------------------

namespace {

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

Wave read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open wav " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw RuntimeError("not a RIFF/WAVE file: " + path.string());
  }
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const char* data = nullptr;
  uint32_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* chunk = bytes.data() + pos;
    auto size = read_le<uint32_t>(chunk + 4);
    const char* body = chunk + 8;
    if (pos + 8 + size > bytes.size()) size = static_cast<uint32_t>(bytes.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      format = read_le<uint16_t>(body);
      channels = read_le<uint16_t>(body + 2);
      rate = read_le<uint32_t>(body + 4);
      bits = read_le<uint16_t>(body + 14);
      if (format == 0xFFFE && size >= 26) format = read_le<uint16_t>(body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1u);
  }
  if (data == nullptr || channels == 0) throw RuntimeError("wav missing fmt/data chunk: " + path.string());
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) throw RuntimeError("unsupported wav encoding (need PCM16 or float32): " + path.string());
  const size_t frame_bytes = static_cast<size_t>(bits / 8) * channels;
  const size_t n = data_size / frame_bytes;
  Wave wave;
  wave.sample_rate_hz = static_cast<int>(rate);
  wave.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      const char* p = data + i * frame_bytes + c * (bits / 8);
      acc += pcm16 ? read_le<int16_t>(p) / 32768.0 : read_le<float>(p);
    }
    wave.samples[i] = static_cast<float>(acc / channels);
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate_hz) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write wav " + path.string());
  auto put32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * sizeof(float));
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(3);  // IEEE float
  put16(1);
  put32(static_cast<uint32_t>(sample_rate_hz));
  put32(static_cast<uint32_t>(sample_rate_hz) * 4);
  put16(4);
  put16(32);
  out.write("data", 4);
  put32(data_bytes);
  out.write(reinterpret_cast<const char*>(samples.data()), data_bytes);
  if (!out) throw RuntimeError("short write on " + path.string());
}

std::vector<float> resample_linear(const std::vector<float>& samples, int from_hz, int to_hz) {
  if (from_hz == to_hz || samples.empty()) return samples;
  const double ratio = static_cast<double>(from_hz) / to_hz;
  const auto n_out = static_cast<size_t>(std::floor((samples.size() - 1) / ratio)) + 1;
  std::vector<float> out(n_out);
  for (size_t i = 0; i < n_out; ++i) {
    const double x = i * ratio;
    const auto j = static_cast<size_t>(x);
    const double frac = x - j;
    const float a = samples[j];
    const float b = j + 1 < samples.size() ? samples[j + 1] : a;
    out[i] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

}  // namespace zsdiff
