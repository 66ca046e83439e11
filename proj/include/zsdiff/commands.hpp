#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "zsdiff/data.hpp"
#include "zsdiff/model.hpp"
#include "zsdiff/training.hpp"

// Entry points behind the command-line tool. Each throws InputError/ConfigError for usage
// problems (exit 2) and RuntimeError for failures (exit 1).

namespace zsdiff {

namespace fs = std::filesystem;

struct SynthesisRequest {
  std::string text;
  fs::path reference_wav;
  fs::path checkpoint;
  int n_steps = 100;
  std::string solver = "ml";
  double temperature = 1.0;
  double pace = 1.0;
  uint64_t seed = 0;
  fs::path output_wav;
  int gl_iters = 32;
  bool allow_mismatch = false;
  /// When set, Y_t snapshots every `trace_every` steps go to this archive.
  std::optional<fs::path> trace_archive;
  int trace_every = 10;

  void validate() const;
};

struct SynthesisOutcome {
  std::vector<int64_t> durations;
  int64_t frames = 0;
  size_t samples = 0;
  int score_evaluations = 0;
  fs::path mel_archive;
};

/// "<wav stem>.mel" next to the output wav.
fs::path mel_archive_path(const fs::path& wav);

SynthesisOutcome cmd_synthesize(const SynthesisRequest& request);

struct SecsRow {
  std::string target, reference, control;
  double same = 0.0, cross = 0.0;
};

struct SecsReport {
  std::vector<SecsRow> rows;
  double same_mean = 0.0, same_std = 0.0, cross_mean = 0.0, cross_std = 0.0;
  /// One line per pair plus two summary lines.
  std::string text() const;
};

struct SecsOptions {
  int n_pairs = 16;
  uint64_t seed = 0;
  SamplerOptions sampler;
};

/// For each sampled target utterance: synthesize its text from another utterance of the same
/// speaker, embed synthesis and ground truth with the style encoder, and compare; a ground-truth
/// utterance of another speaker is the control. Corpus is raw (unnormalized).
SecsReport eval_secs(AcousticModel& model, const MelStats& stats, const std::vector<Utterance>& corpus,
                     const SecsOptions& options);
SecsReport cmd_eval_secs(const fs::path& checkpoint, const fs::path& corpus_dir, const SecsOptions& options,
                         bool allow_mismatch = false);

void cmd_make_synthetic(int speakers, int utts, uint64_t seed, const fs::path& out);

/// Featurizes a wav corpus: out/mels/<id>.mel archives, out/stats.zsd, out/vocab.txt.
size_t cmd_prepare(const fs::path& corpus_dir, const fs::path& out_dir, const FeatureConfig& features = {});

struct TrainRequest {
  fs::path config;
  std::optional<int64_t> steps;
  std::optional<uint64_t> seed;
  std::optional<fs::path> corpus;
  std::optional<fs::path> out_dir;
  std::optional<fs::path> resume;
  std::optional<fs::path> dump_alignments;
};
/// Returns the final checkpoint path.
fs::path cmd_train(const TrainRequest& request);

struct FinetuneRequest {
  fs::path checkpoint;
  fs::path corpus;
  std::vector<std::string> groups;
  int64_t steps = 100;
  fs::path out;
  std::optional<fs::path> regularization_corpus;
  std::optional<uint64_t> seed;
  bool allow_mismatch = false;
};
fs::path cmd_finetune(const FinetuneRequest& request);

/// Soft and hard alignment matrices of every utterance, as "<id>/soft" and "<id>/hard".
void dump_alignments(AcousticModel& model, const MelStats& stats, const std::vector<Utterance>& corpus,
                     const fs::path& archive);

/// Splits "a,b,c" (empty string -> empty list).
std::vector<std::string> split_list(const std::string& text);

}  // namespace zsdiff
