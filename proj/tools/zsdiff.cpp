// Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <CLI11.hpp>

#include <iostream>

#include "zsdiff/commands.hpp"
#include "zsdiff/error.hpp"
#include "zsdiff/log.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace zsdiff;
  CLI::App app{"Zero-shot style-conditioned diffusion TTS (desk scale)"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  // make-synthetic
  int speakers = 4, utts = 8;
  uint64_t seed = 0;
  std::string out;
  auto* make = app.add_subcommand("make-synthetic", "write a synthetic multi-speaker corpus");
  make->add_option("--speakers", speakers, "number of speakers")->default_val(4);
  make->add_option("--utts", utts, "utterances per speaker")->default_val(8);
  make->add_option("--seed", seed, "random seed")->default_val(0);
  make->add_option("--out", out, "output directory")->required();

  // prepare
  std::string corpus;
  auto* prepare = app.add_subcommand("prepare", "featurize a wav corpus into mel archives");
  prepare->add_option("--corpus", corpus, "corpus directory (metadata.txt + wavs/)")->required();
  prepare->add_option("--out", out, "output directory")->required();

  // train
  TrainRequest train_req;
  std::string config_path;
  int64_t steps = 0;
  std::string resume, dump;
  auto* train = app.add_subcommand("train", "train from a config file");
  train->add_option("--config", config_path, "JSON run config")->required();
  auto* steps_opt = train->add_option("--steps", steps, "override train.steps");
  auto* train_seed = train->add_option("--seed", seed, "override seed");
  auto* train_corpus = train->add_option("--corpus", corpus, "override corpus directory");
  auto* train_out = train->add_option("--out", out, "override output directory");
  train->add_option("--resume", resume, "resume from checkpoint");
  train->add_option("--dump-alignments", dump, "write soft/hard alignments archive after training");

  // finetune
  FinetuneRequest ft_req;
  std::string checkpoint, groups, reg_corpus;
  auto* finetune_cmd = app.add_subcommand("finetune", "update selected parameter groups on a target corpus");
  finetune_cmd->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  finetune_cmd->add_option("--corpus", corpus, "target corpus directory")->required();
  finetune_cmd->add_option("--groups", groups, "comma-separated groups to update (e.g. sae,diffusion)");
  finetune_cmd->add_option("--steps", ft_req.steps, "optimizer steps")->default_val(100);
  finetune_cmd->add_option("--out", out, "output checkpoint")->required();
  finetune_cmd->add_option("--reg-corpus", reg_corpus, "training corpus mixed in for regularization");
  auto* ft_seed = finetune_cmd->add_option("--seed", seed, "override seed");
  finetune_cmd->add_flag("--allow-mismatch", ft_req.allow_mismatch, "load despite version/config mismatch");

  // synth
  SynthesisRequest syn;
  std::string trace;
  auto* synth = app.add_subcommand("synth", "zero-shot synthesis from text and a reference wav");
  synth->add_option("--text", syn.text, "input text")->required();
  synth->add_option("--reference", syn.reference_wav, "reference speech wav")->required();
  synth->add_option("--checkpoint", syn.checkpoint, "model checkpoint")->required();
  synth->add_option("--n-steps", syn.n_steps, "denoising steps")->default_val(100);
  synth->add_option("--solver", syn.solver, "em | ml")->default_val("ml");
  synth->add_option("--temperature", syn.temperature, "prior temperature")->default_val(1.0);
  synth->add_option("--pace", syn.pace, "duration multiplier")->default_val(1.0);
  synth->add_option("--seed", syn.seed, "random seed")->default_val(0);
  synth->add_option("--out", syn.output_wav, "output wav")->required();
  synth->add_option("--gl-iters", syn.gl_iters, "Griffin-Lim iterations")->default_val(32);
  synth->add_option("--trace", trace, "dump sampler snapshots to this archive");
  synth->add_option("--trace-every", syn.trace_every, "snapshot interval")->default_val(10);
  synth->add_flag("--allow-mismatch", syn.allow_mismatch, "load despite version/config mismatch");

  // eval-secs
  SecsOptions secs;
  std::string solver = "ml";
  bool secs_mismatch = false;
  auto* eval = app.add_subcommand("eval-secs", "speaker-embedding cosine similarity report");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--corpus", corpus, "evaluation corpus directory")->required();
  eval->add_option("--n-pairs", secs.n_pairs, "number of synthesized pairs")->default_val(16);
  eval->add_option("--seed", secs.seed, "random seed")->default_val(0);
  eval->add_option("--n-steps", secs.sampler.n_steps, "denoising steps")->default_val(100);
  eval->add_option("--solver", solver, "em | ml")->default_val("ml");
  eval->add_option("--temperature", secs.sampler.temperature, "prior temperature")->default_val(1.0);
  eval->add_flag("--allow-mismatch", secs_mismatch, "load despite version/config mismatch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (verbose) log::set_level(log::Level::kDebug);

  try {
    if (*make) {
      cmd_make_synthetic(speakers, utts, seed, out);
    } else if (*prepare) {
      const auto n = cmd_prepare(corpus, out);
      std::cout << "prepared " << n << " utterances into " << out << '\n';
    } else if (*train) {
      train_req.config = config_path;
      if (*steps_opt) train_req.steps = steps;
      if (*train_seed) train_req.seed = seed;
      if (*train_corpus) train_req.corpus = corpus;
      if (*train_out) train_req.out_dir = out;
      if (!resume.empty()) train_req.resume = resume;
      if (!dump.empty()) train_req.dump_alignments = dump;
      std::cout << cmd_train(train_req).string() << '\n';
    } else if (*finetune_cmd) {
      ft_req.checkpoint = checkpoint;
      ft_req.corpus = corpus;
      ft_req.groups = split_list(groups);
      ft_req.out = out;
      if (!reg_corpus.empty()) ft_req.regularization_corpus = reg_corpus;
      if (*ft_seed) ft_req.seed = seed;
      std::cout << cmd_finetune(ft_req).string() << '\n';
    } else if (*synth) {
      if (!trace.empty()) syn.trace_archive = trace;
      auto outcome = cmd_synthesize(syn);
      int64_t total = 0;
      for (auto d : outcome.durations) total += d;
      std::cout << "frames=" << outcome.frames << " samples=" << outcome.samples << " duration_sum=" << total
                << " mel=" << outcome.mel_archive.string() << '\n';
    } else if (*eval) {
      secs.sampler.solver = parse_solver(solver);
      std::cout << cmd_eval_secs(checkpoint, corpus, secs, secs_mismatch).text();
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error at '" << e.key() << "': " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
