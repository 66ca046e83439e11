#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

// Monotonic text-to-frame alignment over an [m, n] frame-by-token posterior.
// A path assigns every frame one token, starts at token 0, ends at token n-1
// and advances by 0 or 1 token per frame.

namespace zsdiff {

struct AlignmentResult {
  torch::Tensor soft;              // [m, n] row-stochastic
  torch::Tensor hard;              // [m, n] one-hot rows
  std::vector<int64_t> durations;  // length n, sums to m
};

/// -log of the total probability of all monotonic paths. Differentiable; log-space DP.
torch::Tensor forward_sum_loss(const torch::Tensor& log_soft);

/// Most probable monotonic path. On ties, backtracking takes the same-token predecessor.
/// Returns the [m, n] one-hot path (dtype of log_soft) and per-token frame counts.
std::pair<torch::Tensor, std::vector<int64_t>> viterbi_align(const torch::Tensor& log_soft);

/// -(1/m) sum_j log soft(j, hard_j).
torch::Tensor binarization_loss(const torch::Tensor& soft, const torch::Tensor& hard);

/// Repeats row i of h [n, d] durations[i] times. Durations below 1 are clamped to 1 with a warning.
torch::Tensor length_regulate(const torch::Tensor& h, const std::vector<int64_t>& durations);

/// round(exp(log_duration) * pace), clamped to >= 1.
std::vector<int64_t> durations_from_log(const torch::Tensor& log_durations, double pace = 1.0);

/// Checks the AlignmentResult invariants; throws InputError on violation.
void validate_alignment(const AlignmentResult& result);

}  // namespace zsdiff
