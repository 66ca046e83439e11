#include "zsdiff/alignment.hpp"

#include <cmath>
#include <limits>

#include "zsdiff/error.hpp"
#include "zsdiff/log.hpp"

namespace zsdiff {
namespace {

// Finite stand-in for log(0) so that logaddexp stays differentiable on unreachable states.
constexpr double kLogZero = -1e30;

void check_feasible(const torch::Tensor& log_soft, const char* op) {
  if (log_soft.dim() != 2) throw InputError(std::string(op) + ": expected an [m, n] matrix");
  if (log_soft.size(0) < log_soft.size(1) || log_soft.size(1) < 1) {
    throw InputError(std::string(op) + ": infeasible alignment (m < n)");
  }
}

}  // namespace

torch::Tensor forward_sum_loss(const torch::Tensor& log_soft) {
  check_feasible(log_soft, "forward_sum_loss");
  const auto m = log_soft.size(0), n = log_soft.size(1);
  auto floor = torch::full({1}, kLogZero, log_soft.options());
  auto alpha = torch::cat({log_soft[0].narrow(0, 0, 1), floor.expand({n - 1})});
  for (int64_t j = 1; j < m; ++j) {
    auto advanced = torch::cat({floor, alpha.narrow(0, 0, n - 1)});
    alpha = log_soft[j] + torch::logaddexp(alpha, advanced);
  }
  return -alpha[n - 1];
}

std::pair<torch::Tensor, std::vector<int64_t>> viterbi_align(const torch::Tensor& log_soft) {
  check_feasible(log_soft, "viterbi_align");
  if (torch::isnan(log_soft).any().item<bool>()) throw InputError("viterbi_align: NaN in posterior");
  const auto m = log_soft.size(0), n = log_soft.size(1);
  auto lp = log_soft.detach().to(torch::kFloat64).contiguous();
  auto acc = lp.accessor<double, 2>();
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> score(static_cast<size_t>(m * n), neg_inf);
  std::vector<uint8_t> advanced(static_cast<size_t>(m * n), 0);
  auto at = [n](int64_t j, int64_t i) { return static_cast<size_t>(j * n + i); };
  score[at(0, 0)] = acc[0][0];
  for (int64_t j = 1; j < m; ++j) {
    // Token i is reachable at frame j only if i <= j and n-1-i <= m-1-j.
    const int64_t lo = std::max<int64_t>(0, n - (m - j));
    const int64_t hi = std::min<int64_t>(j, n - 1);
    for (int64_t i = lo; i <= hi; ++i) {
      const double stay = score[at(j - 1, i)];
      const double move = i > 0 ? score[at(j - 1, i - 1)] : neg_inf;
      if (move > stay) {
        score[at(j, i)] = move + acc[j][i];
        advanced[at(j, i)] = 1;
      } else {
        score[at(j, i)] = stay + acc[j][i];
      }
    }
  }
  auto hard = torch::zeros({m, n}, torch::kFloat64);
  auto hacc = hard.accessor<double, 2>();
  std::vector<int64_t> durations(static_cast<size_t>(n), 0);
  int64_t i = n - 1;
  for (int64_t j = m - 1; j >= 0; --j) {
    hacc[j][i] = 1.0;
    ++durations[static_cast<size_t>(i)];
    if (j > 0 && advanced[at(j, i)]) --i;
  }
  return {hard.to(log_soft.scalar_type()), durations};
}

torch::Tensor binarization_loss(const torch::Tensor& soft, const torch::Tensor& hard) {
  if (soft.sizes() != hard.sizes() || soft.dim() != 2) throw InputError("binarization_loss: shape mismatch");
  const auto m = soft.size(0);
  auto on_path = (soft * hard.to(soft.scalar_type())).sum(1);
  return -torch::log(on_path.clamp_min(1e-12)).sum() / static_cast<double>(m);
}

torch::Tensor length_regulate(const torch::Tensor& h, const std::vector<int64_t>& durations) {
  if (h.dim() != 2 || static_cast<size_t>(h.size(0)) != durations.size()) {
    throw InputError("length_regulate: need one duration per row");
  }
  std::vector<int64_t> clamped(durations);
  for (auto& d : clamped) {
    if (d < 1) {
      log::warn("length_regulate: duration ", d, " clamped to 1");
      d = 1;
    }
  }
  auto repeats = torch::tensor(clamped, torch::kInt64);
  return torch::repeat_interleave(h, repeats, 0);
}

std::vector<int64_t> durations_from_log(const torch::Tensor& log_durations, double pace) {
  auto values = (torch::exp(log_durations.detach().to(torch::kFloat64)) * pace).contiguous();
  std::vector<int64_t> out(static_cast<size_t>(values.numel()));
  auto* p = values.data_ptr<double>();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max<int64_t>(1, std::llround(p[i]));
  return out;
}

void validate_alignment(const AlignmentResult& r) {
  const auto m = r.hard.size(0), n = r.hard.size(1);
  if (r.soft.sizes() != r.hard.sizes()) throw InputError("alignment: soft/hard shape mismatch");
  if (static_cast<int64_t>(r.durations.size()) != n) throw InputError("alignment: durations length != n");
  auto row_sums = r.soft.to(torch::kFloat64).sum(1);
  if (!torch::allclose(row_sums, torch::ones_like(row_sums), 1e-5, 1e-5)) {
    throw InputError("alignment: soft rows do not sum to 1");
  }
  auto hard = r.hard.to(torch::kFloat64);
  if (!torch::equal(hard.sum(1), torch::ones({m}, torch::kFloat64))) {
    throw InputError("alignment: hard rows are not one-hot");
  }
  auto idx = hard.argmax(1).contiguous();
  auto* p = idx.data_ptr<int64_t>();
  if (p[0] != 0 || p[m - 1] != n - 1) throw InputError("alignment: path must start at token 0 and end at n-1");
  for (int64_t j = 1; j < m; ++j) {
    if (p[j] != p[j - 1] && p[j] != p[j - 1] + 1) throw InputError("alignment: non-monotonic step");
  }
  auto col = hard.sum(0).contiguous();
  int64_t total = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (static_cast<int64_t>(col[i].item<double>()) != r.durations[static_cast<size_t>(i)]) {
      throw InputError("alignment: durations disagree with hard path");
    }
    total += r.durations[static_cast<size_t>(i)];
  }
  if (total != m) throw InputError("alignment: durations do not sum to m");
}

}  // namespace zsdiff
