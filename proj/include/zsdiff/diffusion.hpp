#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

// Mean-reverting SDE around a data-driven prior mean mu:
//   dY = -1/2 beta(t) (Y - mu) dt + sqrt(beta(t)) dW,   beta(t) = beta0 + (beta1 - beta0) t / T

namespace zsdiff {

inline constexpr double kMinDiffusionTime = 1e-5;

struct NoiseSchedule {
  double beta0 = 0.05;
  double beta1 = 20.0;
  double horizon = 1.0;

  void validate() const;
  double beta(double t) const;
  /// B(t) = int_0^t beta(s) ds in closed form; InputError outside [0, T].
  double integral(double t) const;
  /// int_s^t beta
  double integral(double s, double t) const { return integral(t) - integral(s); }
  /// sigma_t^2 = 1 - exp(-B(t))
  double variance(double t) const;
};

/// Gaussian transition kernel p_0t(Y_t | Y_0) = N(gamma, sigma2 I).
struct KernelParams {
  torch::Tensor gamma;
  double sigma2 = 0.0;
};

KernelParams transition_kernel(const NoiseSchedule& schedule, const torch::Tensor& mu, const torch::Tensor& y0,
                               double t);

/// gamma + sqrt(sigma2) * eps
torch::Tensor sample_forward(const KernelParams& kernel, const torch::Tensor& eps);

/// Exact conditional score of the kernel at Y_t = gamma + sigma eps: -eps / sigma.
torch::Tensor kernel_score(const KernelParams& kernel, const torch::Tensor& eps);

/// Score of p_t when p_0 = N(a, v) elementwise: -(y - mean_t) / var_t with
/// mean_t = (1 - e^{-B/2}) mu + e^{-B/2} a and var_t = e^{-B} v + 1 - e^{-B}.
torch::Tensor analytic_gaussian_score(const torch::Tensor& y, double t, const torch::Tensor& mu, double data_mean,
                                      double data_var, const NoiseSchedule& schedule);
double analytic_gaussian_score(double y, double t, double mu, double data_mean, double data_var,
                               const NoiseSchedule& schedule);

/// Euler-Maruyama step of the reverse-time SDE from t to t - h:
///   Y + h [1/2 beta(t) (Y - mu) + beta(t) score] + sqrt(beta(t) h) z.  Pass no z for the drift-only variant.
torch::Tensor reverse_step_em(const torch::Tensor& y, double t, double h, const torch::Tensor& mu,
                              const torch::Tensor& score, const NoiseSchedule& schedule,
                              const std::optional<torch::Tensor>& z = std::nullopt);

/// Maximum-likelihood reverse step from t to t - h: the Gaussian posterior mean and variance of
/// Y_{t-h} given Y_t with Y_0 estimated from the score. `eps_posterior_var` is the average of
/// Var(eps | Y_t) over elements; with it the step is exact for Gaussian data, with 0 it treats the
/// score's estimate of Y_0 as certain. reverse_sample estimates it from the score.
torch::Tensor reverse_step_ml(const torch::Tensor& y, double t, double h, const torch::Tensor& mu,
                              const torch::Tensor& score, const NoiseSchedule& schedule,
                              const std::optional<torch::Tensor>& z = std::nullopt, double eps_posterior_var = 0.0);

enum class Solver { kEulerMaruyama, kMaximumLikelihood };
Solver parse_solver(const std::string& name);  // "em" | "ml"
std::string solver_name(Solver solver);

struct SamplerOptions {
  int n_steps = 100;
  Solver solver = Solver::kMaximumLikelihood;
  double temperature = 1.0;
  uint64_t seed = 0;
  /// false -> z = 0 in every step (drift only).
  bool stochastic = true;
  double t_min = kMinDiffusionTime;
};

/// score(Y_t, t) -> tensor shaped like Y_t
using ScoreFn = std::function<torch::Tensor(const torch::Tensor& y, double t)>;
/// Called after every step with (step index, time reached, state).
using TraceFn = std::function<void(int step, double t, const torch::Tensor& y)>;

/// Starts from Y_T ~ N(mu, I / temperature) and integrates the reverse SDE on a uniform grid from T down
/// to t_min. Each step queries `score` once. `mask` (broadcastable to mu), if given, zeroes padding.
torch::Tensor reverse_sample(const torch::Tensor& mu, const ScoreFn& score, const NoiseSchedule& schedule,
                             const SamplerOptions& options, const torch::Tensor& mask = {},
                             const TraceFn& trace = {});

/// Monte-Carlo diffusion loss given the network output at Y_t = gamma + sigma eps.
/// weighted: mean((out * sigma + eps)^2) (lambda = sigma^2); otherwise mean((out + eps / sigma)^2).
/// Averaged over real elements per example (mask [B, M] over axis 1), then over the batch.
torch::Tensor diffusion_loss_from_output(const torch::Tensor& output, const torch::Tensor& eps,
                                         const torch::Tensor& sigma, const torch::Tensor& mel_mask,
                                         bool weighted = true);

}  // namespace zsdiff
