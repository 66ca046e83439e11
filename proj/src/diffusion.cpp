#include "zsdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "zsdiff/error.hpp"

namespace zsdiff {

void NoiseSchedule::validate() const {
  if (!(beta0 > 0.0 && beta0 < beta1)) throw InputError("noise schedule needs 0 < beta0 < beta1");
  if (!(horizon > 0.0)) throw InputError("noise schedule horizon must be positive");
}

double NoiseSchedule::beta(double t) const { return beta0 + (beta1 - beta0) * t / horizon; }

double NoiseSchedule::integral(double t) const {
  if (t < 0.0 || t > horizon) throw InputError("beta_integral: t outside [0, T]");
  return beta0 * t + (beta1 - beta0) * t * t / (2.0 * horizon);
}

double NoiseSchedule::variance(double t) const { return -std::expm1(-integral(t)); }

KernelParams transition_kernel(const NoiseSchedule& schedule, const torch::Tensor& mu, const torch::Tensor& y0,
                               double t) {
  if (mu.sizes() != y0.sizes()) throw InputError("transition_kernel: mu and Y0 shapes differ");
  const double b = schedule.integral(t);
  const double decay = std::exp(-0.5 * b);
  return {(1.0 - decay) * mu + decay * y0, -std::expm1(-b)};
}

torch::Tensor sample_forward(const KernelParams& kernel, const torch::Tensor& eps) {
  if (kernel.sigma2 == 0.0) return kernel.gamma;
  return kernel.gamma + std::sqrt(kernel.sigma2) * eps;
}

torch::Tensor kernel_score(const KernelParams& kernel, const torch::Tensor& eps) {
  if (kernel.sigma2 <= 0.0) throw InputError("kernel_score: degenerate kernel (sigma2 = 0)");
  return -eps / std::sqrt(kernel.sigma2);
}

torch::Tensor analytic_gaussian_score(const torch::Tensor& y, double t, const torch::Tensor& mu, double a, double v,
                                      const NoiseSchedule& schedule) {
  if (!(v > 0.0)) throw InputError("analytic_gaussian_score: data variance must be positive");
  const double b = schedule.integral(t);
  const double decay = std::exp(-0.5 * b);
  const double var_t = std::exp(-b) * v - std::expm1(-b);
  return -(y - ((1.0 - decay) * mu + decay * a)) / var_t;
}

double analytic_gaussian_score(double y, double t, double mu, double a, double v, const NoiseSchedule& schedule) {
  if (!(v > 0.0)) throw InputError("analytic_gaussian_score: data variance must be positive");
  const double b = schedule.integral(t);
  const double decay = std::exp(-0.5 * b);
  const double var_t = std::exp(-b) * v - std::expm1(-b);
  return -(y - ((1.0 - decay) * mu + decay * a)) / var_t;
}

namespace {

void check_step(double t, double h) {
  if (!(h > 0.0)) throw InputError("reverse step: h must be positive");
  if (h > t * (1.0 + 1e-12)) throw InputError("reverse step: h > t");
}

}  // namespace

torch::Tensor reverse_step_em(const torch::Tensor& y, double t, double h, const torch::Tensor& mu,
                              const torch::Tensor& score, const NoiseSchedule& schedule,
                              const std::optional<torch::Tensor>& z) {
  check_step(t, h);
  const double beta = schedule.beta(t);
  auto next = y + h * (0.5 * beta * (y - mu) + beta * score);
  if (z) next = next + std::sqrt(beta * h) * (*z);
  return next;
}

torch::Tensor reverse_step_ml(const torch::Tensor& y, double t, double h, const torch::Tensor& mu,
                              const torch::Tensor& score, const NoiseSchedule& schedule,
                              const std::optional<torch::Tensor>& z, double eps_posterior_var) {
  check_step(t, h);
  const double s = std::max(t - h, 0.0);
  // decay(a, b, p) = exp(-p/2 int_a^b beta)
  auto decay = [&](double a, double b, double p) { return std::exp(-0.5 * p * schedule.integral(a, b)); };
  const double var_t = 1.0 - decay(0.0, t, 2.0);
  const double var_s = 1.0 - decay(0.0, s, 2.0);
  const double var_st = 1.0 - decay(s, t, 2.0);
  // Y_{s} mean = c_y * (Y_t - mu) + c_score * score + mu
  const double c_y = decay(s, t, 1.0) * var_s / var_t + decay(0.0, s, 1.0) * var_st / (var_t * decay(0.0, t, 1.0));
  const double c_score = decay(0.0, s, 1.0) * var_st / decay(0.0, t, 1.0);
  auto next = mu + c_y * (y - mu) + c_score * score;
  // Bridge variance given Y_0, plus the spread of Y_0 itself:
  // (d(0,s) var_st / var_t)^2 Var(Y_0 | Y_t) with Var(Y_0 | Y_t) = var_t Var(eps | Y_t) / d(0,t)^2.
  const double d_st = decay(s, t, 1.0);
  const double var = var_s * var_st / var_t + var_st * var_st * eps_posterior_var / (d_st * d_st * var_t);
  if (z) next = next + std::sqrt(std::max(var, 0.0)) * (*z);
  return next;
}

Solver parse_solver(const std::string& name) {
  if (name == "em") return Solver::kEulerMaruyama;
  if (name == "ml") return Solver::kMaximumLikelihood;
  throw InputError("unknown solver '" + name + "' (expected em or ml)");
}

std::string solver_name(Solver solver) { return solver == Solver::kEulerMaruyama ? "em" : "ml"; }

torch::Tensor reverse_sample(const torch::Tensor& mu, const ScoreFn& score, const NoiseSchedule& schedule,
                             const SamplerOptions& options, const torch::Tensor& mask, const TraceFn& trace) {
  schedule.validate();
  if (options.n_steps < 1) throw InputError("reverse_sample: n_steps must be >= 1");
  if (!(options.temperature > 0.0)) throw InputError("reverse_sample: temperature must be positive");
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(options.seed);
  auto noise = [&] { return torch::randn(mu.sizes(), gen, mu.options()); };
  auto masked = [&](torch::Tensor x) { return mask.defined() ? x * mask : x; };

  auto y = masked(mu + noise() / std::sqrt(options.temperature));
  const double h = (schedule.horizon - options.t_min) / options.n_steps;
  for (int i = 0; i < options.n_steps; ++i) {
    const double t = schedule.horizon - i * h;
    auto sc = score(y, t);
    std::optional<torch::Tensor> z;
    if (options.stochastic) z = noise();
    if (options.solver == Solver::kEulerMaruyama) {
      y = reverse_step_em(y, t, h, mu, sc, schedule, z);
    } else {
      // E[eps | Y_t] = -sigma_t score, so the average of Var(eps | Y_t) is 1 - mean((sigma_t score)^2).
      double eps_var = 0.0;
      if (z) {
        auto e2 = (sc * std::sqrt(schedule.variance(t))).pow(2);
        double mean_e2;
        if (mask.defined()) {
          auto w = mask.expand_as(e2).to(e2.scalar_type());
          mean_e2 = (e2 * w).sum().item<double>() / std::max(w.sum().item<double>(), 1.0);
        } else {
          mean_e2 = e2.mean().item<double>();
        }
        eps_var = std::clamp(1.0 - mean_e2, 0.0, 1.0);
      }
      y = reverse_step_ml(y, t, h, mu, sc, schedule, z, eps_var);
    }
    y = masked(y);
    if (trace) trace(i, t - h, y);
  }
  return y;
}

torch::Tensor diffusion_loss_from_output(const torch::Tensor& output, const torch::Tensor& eps,
                                         const torch::Tensor& sigma, const torch::Tensor& mel_mask, bool weighted) {
  // sigma: [B] per-example standard deviation
  auto sig = sigma.to(output.scalar_type()).view({-1, 1, 1});
  auto residual = weighted ? output * sig + eps : output + eps / sig;
  auto m = mel_mask.unsqueeze(-1).to(output.scalar_type());
  auto per_example = (residual.pow(2) * m).sum({1, 2}) / (m.sum({1, 2}) * output.size(2)).clamp_min(1.0);
  return per_example.mean();
}

}  // namespace zsdiff
