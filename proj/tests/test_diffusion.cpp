#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "zsdiff/diffusion.hpp"
#include "zsdiff/error.hpp"

using namespace zsdiff;

namespace {

torch::Tensor scalar(double v, int64_t n = 1) { return torch::full({n}, v, torch::kFloat64); }

// Terminal moments of the reverse chain for data N(a, v) with the analytic score.
std::pair<double, double> gaussian_chain(Solver solver, int steps, int64_t chains, double a, double v, uint64_t seed) {
  NoiseSchedule sch;
  auto mu = torch::zeros({chains}, torch::kFloat64);
  SamplerOptions o;
  o.n_steps = steps;
  o.solver = solver;
  o.seed = seed;
  ScoreFn score = [&](const torch::Tensor& y, double t) { return analytic_gaussian_score(y, t, mu, a, v, sch); };
  auto y = reverse_sample(mu, score, sch, o);
  return {y.mean().item<double>(), y.var().item<double>()};
}

}  // namespace

TEST(Schedule, IntegralValues) {
  NoiseSchedule s;
  EXPECT_EQ(s.integral(0.0), 0.0);
  EXPECT_NEAR(s.integral(1.0), 10.025, 1e-12);
  EXPECT_NEAR(s.integral(0.5), 2.51875, 1e-12);
  EXPECT_NEAR(s.integral(0.5), oracle::beta_integral(0.5, 0.05, 20.0, 1.0), 1e-12);
  EXPECT_NEAR(s.integral(0.2, 0.7), s.integral(0.7) - s.integral(0.2), 1e-12);
  EXPECT_THROW(s.integral(1.5), InputError);
  EXPECT_THROW(s.integral(-0.1), InputError);
  // Trapezoid rule on the linear beta is exact.
  EXPECT_NEAR(s.integral(0.3), 0.5 * (s.beta(0.0) + s.beta(0.3)) * 0.3, 1e-12);
}

TEST(Schedule, ValidateRejectsBadParameters) {
  NoiseSchedule s;
  s.beta1 = -1.0;
  EXPECT_THROW(s.validate(), InputError);
}

TEST(Kernel, ClosedFormValues) {
  NoiseSchedule s;
  auto k0 = transition_kernel(s, scalar(1.0), scalar(0.0), 0.0);
  EXPECT_EQ(k0.sigma2, 0.0);
  EXPECT_EQ(k0.gamma.item<double>(), 0.0);

  auto k = transition_kernel(s, scalar(1.0), scalar(0.0), 0.5);
  EXPECT_NEAR(k.gamma.item<double>(), 1.0 - std::exp(-1.259375), 1e-12);
  EXPECT_NEAR(k.gamma.item<double>(), 0.7162, 1e-4);
  EXPECT_NEAR(k.sigma2, 0.9195, 1e-4);

  auto kt = transition_kernel(s, scalar(1.0), scalar(0.0), 1.0);
  EXPECT_NEAR(std::exp(-0.5 * s.integral(1.0)), 6.65e-3, 1e-5);
  EXPECT_LT(std::abs(kt.gamma.item<double>() - 1.0), 0.007);
  EXPECT_NEAR(kt.sigma2, 0.99996, 1e-5);

  EXPECT_TRUE(torch::equal(sample_forward(k, scalar(0.0)), k.gamma));
}

TEST(Kernel, MonteCarloSamplesMatchMoments) {
  NoiseSchedule s;
  auto k = transition_kernel(s, scalar(1.0), scalar(0.0), 0.5);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(17);
  auto y = sample_forward(k, torch::randn({20000}, gen, torch::kFloat64));
  EXPECT_NEAR(y.mean().item<double>(), 0.7162, 0.02);
  EXPECT_NEAR(y.var().item<double>(), 0.9195, 0.03);
}

TEST(Kernel, ForwardEulerMaruyamaAgrees) {
  // Independent simulation of dY = -1/2 beta (Y - mu) dt + sqrt(beta) dW.
  const double dt = 1e-3, mu = 1.0;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(23);
  auto y = torch::zeros({20000}, torch::kFloat64);
  NoiseSchedule s;
  for (int i = 0; i < 500; ++i) {
    const double beta = 0.05 + 19.95 * (i * dt);
    y = y - 0.5 * beta * (y - mu) * dt + std::sqrt(beta * dt) * torch::randn({20000}, gen, torch::kFloat64);
  }
  auto k = transition_kernel(s, scalar(mu), scalar(0.0), 0.5);
  EXPECT_NEAR(y.mean().item<double>(), k.gamma.item<double>(), 0.02);
  EXPECT_NEAR(y.var().item<double>(), k.sigma2, 0.03);
}

TEST(Score, KernelScoreIsMinusEpsOverSigma) {
  NoiseSchedule s;
  auto k = transition_kernel(s, scalar(0.4, 3), scalar(-1.0, 3), 0.3);
  auto eps = torch::tensor({0.5, -1.0, 2.0}, torch::kFloat64);
  EXPECT_TRUE(torch::allclose(kernel_score(k, eps), -eps / std::sqrt(k.sigma2)));
}

TEST(Score, AnalyticGaussianScore) {
  NoiseSchedule s;
  const double a = 0.3, v = 0.25, mu = -0.2;
  EXPECT_NEAR(analytic_gaussian_score(1.7, 0.0, mu, a, v, s), -(1.7 - a) / v, 1e-12);
  for (double t : {0.05, 0.3, 0.8}) {
    const double b = s.integral(t);
    const double mean_t = (1 - std::exp(-b / 2)) * mu + std::exp(-b / 2) * a;
    const double var_t = std::exp(-b) * v + 1 - std::exp(-b);
    EXPECT_NEAR(analytic_gaussian_score(mean_t, t, mu, a, v, s), 0.0, 1e-12);
    auto logp = [&](double y) { return -0.5 * (y - mean_t) * (y - mean_t) / var_t - 0.5 * std::log(2 * std::numbers::pi * var_t); };
    for (double y : {-1.0, 0.1, 2.3}) {
      const double delta = 1e-4;
      const double fd = (logp(y + delta) - logp(y - delta)) / (2 * delta);
      EXPECT_NEAR(analytic_gaussian_score(y, t, mu, a, v, s), fd, 1e-6);
    }
  }
}

TEST(ReverseStep, EmArithmeticAndFixedPoint) {
  NoiseSchedule s;
  auto out = reverse_step_em(scalar(2.0), 1.0, 0.1, scalar(1.0), scalar(-0.5), s, scalar(0.0));
  EXPECT_NEAR(out.item<double>(), 2.0, 1e-12);
  auto mu = torch::randn({4}, torch::kFloat64);
  EXPECT_TRUE(torch::allclose(reverse_step_em(mu, 0.7, 0.05, mu, torch::zeros_like(mu), s, torch::zeros_like(mu)), mu));
  EXPECT_TRUE(torch::allclose(reverse_step_ml(mu, 0.7, 0.05, mu, torch::zeros_like(mu), s, torch::zeros_like(mu)), mu));
  EXPECT_THROW(reverse_step_em(mu, 0.1, 0.2, mu, mu, s), InputError);
}

TEST(ReverseSample, EvaluationCountAndZeroScoreFixedPoint) {
  NoiseSchedule s;
  auto mu = torch::randn({3, 5}, torch::kFloat64);
  int calls = 0;
  ScoreFn zero = [&](const torch::Tensor& y, double) {
    ++calls;
    return torch::zeros_like(y);
  };
  SamplerOptions o;
  o.n_steps = 100;
  o.solver = Solver::kEulerMaruyama;
  o.stochastic = false;
  // Deviation from mu shrinks as the prior temperature grows.
  std::vector<double> gaps;
  for (double tau : {1e2, 1e6, 1e12}) {
    o.temperature = tau;
    gaps.push_back((reverse_sample(mu, zero, s, o) - mu).abs().max().item<double>());
  }
  EXPECT_EQ(calls, 300);
  EXPECT_GT(gaps[0], gaps[1]);
  EXPECT_GT(gaps[1], gaps[2]);
  EXPECT_LT(gaps[2], 1e-3);
}

TEST(ReverseStep, MlStepIsExactForGaussianData) {
  // Y_t drawn from the exact marginal; one ML step must land on the exact marginal at t - h.
  NoiseSchedule s;
  const double a = 0.3, v = 0.25, t = 0.6, h = 0.2;
  auto marginal = [&](double tt) {
    const double d = std::exp(-0.5 * s.integral(tt));
    return std::pair{d * a, d * d * v + 1 - d * d};
  };
  auto gen = at::make_generator<at::CPUGeneratorImpl>(12);
  const auto [mt, vt] = marginal(t);
  auto y = mt + std::sqrt(vt) * torch::randn({200000}, gen, torch::kFloat64);
  auto mu = torch::zeros_like(y);
  auto score = analytic_gaussian_score(y, t, mu, a, v, s);
  // Var(eps | Y_t) is constant for Gaussian data: 1 - var_t / V_t.
  const double eps_var = 1.0 - s.variance(t) / vt;
  auto next = reverse_step_ml(y, t, h, mu, score, s, torch::randn({200000}, gen, torch::kFloat64), eps_var);
  const auto [ms, vs] = marginal(t - h);
  EXPECT_NEAR(next.mean().item<double>(), ms, 0.01);
  EXPECT_NEAR(next.var().item<double>(), vs, 0.01 * vs);
}

TEST(ReverseSample, SeededDeterminismAndMask) {
  NoiseSchedule s;
  auto mu = torch::randn({1, 6, 4}, torch::kFloat64);
  ScoreFn score = [&](const torch::Tensor& y, double t) { return analytic_gaussian_score(y, t, mu, 0.0, 1.0, s); };
  SamplerOptions o;
  o.n_steps = 10;
  o.seed = 9;
  EXPECT_TRUE(torch::equal(reverse_sample(mu, score, s, o), reverse_sample(mu, score, s, o)));
  auto mask = torch::tensor({1, 1, 1, 1, 0, 0}, torch::kFloat64).view({1, 6, 1});
  auto y = reverse_sample(mu, score, s, o, mask);
  EXPECT_EQ(y[0].narrow(0, 4, 2).abs().max().item<double>(), 0.0);
}

TEST(ReverseSample, GaussianOracleEmAndMl) {
  auto [em_mean, em_var] = gaussian_chain(Solver::kEulerMaruyama, 100, 20000, 0.3, 0.25, 1);
  EXPECT_NEAR(em_mean, 0.3, 0.03);
  EXPECT_NEAR(em_var, 0.25, 0.15 * 0.25);
  auto [ml_mean, ml_var] = gaussian_chain(Solver::kMaximumLikelihood, 50, 20000, 0.3, 0.25, 2);
  auto [em50_mean, em50_var] = gaussian_chain(Solver::kEulerMaruyama, 50, 20000, 0.3, 0.25, 3);
  EXPECT_NEAR(ml_mean, em50_mean, 0.05);
  EXPECT_LT(std::abs(ml_var - em50_var) / em50_var, 0.2);
}

TEST(DiffusionLoss, OptimumAndZeroOutput) {
  NoiseSchedule s;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(31);
  const int64_t b = 10000;
  auto t = torch::rand({b}, gen, torch::kFloat64) * (1.0 - kMinDiffusionTime) + kMinDiffusionTime;
  std::vector<double> sig;
  for (int64_t i = 0; i < b; ++i) sig.push_back(std::sqrt(s.variance(t[i].item<double>())));
  auto sigma = torch::tensor(sig, torch::kFloat64);
  auto eps = torch::randn({b, 1, 1}, gen, torch::kFloat64);
  auto mask = torch::ones({b, 1}, torch::kBool);
  auto target = -eps / sigma.view({-1, 1, 1});
  EXPECT_NEAR(diffusion_loss_from_output(target, eps, sigma, mask).item<double>(), 0.0, 1e-20);
  EXPECT_NEAR(diffusion_loss_from_output(target, eps, sigma, mask, false).item<double>(), 0.0, 1e-20);
  EXPECT_NEAR(diffusion_loss_from_output(torch::zeros_like(eps), eps, sigma, mask).item<double>(), 1.0, 0.05);
}

TEST(DiffusionLoss, MaskedMeanPerExample) {
  auto eps = torch::ones({2, 3, 1}, torch::kFloat64);
  auto sigma = torch::ones({2}, torch::kFloat64);
  auto out = torch::zeros({2, 3, 1}, torch::kFloat64);
  out[0][2][0] = 100.0;  // padding of example 0
  auto mask = torch::tensor({{true, true, false}, {true, true, true}});
  EXPECT_NEAR(diffusion_loss_from_output(out, eps, sigma, mask).item<double>(), 1.0, 1e-12);
}
