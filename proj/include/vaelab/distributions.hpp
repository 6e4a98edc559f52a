#pragma once

#include "vaelab/autodiff.hpp"
#include "vaelab/rng.hpp"
#include "vaelab/tensor.hpp"

namespace vaelab {

/// Diagonal Gaussian parameterized by mean and log-variance, so the variance
/// exp(log_var) is positive by construction. Rank-2 params are a batch of
/// independent rows.
struct GaussianParams {
  Var mean;
  Var log_var;
};

inline constexpr double kBernoulliClamp = 1e-7;

/// I.i.d. N(0, 1) draws in row-major order.
Tensor sample_std_normal(const Shape& shape, SeededRng& rng);

/// mean + exp(log_var / 2) * eps, differentiable in q.
Var reparameterize(const GaussianParams& q, const Tensor& eps);

// The scalar forms sum over every element. The *_rows forms take rank-2
// operands and sum over columns, giving one value per row.

/// KL(N(mean, exp(log_var)) || N(0, I)) in closed form.
Var kl_gaussian_vs_std_normal(const GaussianParams& q);
Var kl_gaussian_vs_std_normal_rows(const GaussianParams& q);

/// sum x log p + (1 - x) log(1 - p), with p clamped to [1e-7, 1 - 1e-7].
/// Real-valued x in [0, 1] is accepted (cross-entropy against grey levels).
Var log_prob_bernoulli(Var x, Var p);
Var log_prob_bernoulli_rows(Var x, Var p);

Var log_prob_gaussian(Var x, const GaussianParams& q);
Var log_prob_gaussian_rows(Var x, const GaussianParams& q);

/// log N(z; 0, I).
Var log_prob_std_normal(Var z);
Var log_prob_std_normal_rows(Var z);

/// Standard normal CDF.
double normal_cdf(double z);

/// Phi^{-1}(u) for u in (0, 1): Acklam's rational approximation followed by one
/// Newton correction against the erfc-based CDF. Throws DomainError otherwise.
double inverse_normal_cdf(double u);

}  // namespace vaelab
