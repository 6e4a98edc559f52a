#include "vaelab/distributions.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "vaelab/errors.hpp"

namespace vaelab {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

void require_same_shape(const Var& a, const Var& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                     " differ");
  }
}

Var sum_rows(Var terms) {
  if (terms.value().rank() != 2) throw ShapeError("row-wise reduction needs rank 2, got " + to_string(terms.shape()));
  return reduce_sum(terms, 1);
}

Var kl_terms(const GaussianParams& q) {
  require_same_shape(q.mean, q.log_var, "kl");
  // -0.5 * (1 + lv - mu^2 - exp(lv))
  return -0.5 * (1.0 + q.log_var - square(q.mean) - exp(q.log_var));
}

Var bernoulli_terms(Var x, Var p) {
  require_same_shape(x, p, "log_prob_bernoulli");
  Var pc = clamp(p, kBernoulliClamp, 1.0 - kBernoulliClamp);
  return x * log(pc) + (1.0 - x) * log(1.0 - pc);
}

Var gaussian_terms(Var x, const GaussianParams& q) {
  require_same_shape(q.mean, q.log_var, "log_prob_gaussian");
  require_same_shape(x, q.mean, "log_prob_gaussian");
  Var sq = square(x - q.mean) * exp(-q.log_var);
  return -kHalfLog2Pi - 0.5 * q.log_var - 0.5 * sq;
}

Var std_normal_terms(Var z) { return -kHalfLog2Pi - 0.5 * square(z); }

}  // namespace

Tensor sample_std_normal(const Shape& shape, SeededRng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

Var reparameterize(const GaussianParams& q, const Tensor& eps) {
  require_same_shape(q.mean, q.log_var, "reparameterize");
  if (eps.shape() != q.mean.shape()) {
    throw ShapeError("reparameterize: noise shape " + to_string(eps.shape()) + " vs mean shape " +
                     to_string(q.mean.shape()));
  }
  Var e = q.mean.tape().constant(eps);
  return q.mean + exp(0.5 * q.log_var) * e;
}

Var kl_gaussian_vs_std_normal(const GaussianParams& q) { return reduce_sum(kl_terms(q)); }
Var kl_gaussian_vs_std_normal_rows(const GaussianParams& q) { return sum_rows(kl_terms(q)); }

Var log_prob_bernoulli(Var x, Var p) { return reduce_sum(bernoulli_terms(x, p)); }
Var log_prob_bernoulli_rows(Var x, Var p) { return sum_rows(bernoulli_terms(x, p)); }

Var log_prob_gaussian(Var x, const GaussianParams& q) { return reduce_sum(gaussian_terms(x, q)); }
Var log_prob_gaussian_rows(Var x, const GaussianParams& q) { return sum_rows(gaussian_terms(x, q)); }

Var log_prob_std_normal(Var z) { return reduce_sum(std_normal_terms(z)); }
Var log_prob_std_normal_rows(Var z) { return sum_rows(std_normal_terms(z)); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double inverse_normal_cdf(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("inverse_normal_cdf needs u in (0, 1), got " + std::to_string(u));

  static constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                              -2.759285104469687e+02, 1.383577518672690e+02,
                                              -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                              -1.556989798598866e+02, 6.680131188771972e+01,
                                              -1.328068155288572e+01};
  static constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                              -2.400758277161838e+00, -2.549732539343734e+00,
                                              4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (u < p_low) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - p_low) {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Newton step on Phi(x) - u. In the upper tail work with the complement to
  // keep the residual accurate.
  const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  if (density > 0.0) {
    const double residual = u > 0.5 ? (1.0 - u) - 0.5 * std::erfc(x / std::numbers::sqrt2) : normal_cdf(x) - u;
    x -= residual / density;
  }
  return x;
}

}  // namespace vaelab
