#include "vaelab/full_vb.hpp"

#include <cmath>
#include <optional>

#include "vaelab/distributions.hpp"
#include "vaelab/errors.hpp"

namespace vaelab {

namespace {

constexpr const char* kMuPrefix = "mu:";
constexpr const char* kRhoPrefix = "rho:";

Var sum_all(const std::map<std::string, Var>& terms) {
  std::optional<Var> acc;
  for (const auto& [id, v] : terms) acc = acc ? *acc + v : v;
  if (!acc) throw ContractError("empty weight posterior");
  return *acc;
}

}  // namespace

Tensor WeightPosterior::sigma(const std::string& id) const {
  Tensor s = rhos.value(id);
  for (double& v : s.data()) v = kernels::stable_softplus(v);
  return s;
}

VaeModel WeightPosterior::mean_model() const { return VaeModel{config, likelihood, means}; }

ParameterSet WeightPosterior::as_parameters() const {
  ParameterSet flat;
  for (const auto& p : means) flat.add({kMuPrefix + p.id, p.value, true});
  for (const auto& p : rhos) flat.add({kRhoPrefix + p.id, p.value, true});
  return flat;
}

void WeightPosterior::assign_parameters(const ParameterSet& flat) {
  for (auto& p : means) p.value = flat.value(kMuPrefix + p.id);
  for (auto& p : rhos) p.value = flat.value(kRhoPrefix + p.id);
}

double inverse_softplus(double sigma) {
  if (!(sigma > 0.0)) throw ContractError("softplus is positive; cannot invert " + std::to_string(sigma));
  // log(exp(s) - 1), rearranged for large s.
  return sigma > 30.0 ? sigma + std::log(-std::expm1(-sigma)) : std::log(std::expm1(sigma));
}

WeightPosterior seed_from_map(const VaeModel& trained, double initial_variance) {
  if (!(initial_variance > 0.0)) throw ContractError("initial variance must be positive");
  const double rho = inverse_softplus(std::sqrt(initial_variance));
  WeightPosterior post{trained.config, trained.likelihood, trained.params, {}};
  for (const auto& p : trained.params) post.rhos.add({p.id, Tensor::full(p.value.shape(), rho), true});
  return post;
}

NoiseMap draw_weight_noise(const WeightPosterior& post, SeededRng& rng) {
  NoiseMap noise;
  for (const auto& p : post.means) noise.emplace(p.id, sample_std_normal(p.value.shape(), rng));
  return noise;
}

WeightSample sample_weights(const WeightPosterior& post, const NoiseMap& noise) {
  WeightSample out{post.mean_model(), noise};
  for (auto& p : out.weights.params) {
    const Tensor sigma = post.sigma(p.id);
    const Tensor& zeta = noise.at(p.id);
    if (zeta.shape() != p.value.shape()) throw ShapeError("weight noise shape mismatch for '" + p.id + "'");
    for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] += sigma[i] * zeta[i];
  }
  return out;
}

WeightSample sample_weights(const WeightPosterior& post, SeededRng& rng) {
  return sample_weights(post, draw_weight_noise(post, rng));
}

BoundPosterior bind_posterior(Tape& tape, const WeightPosterior& post, const NoiseMap& noise) {
  BoundPosterior b;
  b.sampled.config = post.config;
  b.sampled.likelihood = post.likelihood;
  for (const auto& p : post.means) {
    const Tensor& zeta = noise.at(p.id);
    if (zeta.shape() != p.value.shape()) throw ShapeError("weight noise shape mismatch for '" + p.id + "'");
    Var mu = tape.parameter(kMuPrefix + p.id, p.value);
    Var rho = tape.parameter(kRhoPrefix + p.id, post.rhos.value(p.id));
    Var sigma = softplus(rho);
    b.mu.emplace(p.id, mu);
    b.rho.emplace(p.id, rho);
    b.sigma.emplace(p.id, sigma);
    b.sampled.params.emplace(p.id, mu + sigma * tape.constant(zeta));
  }
  return b;
}

Var weight_kl_closed_form(const BoundPosterior& bound) {
  std::map<std::string, Var> terms;
  for (const auto& [id, mu] : bound.mu) {
    Var sigma = bound.sigma.at(id);
    // 0.5 * (sigma^2 + mu^2 - 1) - log sigma
    terms.emplace(id, reduce_sum(0.5 * (square(sigma) + square(mu) - 1.0) - log(sigma)));
  }
  return sum_all(terms);
}

Var weight_log_ratio(const BoundPosterior& bound) {
  std::map<std::string, Var> terms;
  for (const auto& [id, mu] : bound.mu) {
    Var theta = bound.sampled.param(id);
    GaussianParams q{mu, 2.0 * log(bound.sigma.at(id))};
    terms.emplace(id, log_prob_std_normal(theta) - log_prob_gaussian(theta, q));
  }
  return sum_all(terms);
}

FullVbEstimate full_vb_objective(Tape& tape, const WeightPosterior& post, const HyperPrior& prior, const Tensor& batch,
                                 const FullVbConfig& cfg, const NoiseMap& weight_noise, const Tensor& latent_noise) {
  if (prior.kind != HyperPrior::std_normal) throw ContractError("only the standard normal hyperprior is supported");
  if (batch.rank() != 2 || batch.shape()[0] == 0) throw ContractError("full VB objective needs a non-empty batch");
  BoundPosterior bound = bind_posterior(tape, post, weight_noise);
  ObjectiveConfig ocfg{Estimator::a, cfg.samples, cfg.dataset_size, 0.0};
  ElboEstimate data = elbo_estimator_a(tape, bound.sampled, batch, ocfg, latent_noise);
  Var weight = cfg.weight_term == FullVbConfig::closed_form ? -weight_kl_closed_form(bound) : weight_log_ratio(bound);
  Var total = data.node + weight;
  return {total, total.item(), data.total, weight.item()};
}

FullVbEstimate full_vb_objective(Tape& tape, const WeightPosterior& post, const HyperPrior& prior, const Tensor& batch,
                                 const FullVbConfig& cfg, SeededRng& rng) {
  if (batch.rank() != 2 || batch.shape()[0] == 0) throw ContractError("full VB objective needs a non-empty batch");
  NoiseMap zeta = draw_weight_noise(post, rng);
  Tensor eps = draw_latent_noise(batch.shape()[0], cfg.samples, post.config.latent_dim, rng);
  return full_vb_objective(tape, post, prior, batch, cfg, zeta, eps);
}

}  // namespace vaelab
