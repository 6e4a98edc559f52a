#pragma once

// Variational Bayes over the network weights themselves: every parameter
// entry gets an independent Gaussian q(theta) = N(mu, sigma^2) with
// sigma = softplus(rho), sampled by the same reparameterization used for
// the latent code.

#include <map>
#include <string>

#include "vaelab/autodiff.hpp"
#include "vaelab/model.hpp"
#include "vaelab/objectives.hpp"
#include "vaelab/rng.hpp"

namespace vaelab {

using NoiseMap = std::map<std::string, Tensor>;

struct HyperPrior {
  enum Kind { std_normal } kind = std_normal;
};

struct WeightPosterior {
  MlpConfig config;
  Likelihood likelihood = Likelihood::bernoulli;
  ParameterSet means;  // same ids and shapes as the underlying VaeModel
  ParameterSet rhos;

  /// softplus(rho) for one parameter.
  Tensor sigma(const std::string& id) const;
  /// The posterior mean as a plain model.
  VaeModel mean_model() const;

  /// Flattened view for the optimizer: ids "mu:<id>" and "rho:<id>".
  ParameterSet as_parameters() const;
  void assign_parameters(const ParameterSet& flat);

  friend bool operator==(const WeightPosterior&, const WeightPosterior&) = default;
};

/// rho with softplus(rho) == sigma.
double inverse_softplus(double sigma);

/// Means copied from `trained`; every sigma set to sqrt(initial_variance).
WeightPosterior seed_from_map(const VaeModel& trained, double initial_variance);

/// zeta ~ N(0, I), one tensor per parameter id.
NoiseMap draw_weight_noise(const WeightPosterior& post, SeededRng& rng);

struct WeightSample {
  VaeModel weights;  // theta~ = mu + sigma * zeta
  NoiseMap noise;    // zeta
};

WeightSample sample_weights(const WeightPosterior& post, SeededRng& rng);
WeightSample sample_weights(const WeightPosterior& post, const NoiseMap& noise);

/// Posterior leaves on a tape plus the sampled weights built from them.
struct BoundPosterior {
  std::map<std::string, Var> mu;
  std::map<std::string, Var> rho;
  std::map<std::string, Var> sigma;
  ModelView sampled;
};

BoundPosterior bind_posterior(Tape& tape, const WeightPosterior& post, const NoiseMap& noise);

/// KL(q(theta) || N(0, I)) in closed form.
Var weight_kl_closed_form(const BoundPosterior& bound);
/// log p(theta~) - log q(theta~) at the sampled weights; its expectation is -KL.
Var weight_log_ratio(const BoundPosterior& bound);

struct FullVbConfig {
  std::size_t samples = 1;       // L latent draws per datapoint
  std::size_t dataset_size = 0;  // N; 0 means the batch size
  enum WeightTerm { closed_form, monte_carlo } weight_term = closed_form;
};

struct FullVbEstimate {
  Var node;                 // total, differentiable in (mu, rho)
  double total = 0.0;
  double data_term = 0.0;   // (N/M) * sum_i mean_l [log p(x|z) + log p(z) - log q(z|x)]
  double weight_term = 0.0; // -KL(q(theta)||p(theta)) or its single-sample estimate
};

FullVbEstimate full_vb_objective(Tape& tape, const WeightPosterior& post, const HyperPrior& prior, const Tensor& batch,
                                 const FullVbConfig& cfg, const NoiseMap& weight_noise, const Tensor& latent_noise);
/// Draws zeta (weights) first, then the latent noise, from `rng`.
FullVbEstimate full_vb_objective(Tape& tape, const WeightPosterior& post, const HyperPrior& prior, const Tensor& batch,
                                 const FullVbConfig& cfg, SeededRng& rng);

}  // namespace vaelab
