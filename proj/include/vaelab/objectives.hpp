#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vaelab/autodiff.hpp"
#include "vaelab/model.hpp"
#include "vaelab/rng.hpp"

namespace vaelab {

/// a: generic estimator, log p(x, z) - log q(z | x) sampled.
/// b: sampled reconstruction minus closed-form KL.
enum class Estimator { a, b };

std::string to_string(Estimator e);
Estimator parse_estimator(const std::string& name);

struct ObjectiveConfig {
  Estimator estimator = Estimator::b;
  std::size_t samples = 1;       // L, latent draws per datapoint
  std::size_t dataset_size = 0;  // N; 0 means "the batch is the dataset"
  double weight_decay = 0.0;     // lambda

  void validate() const;
};

/// One evaluation of an ELBO estimator on a minibatch of M rows.
///
/// total = n_scale * (recon_term - kl_term), where recon_term is the batch sum
/// of L-averaged log p(x|z) and kl_term is the batch sum of the closed-form
/// KL (estimator b) or of the L-averaged sampled log q(z|x) - log p(z)
/// (estimator a). `node` is the differentiable total; it refers to the tape
/// the estimate was built on and is default-constructed by the overloads
/// that manage their own tape.
struct ElboEstimate {
  Var node;
  double total = 0.0;
  double recon_term = 0.0;
  double kl_term = 0.0;
  double n_scale = 1.0;  // N / M
  std::size_t samples_used = 0;
  std::vector<double> per_datapoint;  // unscaled estimate for each row
};

/// Latent noise for a batch: [L*M x D_z], row l*M + i feeds datapoint i.
/// Drawn in one contiguous read of the generator.
Tensor draw_latent_noise(std::size_t batch_rows, std::size_t samples, std::size_t latent_dim, SeededRng& rng);

ElboEstimate elbo_estimator_a(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                              const Tensor& eps);
ElboEstimate elbo_estimator_a(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                              SeededRng& rng);
ElboEstimate elbo_estimator_b(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                              const Tensor& eps);
ElboEstimate elbo_estimator_b(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                              SeededRng& rng);

/// Dispatch on cfg.estimator.
ElboEstimate elbo_estimate(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                           const Tensor& eps);
ElboEstimate elbo_estimate(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                           SeededRng& rng);
/// Tape-free convenience; `node` is left empty.
ElboEstimate elbo_estimate(const VaeModel& model, const Tensor& batch, const ObjectiveConfig& cfg, SeededRng& rng);

/// Sum of squared entries over weight matrices; biases are not penalized.
Var weight_penalty(const ModelView& model);

struct Objective {
  Var loss;  // to minimize
  ElboEstimate elbo;
  double penalty = 0.0;  // sum of squared weights, before lambda
};

/// -elbo_b + lambda * sum ||W||^2.
Objective l2_regularized_objective(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                                   SeededRng& rng);
Objective l2_regularized_objective(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                                   const Tensor& eps);

/// Same shape of loss, but with the estimator chosen by cfg.estimator.
Objective training_objective(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                             SeededRng& rng);

struct DecodeMode {
  enum Kind { mean, sample_avg } kind = mean;
  std::size_t k = 1;  // samples averaged in sample_avg mode

  static DecodeMode posterior_mean() { return {mean, 1}; }
  static DecodeMode sampled(std::size_t k) { return {sample_avg, k}; }
};

/// Decoder mean of the latent posterior mean (mean mode), or the average
/// of k decoder means at sampled latents (sample_avg mode).
Tensor reconstruct(const VaeModel& model, const Tensor& batch, DecodeMode mode, SeededRng& rng);

/// Mean over rows and columns of (x - x_hat)^2.
double mean_squared_error(const Tensor& x, const Tensor& x_hat);
/// Per-row mean squared error.
std::vector<double> row_mse(const Tensor& x, const Tensor& x_hat);

double reconstruction_mse(const VaeModel& model, const Tensor& batch, DecodeMode mode, SeededRng& rng);

}  // namespace vaelab
