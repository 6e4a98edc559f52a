#include "vaelab/objectives.hpp"

#include <optional>

#include "vaelab/distributions.hpp"
#include "vaelab/errors.hpp"

namespace vaelab {

std::string to_string(Estimator e) { return e == Estimator::a ? "a" : "b"; }

Estimator parse_estimator(const std::string& name) {
  if (name == "a" || name == "A") return Estimator::a;
  if (name == "b" || name == "B") return Estimator::b;
  throw ContractError("unknown estimator '" + name + "'");
}

void ObjectiveConfig::validate() const {
  if (samples == 0) throw ContractError("samples per datapoint (L) must be at least 1");
  if (weight_decay < 0.0) throw ContractError("weight decay must be non-negative");
}

Tensor draw_latent_noise(std::size_t batch_rows, std::size_t samples, std::size_t latent_dim, SeededRng& rng) {
  return sample_std_normal({samples * batch_rows, latent_dim}, rng);
}

namespace {

struct Prepared {
  std::size_t m;
  double n_scale;
  Var x;
  Var x_tiled;
  GaussianParams q;
  GaussianParams q_tiled;
  Var z;
};

Prepared prepare(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                 const Tensor& eps) {
  cfg.validate();
  if (batch.rank() != 2 || batch.shape()[0] == 0) throw ContractError("ELBO estimator needs a non-empty [M x D] batch");
  const std::size_t m = batch.shape()[0];
  const std::size_t lm = cfg.samples * m;
  if (eps.shape() != Shape{lm, model.config.latent_dim}) {
    throw ShapeError("latent noise must be " + to_string(Shape{lm, model.config.latent_dim}) + ", got " +
                     to_string(eps.shape()));
  }
  Prepared p;
  p.m = m;
  const double n = cfg.dataset_size ? static_cast<double>(cfg.dataset_size) : static_cast<double>(m);
  p.n_scale = n / static_cast<double>(m);
  p.x = tape.constant(batch);
  p.x_tiled = cfg.samples == 1 ? p.x : tape.constant(kernels::tile_rows(batch, cfg.samples));
  p.q = encode(model, p.x);
  p.q_tiled = cfg.samples == 1 ? p.q : GaussianParams{tile_rows(p.q.mean, cfg.samples), tile_rows(p.q.log_var, cfg.samples)};
  p.z = reparameterize(p.q_tiled, eps);
  return p;
}

// Average an [L*M] vector over its L blocks.
std::vector<double> fold_samples(const Tensor& rows, std::size_t m, std::size_t samples) {
  std::vector<double> out(m, 0.0);
  for (std::size_t l = 0; l < samples; ++l)
    for (std::size_t i = 0; i < m; ++i) out[i] += rows[l * m + i];
  for (double& v : out) v /= static_cast<double>(samples);
  return out;
}

ElboEstimate finish(Var recon, Var kl, const Prepared& p, std::size_t samples, std::vector<double> per_datapoint) {
  Var total = p.n_scale * (recon - kl);
  ElboEstimate e;
  e.node = total;
  e.total = total.item();
  e.recon_term = recon.item();
  e.kl_term = kl.item();
  e.n_scale = p.n_scale;
  e.samples_used = samples;
  e.per_datapoint = std::move(per_datapoint);
  return e;
}

}  // namespace

ElboEstimate elbo_estimator_a(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                              const Tensor& eps) {
  Prepared p = prepare(tape, model, batch, cfg, eps);
  const double inv_l = 1.0 / static_cast<double>(cfg.samples);
  Var log_lik = log_likelihood_rows(model, p.x_tiled, p.z);
  Var gap = log_prob_gaussian_rows(p.z, p.q_tiled) - log_prob_std_normal_rows(p.z);
  Var recon = inv_l * reduce_sum(log_lik);
  Var kl = inv_l * reduce_sum(gap);

  std::vector<double> per = fold_samples(log_lik.value(), p.m, cfg.samples);
  const std::vector<double> gaps = fold_samples(gap.value(), p.m, cfg.samples);
  for (std::size_t i = 0; i < p.m; ++i) per[i] -= gaps[i];
  return finish(recon, kl, p, cfg.samples, std::move(per));
}

ElboEstimate elbo_estimator_b(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                              const Tensor& eps) {
  Prepared p = prepare(tape, model, batch, cfg, eps);
  const double inv_l = 1.0 / static_cast<double>(cfg.samples);
  Var log_lik = log_likelihood_rows(model, p.x_tiled, p.z);
  Var kl_rows = kl_gaussian_vs_std_normal_rows(p.q);
  Var recon = inv_l * reduce_sum(log_lik);
  Var kl = reduce_sum(kl_rows);

  std::vector<double> per = fold_samples(log_lik.value(), p.m, cfg.samples);
  for (std::size_t i = 0; i < p.m; ++i) per[i] -= kl_rows.value()[i];
  return finish(recon, kl, p, cfg.samples, std::move(per));
}

ElboEstimate elbo_estimator_a(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                              SeededRng& rng) {
  if (batch.rank() != 2 || batch.shape()[0] == 0) throw ContractError("ELBO estimator needs a non-empty [M x D] batch");
  cfg.validate();
  return elbo_estimator_a(tape, model, batch, cfg,
                          draw_latent_noise(batch.shape()[0], cfg.samples, model.config.latent_dim, rng));
}

ElboEstimate elbo_estimator_b(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                              SeededRng& rng) {
  if (batch.rank() != 2 || batch.shape()[0] == 0) throw ContractError("ELBO estimator needs a non-empty [M x D] batch");
  cfg.validate();
  return elbo_estimator_b(tape, model, batch, cfg,
                          draw_latent_noise(batch.shape()[0], cfg.samples, model.config.latent_dim, rng));
}

ElboEstimate elbo_estimate(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                           const Tensor& eps) {
  return cfg.estimator == Estimator::a ? elbo_estimator_a(tape, model, batch, cfg, eps)
                                       : elbo_estimator_b(tape, model, batch, cfg, eps);
}

ElboEstimate elbo_estimate(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                           SeededRng& rng) {
  return cfg.estimator == Estimator::a ? elbo_estimator_a(tape, model, batch, cfg, rng)
                                       : elbo_estimator_b(tape, model, batch, cfg, rng);
}

ElboEstimate elbo_estimate(const VaeModel& model, const Tensor& batch, const ObjectiveConfig& cfg, SeededRng& rng) {
  Tape tape;
  ElboEstimate e = elbo_estimate(tape, bind(tape, model), batch, cfg, rng);
  e.node = Var();
  return e;
}

Var weight_penalty(const ModelView& model) {
  std::optional<Var> sum;
  for (const auto& [id, v] : model.params) {
    if (!is_weight_id(id)) continue;
    Var s = reduce_sum(square(v));
    sum = sum ? *sum + s : s;
  }
  if (!sum) throw ContractError("model has no weight matrices");
  return *sum;
}

namespace {

Objective assemble(const ModelView& model, ElboEstimate elbo, double lambda) {
  Objective obj;
  Var loss = -elbo.node;
  if (lambda > 0.0) {
    Var penalty = weight_penalty(model);
    obj.penalty = penalty.item();
    loss = loss + lambda * penalty;
  }
  obj.loss = loss;
  obj.elbo = std::move(elbo);
  return obj;
}

}  // namespace

Objective l2_regularized_objective(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                                   const Tensor& eps) {
  return assemble(model, elbo_estimator_b(tape, model, batch, cfg, eps), cfg.weight_decay);
}

Objective l2_regularized_objective(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                                   SeededRng& rng) {
  return assemble(model, elbo_estimator_b(tape, model, batch, cfg, rng), cfg.weight_decay);
}

Objective training_objective(Tape& tape, const ModelView& model, const Tensor& batch, const ObjectiveConfig& cfg,
                             SeededRng& rng) {
  return assemble(model, elbo_estimate(tape, model, batch, cfg, rng), cfg.weight_decay);
}

Tensor reconstruct(const VaeModel& model, const Tensor& batch, DecodeMode mode, SeededRng& rng) {
  if (mode.kind == DecodeMode::sample_avg && mode.k == 0) throw ContractError("sample_avg decoding needs k >= 1");
  Tape tape;
  ModelView view = bind(tape, model);
  GaussianParams q = encode(view, tape.constant(batch));
  if (mode.kind == DecodeMode::mean) return decoder_mean(view, q.mean).value();

  Tensor acc = Tensor::zeros({batch.shape()[0], model.config.input_dim});
  for (std::size_t s = 0; s < mode.k; ++s) {
    Tensor eps = sample_std_normal(q.mean.shape(), rng);
    acc = kernels::add(acc, decoder_mean(view, reparameterize(q, eps)).value());
  }
  for (double& v : acc.data()) v /= static_cast<double>(mode.k);
  return acc;
}

std::vector<double> row_mse(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape() || x.rank() != 2) {
    throw ShapeError("mse shapes " + to_string(x.shape()) + " and " + to_string(x_hat.shape()));
  }
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x[i * c + j] - x_hat[i * c + j];
      out[i] += d * d;
    }
    out[i] /= static_cast<double>(c);
  }
  return out;
}

double mean_squared_error(const Tensor& x, const Tensor& x_hat) {
  if (x.shape() != x_hat.shape()) {
    throw ShapeError("mse shapes " + to_string(x.shape()) + " and " + to_string(x_hat.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = x[i] - x_hat[i];
    s += d * d;
  }
  return s / static_cast<double>(x.numel());
}

double reconstruction_mse(const VaeModel& model, const Tensor& batch, DecodeMode mode, SeededRng& rng) {
  return mean_squared_error(batch, reconstruct(model, batch, mode, rng));
}

}  // namespace vaelab
