#include "vaelab/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>

#include "vaelab/errors.hpp"

namespace vaelab {

void TrainConfig::validate(std::size_t dataset_size) const {
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  if (batch_size > dataset_size) {
    throw ContractError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                        std::to_string(dataset_size));
  }
  if (samples == 0) throw ContractError("samples per datapoint (L) must be at least 1");
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (weight_decay < 0.0) throw ContractError("weight decay must be non-negative");
  if (eval_every == 0) throw ContractError("eval_every must be at least 1");
  if (eval_batch == 0) throw ContractError("eval_batch must be at least 1");
  if (mode == full_vb && !(full_vb_initial_variance > 0.0)) {
    throw ContractError("full-VB initial variance must be positive");
  }
}

void adagrad_step(ParameterSet& params, const GradientMap& grads, AdagradState& state, double lr) {
  if (grads.size() != params.size()) throw ContractError("gradient keys do not match parameter ids");
  for (const auto& p : params) {
    if (!grads.contains(p.id)) throw ContractError("missing gradient for '" + p.id + "'");
  }
  for (auto& p : params) {
    const Tensor& g = grads.at(p.id);
    if (g.shape() != p.value.shape()) {
      throw ShapeError("gradient for '" + p.id + "' has shape " + to_string(g.shape()) + ", parameter " +
                       to_string(p.value.shape()));
    }
    auto [it, fresh] = state.accum.try_emplace(p.id, Tensor::zeros(p.value.shape()));
    Tensor& acc = it->second;
    auto pv = p.value.data();
    auto gv = g.data();
    auto av = acc.data();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      av[i] += gv[i] * gv[i];
      pv[i] -= lr * gv[i] / (std::sqrt(av[i]) + state.epsilon);
    }
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string TrainLog::to_csv() const {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + ',' + std::to_string(r.step) + ',' + format_double(r.train_elbo) + ',' +
           format_double(r.val_elbo) + ',' + format_double(r.recon_term) + ',' + format_double(r.kl_term) + ',' +
           format_double(r.wall_ms) + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

Metrics evaluate(const Dataset& ds, const VaeModel& model, const EvalConfig& cfg, SeededRng& rng) {
  if (cfg.batch == 0) throw ContractError("evaluation batch must be at least 1");
  Metrics m;
  m.n = ds.size();
  if (m.n == 0) return m;
  double sq = 0.0;
  for (std::size_t start = 0; start < m.n; start += cfg.batch) {
    const std::size_t count = std::min(cfg.batch, m.n - start);
    const Tensor chunk = ds.x.row_slice(start, start + count);
    ObjectiveConfig oc;
    oc.estimator = Estimator::b;
    oc.samples = cfg.samples;
    const ElboEstimate e = elbo_estimate(model, chunk, oc, rng);
    m.elbo += e.total;
    SeededRng unused(0);
    sq += reconstruction_mse(model, chunk, DecodeMode::posterior_mean(), unused) * static_cast<double>(chunk.numel());
  }
  m.elbo_per_datapoint = m.elbo / static_cast<double>(m.n);
  m.mse = sq / static_cast<double>(ds.x.numel());
  return m;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t m, bool with_replacement,
                                                    SeededRng& rng) {
  if (m == 0 || m > n) throw ContractError("batch size must be in 1..N");
  const std::size_t nb = (n + m - 1) / m;
  std::vector<std::vector<std::size_t>> batches(nb);
  if (with_replacement) {
    for (auto& b : batches) {
      b.resize(m);
      for (auto& i : b) i = rng.uniform_index(n);
    }
    return batches;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t start = b * m;
    const std::size_t end = std::min(n, start + m);
    batches[b].assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

namespace {

void check_finite(double v, std::size_t step, const char* term) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite " + std::string(term) + " at step " + std::to_string(step));
  }
}

void check_gradients(const GradientMap& grads, std::size_t step) {
  for (const auto& [id, g] : grads) {
    if (!g.all_finite()) throw NumericError("non-finite gradient for '" + id + "' at step " + std::to_string(step));
  }
}

struct StepResult {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

StepResult point_step(VaeModel& model, const Tensor& batch, const TrainConfig& cfg, std::size_t n, AdagradState& state,
                      SeededRng& noise_rng, std::size_t step) {
  Tape tape;
  ModelView view = bind(tape, model);
  ObjectiveConfig oc;
  oc.estimator = cfg.estimator;
  oc.samples = cfg.samples;
  oc.dataset_size = n;
  oc.weight_decay = cfg.weight_decay;
  Objective obj = training_objective(tape, view, batch, oc, noise_rng);
  check_finite(obj.elbo.recon_term, step, "reconstruction term");
  check_finite(obj.elbo.kl_term, step, "KL term");
  check_finite(obj.loss.item(), step, "loss");
  GradientMap grads = tape.backward(obj.loss, model.params);
  check_gradients(grads, step);
  adagrad_step(model.params, grads, state, cfg.learning_rate);
  return {obj.elbo.total, obj.elbo.n_scale * obj.elbo.recon_term, obj.elbo.n_scale * obj.elbo.kl_term};
}

StepResult full_vb_step(WeightPosterior& post, const Tensor& batch, const TrainConfig& cfg, std::size_t n,
                        AdagradState& state, SeededRng& noise_rng, std::size_t step) {
  Tape tape;
  FullVbConfig fc;
  fc.samples = cfg.samples;
  fc.dataset_size = n;
  FullVbEstimate est = full_vb_objective(tape, post, HyperPrior{}, batch, fc, noise_rng);
  check_finite(est.data_term, step, "data term");
  check_finite(est.weight_term, step, "weight term");
  Var loss = -est.node;
  ParameterSet flat = post.as_parameters();
  GradientMap grads = tape.backward(loss, flat);
  check_gradients(grads, step);
  adagrad_step(flat, grads, state, cfg.learning_rate);
  post.assign_parameters(flat);
  return {est.total, est.data_term, -est.weight_term};
}

}  // namespace

TrainResult train(const Dataset& train_set, const std::optional<Dataset>& val_set, const MlpConfig& model_cfg,
                  Likelihood likelihood, const TrainConfig& cfg, const std::optional<VaeModel>& initial) {
  model_cfg.validate();
  if (train_set.size() == 0) throw ContractError("training set is empty");
  if (train_set.dim() != model_cfg.input_dim) {
    throw ShapeError("training data has " + std::to_string(train_set.dim()) + " columns, model expects " +
                     std::to_string(model_cfg.input_dim));
  }
  if (val_set && val_set->size() > 0 && val_set->dim() != model_cfg.input_dim) {
    throw ShapeError("validation data width does not match the model");
  }
  cfg.validate(train_set.size());

  const SeededRng root(cfg.seed);
  SeededRng init_rng = root.derive(0);
  SeededRng batch_rng = root.derive(1);
  SeededRng noise_rng = root.derive(2);
  const EvalConfig eval_cfg{1, cfg.eval_batch};

  TrainResult result;
  if (initial) {
    if (initial->config.input_dim != model_cfg.input_dim || initial->config.latent_dim != model_cfg.latent_dim ||
        initial->config.hidden_dims != model_cfg.hidden_dims || initial->likelihood != likelihood) {
      throw ContractError("initial model does not match the requested architecture");
    }
    result.model = *initial;
  } else {
    result.model = init_model(model_cfg, likelihood, init_rng);
  }
  {
    SeededRng eval_rng = root.derive(3);
    result.initial_train = evaluate(train_set, result.model, eval_cfg, eval_rng);
  }
  if (val_set && val_set->size() > 0) {
    SeededRng val_rng = root.derive(1000);
    result.initial_val = evaluate(*val_set, result.model, eval_cfg, val_rng);
  }

  std::optional<WeightPosterior> posterior;
  if (cfg.mode == TrainConfig::full_vb) posterior = seed_from_map(result.model, cfg.full_vb_initial_variance);

  const std::size_t n = train_set.size();
  AdagradState state;
  std::size_t step = 0;
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(n, cfg.batch_size, cfg.with_replacement, batch_rng);
    const std::size_t nb = batches.size();
    double sum_total = 0.0, sum_recon = 0.0, sum_kl = 0.0;
    for (const auto& rows : batches) {
      const Tensor batch = train_set.x.gather_rows(rows);
      ++step;
      const StepResult r = posterior ? full_vb_step(*posterior, batch, cfg, n, state, noise_rng, step)
                                     : point_step(result.model, batch, cfg, n, state, noise_rng, step);
      sum_total += r.total;
      sum_recon += r.recon;
      sum_kl += r.kl;
    }
    if (epoch % cfg.eval_every != 0) continue;

    // Each minibatch total is scaled to the full dataset, so the epoch mean
    // divided by N is a per-datapoint figure.
    const double per = static_cast<double>(nb) * static_cast<double>(n);
    TrainRow row;
    row.epoch = epoch;
    row.step = step;
    row.train_elbo = sum_total / per;
    row.recon_term = sum_recon / per;
    row.kl_term = sum_kl / per;
    row.seed = cfg.seed;
    row.val_elbo = std::nan("");
    if (val_set && val_set->size() > 0) {
      SeededRng val_rng = root.derive(1000 + epoch);
      const VaeModel scored = posterior ? posterior->mean_model() : result.model;
      row.val_elbo = evaluate(*val_set, scored, eval_cfg, val_rng).elbo_per_datapoint;
    }
    if (cfg.record_wall_time) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    result.log.rows.push_back(row);
  }

  if (posterior) {
    result.model = posterior->mean_model();
    result.posterior = std::move(posterior);
  }
  SeededRng eval_rng = root.derive(3);
  result.final_train = evaluate(train_set, result.model, eval_cfg, eval_rng);
  return result;
}

}  // namespace vaelab
