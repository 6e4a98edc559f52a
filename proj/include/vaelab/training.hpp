#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vaelab/autodiff.hpp"
#include "vaelab/data.hpp"
#include "vaelab/full_vb.hpp"
#include "vaelab/model.hpp"
#include "vaelab/objectives.hpp"

namespace vaelab {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 100;  // M
  std::size_t samples = 1;       // L
  Estimator estimator = Estimator::b;
  double learning_rate = 0.01;
  double weight_decay = 0.0;  // lambda
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;  // a log row is written every eval_every epochs
  enum Mode { point_estimate, full_vb } mode = point_estimate;
  bool with_replacement = false;   // draw minibatches i.i.d. instead of per-epoch shuffles
  bool record_wall_time = false;   // off keeps logs byte-reproducible
  double full_vb_initial_variance = 1e-3;
  std::size_t eval_batch = 500;

  void validate(std::size_t dataset_size) const;
};

/// Per-coordinate accumulated squared gradients.
struct AdagradState {
  std::map<std::string, Tensor> accum;
  double epsilon = 1e-8;
};

/// Descent step: G += g*g; p -= lr * g / (sqrt(G) + eps). Ascent on an ELBO
/// is done by passing the gradient of the negated objective.
void adagrad_step(ParameterSet& params, const GradientMap& grads, AdagradState& state, double lr);

/// Row indices for one epoch: ceil(n / m) batches. Without replacement this is
/// a shuffled partition and the last batch may be short; with replacement each
/// batch holds m independent uniform draws.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t m, bool with_replacement,
                                                    SeededRng& rng);

struct TrainRow {
  std::size_t epoch = 0;
  std::size_t step = 0;       // optimizer steps taken so far
  double train_elbo = 0.0;    // per datapoint, averaged over the epoch's minibatches
  double val_elbo = 0.0;      // per datapoint, estimator b with L = 1; NaN without a validation set
  double recon_term = 0.0;    // per datapoint, epoch average
  double kl_term = 0.0;       // per datapoint, epoch average
  double wall_ms = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainRow&, const TrainRow&) = default;
};

struct TrainLog {
  static constexpr const char* kCsvHeader = "epoch,step,train_elbo,val_elbo,recon_term,kl_term,wall_ms,seed";
  std::vector<TrainRow> rows;

  std::string to_csv() const;
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

struct EvalConfig {
  std::size_t samples = 1;
  std::size_t batch = 500;
};

struct Metrics {
  double elbo = 0.0;               // full-dataset estimator b (sum over rows)
  double elbo_per_datapoint = 0.0;
  double mse = 0.0;                // mean-mode reconstruction
  std::size_t n = 0;
};

/// Processes the dataset in consecutive chunks of cfg.batch rows; each chunk
/// draws its latent noise from `rng` in order.
Metrics evaluate(const Dataset& ds, const VaeModel& model, const EvalConfig& cfg, SeededRng& rng);

struct TrainResult {
  VaeModel model;  // point estimate, or the posterior mean in full-VB mode
  std::optional<WeightPosterior> posterior;
  TrainLog log;
  Metrics initial_train;
  Metrics final_train;
  std::optional<Metrics> initial_val;  // starting model on the validation set, when one is given
};

/// The optimization loop: shuffle, draw a minibatch, encode, sample the
/// latent code by reparameterization, score with the configured estimator,
/// backpropagate and take an AdaGrad step. Random streams are derived from
/// train_cfg.seed: 0 initialization, 1 minibatch order, 2 estimator noise,
/// 3 initial/final evaluation, 1000 + epoch validation.
///
/// `initial` overrides the Glorot initialization (in full-VB mode it seeds
/// the posterior means). Throws NumericError on a non-finite loss or gradient.
TrainResult train(const Dataset& train_set, const std::optional<Dataset>& val_set, const MlpConfig& model_cfg,
                  Likelihood likelihood, const TrainConfig& cfg, const std::optional<VaeModel>& initial = {});

/// Shortest round-trip text for a double ("nan" for NaN).
std::string format_double(double v);

}  // namespace vaelab
