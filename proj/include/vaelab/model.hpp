#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vaelab/autodiff.hpp"
#include "vaelab/distributions.hpp"
#include "vaelab/rng.hpp"

namespace vaelab {

enum class Activation { tanh, sigmoid, relu };
enum class Likelihood { bernoulli, gaussian };

std::string to_string(Activation a);
std::string to_string(Likelihood l);
Activation parse_activation(const std::string& name);
Likelihood parse_likelihood(const std::string& name);

/// Shared encoder/decoder architecture. The encoder runs hidden_dims in
/// order; the decoder mirrors it (hidden_dims reversed).
struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{500};
  std::size_t latent_dim = 10;
  Activation activation = Activation::tanh;

  void validate() const;
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

inline constexpr double kDecoderLogVarMin = -10.0;
inline constexpr double kDecoderLogVarMax = 10.0;

/// Parameter ids, in creation order:
///   enc.h<i>.W / enc.h<i>.b          encoder hidden layers
///   enc.mu.W, enc.mu.b, enc.logvar.W, enc.logvar.b
///   dec.h<i>.W / dec.h<i>.b          decoder hidden layers
///   dec.out.W, dec.out.b             Bernoulli head, [D_h x D_x]
///   dec.mu.W, dec.mu.b, dec.logvar.W, dec.logvar.b   Gaussian heads
/// Weights are [fan_in x fan_out] and applied as h W + b; biases are [1 x fan_out].
std::vector<std::pair<std::string, Shape>> parameter_layout(const MlpConfig& config, Likelihood likelihood);

/// True for weight matrices (ids ending in ".W"), the entries that weight decay penalizes.
bool is_weight_id(const std::string& id);

struct VaeModel {
  MlpConfig config;
  Likelihood likelihood = Likelihood::bernoulli;
  ParameterSet params;

  friend bool operator==(const VaeModel&, const VaeModel&) = default;
};

/// Weights ~ N(0, 2 / (fan_in + fan_out)), biases zero.
VaeModel init_model(const MlpConfig& config, Likelihood likelihood, SeededRng& rng);
/// Every parameter zero; handy as a base for hand-built test networks.
VaeModel zero_model(const MlpConfig& config, Likelihood likelihood);

/// Model parameters as tape variables. Built by bind() for point estimates or
/// assembled from sampled weights in full variational Bayes.
struct ModelView {
  MlpConfig config;
  Likelihood likelihood = Likelihood::bernoulli;
  std::map<std::string, Var> params;

  Var param(const std::string& id) const;
};

ModelView bind(Tape& tape, const VaeModel& model);

/// mu_phi(x) and log sigma^2_phi(x), each [M x D_z].
GaussianParams encode(const ModelView& model, Var x);
/// sigmoid(h W + b), [M x D_x].
Var decode_bernoulli(const ModelView& model, Var z);
/// Mean and clamped log-variance heads over data space, each [M x D_x].
GaussianParams decode_gaussian(const ModelView& model, Var z);
/// Bernoulli probabilities or Gaussian mean, whichever the likelihood defines.
Var decoder_mean(const ModelView& model, Var z);
/// log p(x | z) per row.
Var log_likelihood_rows(const ModelView& model, Var x, Var z);

}  // namespace vaelab
