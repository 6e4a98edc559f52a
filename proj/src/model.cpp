#include "vaelab/model.hpp"

#include <cmath>

#include "vaelab/errors.hpp"

namespace vaelab {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "unknown";
}

std::string to_string(Likelihood l) { return l == Likelihood::bernoulli ? "bernoulli" : "gaussian"; }

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "relu") return Activation::relu;
  throw ContractError("unknown activation '" + name + "'");
}

Likelihood parse_likelihood(const std::string& name) {
  if (name == "bernoulli") return Likelihood::bernoulli;
  if (name == "gaussian") return Likelihood::gaussian;
  throw ContractError("unknown likelihood '" + name + "'");
}

void MlpConfig::validate() const {
  if (input_dim == 0 || latent_dim == 0) throw ContractError("input_dim and latent_dim must be positive");
  if (hidden_dims.empty()) throw ContractError("at least one hidden layer is required");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ContractError("hidden layer widths must be positive");
  }
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const MlpConfig& config, Likelihood likelihood) {
  config.validate();
  std::vector<std::pair<std::string, Shape>> layout;
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    layout.emplace_back(prefix + ".W", Shape{in, out});
    layout.emplace_back(prefix + ".b", Shape{1, out});
  };

  std::size_t width = config.input_dim;
  for (std::size_t i = 0; i < config.hidden_dims.size(); ++i) {
    dense("enc.h" + std::to_string(i), width, config.hidden_dims[i]);
    width = config.hidden_dims[i];
  }
  dense("enc.mu", width, config.latent_dim);
  dense("enc.logvar", width, config.latent_dim);

  width = config.latent_dim;
  const std::size_t depth = config.hidden_dims.size();
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t out = config.hidden_dims[depth - 1 - i];
    dense("dec.h" + std::to_string(i), width, out);
    width = out;
  }
  if (likelihood == Likelihood::bernoulli) {
    dense("dec.out", width, config.input_dim);
  } else {
    dense("dec.mu", width, config.input_dim);
    dense("dec.logvar", width, config.input_dim);
  }
  return layout;
}

bool is_weight_id(const std::string& id) { return id.size() >= 2 && id.compare(id.size() - 2, 2, ".W") == 0; }

VaeModel zero_model(const MlpConfig& config, Likelihood likelihood) {
  VaeModel model{config, likelihood, {}};
  for (auto& [id, shape] : parameter_layout(config, likelihood)) {
    model.params.add({id, Tensor::zeros(shape), true});
  }
  return model;
}

VaeModel init_model(const MlpConfig& config, Likelihood likelihood, SeededRng& rng) {
  VaeModel model = zero_model(config, likelihood);
  for (auto& p : model.params) {
    if (!is_weight_id(p.id)) continue;
    const auto& s = p.value.shape();
    const double stddev = std::sqrt(2.0 / static_cast<double>(s[0] + s[1]));
    for (double& v : p.value.data()) v = stddev * rng.normal();
  }
  return model;
}

Var ModelView::param(const std::string& id) const {
  auto it = params.find(id);
  if (it == params.end()) throw ContractError("model has no parameter '" + id + "'");
  return it->second;
}

ModelView bind(Tape& tape, const VaeModel& model) {
  ModelView view{model.config, model.likelihood, {}};
  for (const auto& p : model.params) view.params.emplace(p.id, tape.parameter(p));
  return view;
}

namespace {

Var activate(Activation a, Var x) {
  switch (a) {
    case Activation::tanh: return tanh(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::relu: return relu(x);
  }
  throw ContractError("unknown activation");
}

Var dense(const ModelView& m, const std::string& prefix, Var x) {
  return matmul(x, m.param(prefix + ".W")) + m.param(prefix + ".b");
}

Var decoder_hidden(const ModelView& m, Var z) {
  if (z.value().rank() != 2 || z.shape()[1] != m.config.latent_dim) {
    throw ShapeError("decoder input " + to_string(z.shape()) + " does not have " +
                     std::to_string(m.config.latent_dim) + " columns");
  }
  Var h = z;
  for (std::size_t i = 0; i < m.config.hidden_dims.size(); ++i) {
    h = activate(m.config.activation, dense(m, "dec.h" + std::to_string(i), h));
  }
  return h;
}

}  // namespace

GaussianParams encode(const ModelView& m, Var x) {
  if (x.value().rank() != 2 || x.shape()[1] != m.config.input_dim) {
    throw ShapeError("encoder input " + to_string(x.shape()) + " does not have " +
                     std::to_string(m.config.input_dim) + " columns");
  }
  Var h = x;
  for (std::size_t i = 0; i < m.config.hidden_dims.size(); ++i) {
    h = activate(m.config.activation, dense(m, "enc.h" + std::to_string(i), h));
  }
  return {dense(m, "enc.mu", h), dense(m, "enc.logvar", h)};
}

Var decode_bernoulli(const ModelView& m, Var z) {
  if (m.likelihood != Likelihood::bernoulli) throw ContractError("decode_bernoulli on a gaussian model");
  return sigmoid(dense(m, "dec.out", decoder_hidden(m, z)));
}

GaussianParams decode_gaussian(const ModelView& m, Var z) {
  if (m.likelihood != Likelihood::gaussian) throw ContractError("decode_gaussian on a bernoulli model");
  Var h = decoder_hidden(m, z);
  return {dense(m, "dec.mu", h), clamp(dense(m, "dec.logvar", h), kDecoderLogVarMin, kDecoderLogVarMax)};
}

Var decoder_mean(const ModelView& m, Var z) {
  return m.likelihood == Likelihood::bernoulli ? decode_bernoulli(m, z) : decode_gaussian(m, z).mean;
}

Var log_likelihood_rows(const ModelView& m, Var x, Var z) {
  if (m.likelihood == Likelihood::bernoulli) return log_prob_bernoulli_rows(x, decode_bernoulli(m, z));
  return log_prob_gaussian_rows(x, decode_gaussian(m, z));
}

}  // namespace vaelab
