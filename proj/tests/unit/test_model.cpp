#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vaelab/distributions.hpp"
#include "vaelab/errors.hpp"
#include "vaelab/model.hpp"

using namespace vaelab;

namespace {

MlpConfig toy_config(std::size_t dx, std::vector<std::size_t> hidden, std::size_t dz,
                     Activation act = Activation::tanh) {
  MlpConfig c;
  c.input_dim = dx;
  c.hidden_dims = std::move(hidden);
  c.latent_dim = dz;
  c.activation = act;
  return c;
}

void set(VaeModel& m, const std::string& id, Tensor v) { m.params.at(id).value = std::move(v); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(MlpConfig, Validation) {
  EXPECT_THROW(toy_config(0, {4}, 2).validate(), ContractError);
  EXPECT_THROW(toy_config(3, {}, 2).validate(), ContractError);
  EXPECT_THROW(toy_config(3, {4, 0}, 2).validate(), ContractError);
  EXPECT_THROW(toy_config(3, {4}, 0).validate(), ContractError);
  EXPECT_NO_THROW(toy_config(3, {4}, 2).validate());
}

TEST(MlpConfig, ParseNames) {
  EXPECT_EQ(parse_activation("relu"), Activation::relu);
  EXPECT_EQ(parse_likelihood("gaussian"), Likelihood::gaussian);
  EXPECT_THROW(parse_activation("gelu"), ContractError);
  EXPECT_EQ(to_string(Activation::sigmoid), "sigmoid");
}

TEST(InitModel, SameSeedSameParameters) {
  const MlpConfig c = toy_config(5, {4, 3}, 2);
  SeededRng a(1), b(1), other(2);
  EXPECT_EQ(init_model(c, Likelihood::gaussian, a), init_model(c, Likelihood::gaussian, b));
  EXPECT_NE(init_model(c, Likelihood::gaussian, a), init_model(c, Likelihood::gaussian, other));
}

TEST(InitModel, PaperConfigurationParameterCount) {
  SeededRng rng(3);
  const VaeModel m = init_model(toy_config(784, {500}, 10), Likelihood::bernoulli, rng);
  const std::size_t expected = 784 * 500 + 500 + 2 * (500 * 10 + 10) + 10 * 500 + 500 + 500 * 784 + 784;
  EXPECT_EQ(m.params.scalar_count(), expected);
  EXPECT_EQ(m.params.size(), 10u);
}

TEST(InitModel, GlorotStatisticsAndZeroBiases) {
  SeededRng rng(4);
  const VaeModel m = init_model(toy_config(784, {500}, 10), Likelihood::bernoulli, rng);
  for (const auto& p : m.params) {
    if (!is_weight_id(p.id)) {
      for (double v : p.value.data()) ASSERT_EQ(v, 0.0) << p.id;
      continue;
    }
    const double fan_in = static_cast<double>(p.value.shape()[0]);
    const double fan_out = static_cast<double>(p.value.shape()[1]);
    const double sd = std::sqrt(2.0 / (fan_in + fan_out));
    const double n = static_cast<double>(p.value.numel());
    double s = 0, s2 = 0;
    for (double v : p.value.data()) {
      s += v;
      s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 3.0 * sd / std::sqrt(n)) << p.id;
    // Sample variance has standard error var * sqrt(2 / n).
    EXPECT_NEAR(s2 / n, sd * sd, 4.0 * sd * sd * std::sqrt(2.0 / n)) << p.id;
  }
}

TEST(ParameterLayout, ShapesFollowConfig) {
  const auto bern = parameter_layout(toy_config(7, {5, 3}, 2), Likelihood::bernoulli);
  std::map<std::string, Shape> shapes(bern.begin(), bern.end());
  EXPECT_EQ(shapes.at("enc.h0.W"), (Shape{7, 5}));
  EXPECT_EQ(shapes.at("enc.h1.W"), (Shape{5, 3}));
  EXPECT_EQ(shapes.at("enc.mu.W"), (Shape{3, 2}));
  EXPECT_EQ(shapes.at("enc.logvar.b"), (Shape{1, 2}));
  EXPECT_EQ(shapes.at("dec.h0.W"), (Shape{2, 3}));
  EXPECT_EQ(shapes.at("dec.h1.W"), (Shape{3, 5}));
  EXPECT_EQ(shapes.at("dec.out.W"), (Shape{5, 7}));
  EXPECT_EQ(shapes.at("dec.out.b"), (Shape{1, 7}));

  const auto gauss = parameter_layout(toy_config(7, {5}, 2), Likelihood::gaussian);
  std::map<std::string, Shape> g(gauss.begin(), gauss.end());
  EXPECT_EQ(g.at("dec.mu.W"), (Shape{5, 7}));
  EXPECT_EQ(g.at("dec.logvar.W"), (Shape{5, 7}));
  EXPECT_FALSE(g.contains("dec.out.W"));
}

TEST(Encode, ZeroNetworkGivesPrior) {
  const VaeModel m = zero_model(toy_config(3, {4}, 2), Likelihood::bernoulli);
  Tape tape;
  const ModelView v = bind(tape, m);
  const GaussianParams q = encode(v, tape.constant(Tensor::matrix({{1, -2, 3}, {0.5, 0.5, 0.5}})));
  EXPECT_EQ(q.mean.value(), Tensor::zeros({2, 2}));
  EXPECT_EQ(q.log_var.value(), Tensor::zeros({2, 2}));
}

TEST(Encode, IdenticalRowsGiveIdenticalOutputs) {
  SeededRng rng(5);
  const VaeModel m = init_model(toy_config(3, {4}, 2), Likelihood::bernoulli, rng);
  Tape tape;
  const GaussianParams q = encode(bind(tape, m), tape.constant(Tensor::matrix({{0.2, 0.4, 0.9}, {0.2, 0.4, 0.9}})));
  EXPECT_EQ(q.mean.value().at(0, 0), q.mean.value().at(1, 0));
  EXPECT_EQ(q.mean.value().at(0, 1), q.mean.value().at(1, 1));
  EXPECT_EQ(q.log_var.value().at(0, 1), q.log_var.value().at(1, 1));
}

TEST(Encode, WrongWidthIsShapeError) {
  const VaeModel m = zero_model(toy_config(3, {4}, 2), Likelihood::bernoulli);
  Tape tape;
  EXPECT_THROW(encode(bind(tape, m), tape.constant(Tensor::zeros({2, 4}))), ShapeError);
}

TEST(Encode, HandComputedTwoTwoOneNetwork) {
  VaeModel m = zero_model(toy_config(2, {2}, 1), Likelihood::bernoulli);
  set(m, "enc.h0.W", Tensor::matrix({{0.5, -1.0}, {2.0, 0.25}}));
  set(m, "enc.h0.b", Tensor::matrix({{0.1, -0.2}}));
  set(m, "enc.mu.W", Tensor::matrix({{0.3}, {-0.4}}));
  set(m, "enc.mu.b", Tensor::matrix({{0.05}}));
  set(m, "enc.logvar.W", Tensor::matrix({{1.0}, {1.0}}));
  set(m, "enc.logvar.b", Tensor::matrix({{-0.5}}));
  Tape tape;
  const GaussianParams q = encode(bind(tape, m), tape.constant(Tensor::matrix({{1.0, 2.0}})));
  const double h0 = std::tanh(1.0 * 0.5 + 2.0 * 2.0 + 0.1);
  const double h1 = std::tanh(1.0 * -1.0 + 2.0 * 0.25 - 0.2);
  EXPECT_NEAR(q.mean.item(), 0.3 * h0 - 0.4 * h1 + 0.05, 1e-15);
  EXPECT_NEAR(q.log_var.item(), h0 + h1 - 0.5, 1e-15);
}

TEST(DecodeBernoulli, ZeroNetworkGivesHalf) {
  const VaeModel m = zero_model(toy_config(5, {3}, 2), Likelihood::bernoulli);
  Tape tape;
  const Tensor p = decode_bernoulli(bind(tape, m), tape.constant(Tensor::matrix({{1, 2}, {-3, 4}}))).value();
  for (double v : p.data()) EXPECT_EQ(v, 0.5);
}

TEST(DecodeBernoulli, OutputsInsideUnitInterval) {
  SeededRng rng(6);
  const VaeModel m = init_model(toy_config(20, {10}, 3), Likelihood::bernoulli, rng);
  Tape tape;
  const Tensor p = decode_bernoulli(bind(tape, m), tape.constant(sample_std_normal({50, 3}, rng))).value();
  for (double v : p.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(DecodeBernoulli, HandComputedOneOneOneNetwork) {
  VaeModel m = zero_model(toy_config(1, {1}, 1), Likelihood::bernoulli);
  set(m, "dec.h0.W", Tensor::matrix({{2.0}}));
  set(m, "dec.h0.b", Tensor::matrix({{-1.0}}));
  set(m, "dec.out.W", Tensor::matrix({{3.0}}));
  set(m, "dec.out.b", Tensor::matrix({{0.5}}));
  Tape tape;
  const double p = decode_bernoulli(bind(tape, m), tape.constant(Tensor::matrix({{0.25}}))).item();
  EXPECT_NEAR(p, sigmoid(3.0 * std::tanh(2.0 * 0.25 - 1.0) + 0.5), 1e-15);
}

TEST(DecodeGaussian, ZeroNetworkAndShapes) {
  const VaeModel m = zero_model(toy_config(5, {3}, 2), Likelihood::gaussian);
  Tape tape;
  const GaussianParams d = decode_gaussian(bind(tape, m), tape.constant(Tensor::zeros({4, 2})));
  EXPECT_EQ(d.mean.value(), Tensor::zeros({4, 5}));
  EXPECT_EQ(d.log_var.value(), Tensor::zeros({4, 5}));
}

TEST(DecodeGaussian, HandComputedNetworkAndClamp) {
  VaeModel m = zero_model(toy_config(1, {1}, 1, Activation::relu), Likelihood::gaussian);
  set(m, "dec.h0.W", Tensor::matrix({{2.0}}));
  set(m, "dec.h0.b", Tensor::matrix({{0.5}}));
  set(m, "dec.mu.W", Tensor::matrix({{-1.5}}));
  set(m, "dec.mu.b", Tensor::matrix({{0.25}}));
  set(m, "dec.logvar.W", Tensor::matrix({{100.0}}));
  Tape tape;
  const GaussianParams d = decode_gaussian(bind(tape, m), tape.constant(Tensor::matrix({{1.0}, {-1.0}})));
  // Row 0: h = relu(2.5) = 2.5. Row 1: h = relu(-1.5) = 0.
  EXPECT_NEAR(d.mean.value()[0], -1.5 * 2.5 + 0.25, 1e-15);
  EXPECT_NEAR(d.mean.value()[1], 0.25, 1e-15);
  EXPECT_EQ(d.log_var.value()[0], kDecoderLogVarMax);
  EXPECT_EQ(d.log_var.value()[1], 0.0);
}

TEST(Decode, WrongLikelihoodIsContractError) {
  const VaeModel b = zero_model(toy_config(3, {2}, 1), Likelihood::bernoulli);
  const VaeModel g = zero_model(toy_config(3, {2}, 1), Likelihood::gaussian);
  Tape tape;
  Var z = tape.constant(Tensor::zeros({1, 1}));
  EXPECT_THROW(decode_gaussian(bind(tape, b), z), ContractError);
  EXPECT_THROW(decode_bernoulli(bind(tape, g), z), ContractError);
}

TEST(Model, DepthsOneToFourConstructAndRun) {
  for (std::size_t depth = 1; depth <= 4; ++depth) {
    SeededRng rng(depth);
    const VaeModel m = init_model(toy_config(6, std::vector<std::size_t>(depth, 5), 2), Likelihood::bernoulli, rng);
    EXPECT_EQ(m.params.size(), 2 * depth + 4 + 2 * depth + 2);
    Tape tape;
    const ModelView v = bind(tape, m);
    const GaussianParams q = encode(v, tape.constant(Tensor::full({3, 6}, 0.5)));
    EXPECT_EQ(decoder_mean(v, q.mean).shape(), (Shape{3, 6}));
  }
}

TEST(Model, EncodeDecodeGradientsPassFiniteDifferences) {
  for (Likelihood lik : {Likelihood::bernoulli, Likelihood::gaussian}) {
    for (Activation act : {Activation::tanh, Activation::sigmoid, Activation::relu}) {
      SeededRng rng(21);
      VaeModel m = init_model(toy_config(3, {4}, 2, act), lik, rng);
      // Nonzero biases keep relu pre-activations away from the kink at exactly 0.
      for (auto& p : m.params) {
        if (!is_weight_id(p.id)) {
          for (double& v : p.value.data()) v = 0.1 + 0.1 * rng.uniform();
        }
      }
      Tensor x = Tensor::zeros({2, 3});
      for (double& v : x.data()) v = rng.uniform();
      const oracle::LossBuilder loss = [&](Tape& t, const std::map<std::string, Var>& leaves) {
        ModelView v{m.config, m.likelihood, leaves};
        const GaussianParams q = encode(v, t.constant(x));
        return reduce_sum(log_likelihood_rows(v, t.constant(x), q.mean)) + reduce_sum(square(q.log_var));
      };
      const auto r = oracle::gradcheck(m.params, loss);
      EXPECT_LT(r.max_rel_error, 1e-4) << to_string(lik) << " " << to_string(act) << " worst " << r.worst_id << "[" << r.worst_index << "] " << r.analytic << " vs " << r.numeric;
    }
  }
}
