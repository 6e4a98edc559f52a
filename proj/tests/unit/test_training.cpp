#include <gtest/gtest.h>

#include <cmath>

#include "toy_models.hpp"
#include "vaelab/errors.hpp"
#include "vaelab/training.hpp"

using namespace vaelab;

namespace {

ParameterSet one_param(double v) {
  ParameterSet p;
  p.add({"w", Tensor::vector({v}), true});
  return p;
}

GradientMap grad(double g) { return {{"w", Tensor::vector({g})}}; }

Dataset synthetic(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_points = n;
  spec.seed = seed;
  return generate_synthetic(spec).data;
}

MlpConfig mlp(std::size_t dx = 8, std::size_t dh = 16, std::size_t dz = 2) {
  MlpConfig c;
  c.input_dim = dx;
  c.hidden_dims = {dh};
  c.latent_dim = dz;
  return c;
}

TrainConfig quick(std::size_t epochs, std::uint64_t seed = 1) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 20;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST(Adagrad, ZeroGradientChangesNothing) {
  ParameterSet p = one_param(0.7);
  AdagradState s;
  adagrad_step(p, grad(0.0), s, 0.1);
  EXPECT_EQ(p.value("w")[0], 0.7);
  EXPECT_EQ(s.accum.at("w")[0], 0.0);
  adagrad_step(p, grad(2.0), s, 0.1);
  const double g_before = s.accum.at("w")[0];
  const double p_before = p.value("w")[0];
  adagrad_step(p, grad(0.0), s, 0.1);
  EXPECT_EQ(s.accum.at("w")[0], g_before);
  EXPECT_EQ(p.value("w")[0], p_before);
}

TEST(Adagrad, HandEvaluatedSteps) {
  ParameterSet p = one_param(0.0);
  AdagradState s;
  adagrad_step(p, grad(1.0), s, 0.1);
  EXPECT_DOUBLE_EQ(p.value("w")[0], -0.1 / (1.0 + 1e-8));
  const double after_first = p.value("w")[0];
  adagrad_step(p, grad(1.0), s, 0.1);
  EXPECT_NEAR(after_first - p.value("w")[0], 0.1 / std::sqrt(2.0), 1e-9);
  EXPECT_EQ(s.accum.at("w")[0], 2.0);
}

TEST(Adagrad, KeyOrShapeMismatch) {
  ParameterSet p = one_param(0.0);
  AdagradState s;
  EXPECT_THROW(adagrad_step(p, {{"v", Tensor::vector({1.0})}}, s, 0.1), ContractError);
  EXPECT_THROW(adagrad_step(p, {}, s, 0.1), ContractError);
  GradientMap extra = grad(1.0);
  extra.emplace("v", Tensor::vector({1.0}));
  EXPECT_THROW(adagrad_step(p, extra, s, 0.1), ContractError);
  EXPECT_THROW(adagrad_step(p, {{"w", Tensor::vector({1.0, 2.0})}}, s, 0.1), ShapeError);
}

TEST(Adagrad, AccumulatorAndEffectiveStepAreMonotone) {
  ParameterSet p;
  p.add({"a", Tensor::zeros({3, 2}), true});
  AdagradState s;
  SeededRng rng(1);
  Tensor prev_g = Tensor::zeros({3, 2});
  for (int step = 0; step < 200; ++step) {
    GradientMap g{{"a", sample_std_normal({3, 2}, rng)}};
    if (step % 7 == 0) g.at("a") = Tensor::zeros({3, 2});
    adagrad_step(p, g, s, 0.05);
    const Tensor& acc = s.accum.at("a");
    for (std::size_t i = 0; i < acc.numel(); ++i) {
      ASSERT_GE(acc[i], prev_g[i]);
      // lr / (sqrt(G) + eps) is non-increasing exactly when G is.
      ASSERT_LE(0.05 / (std::sqrt(acc[i]) + s.epsilon), 0.05 / (std::sqrt(prev_g[i]) + s.epsilon));
    }
    prev_g = acc;
  }
}

TEST(EpochBatches, WithoutReplacementCoversEveryPointOnce) {
  SeededRng rng(2);
  for (std::size_t m : {1u, 7u, 20u, 100u}) {
    const auto batches = epoch_batches(100, m, false, rng);
    EXPECT_EQ(batches.size(), (100 + m - 1) / m);
    std::vector<int> seen(100, 0);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      if (b + 1 < batches.size()) EXPECT_EQ(batches[b].size(), m);
      for (auto i : batches[b]) ++seen[i];
    }
    for (int c : seen) EXPECT_EQ(c, 1);
  }
  EXPECT_THROW(epoch_batches(10, 11, false, rng), ContractError);
  EXPECT_THROW(epoch_batches(10, 0, false, rng), ContractError);
}

TEST(EpochBatches, WithReplacementDrawsFullBatches) {
  SeededRng rng(3);
  const auto batches = epoch_batches(50, 20, true, rng);
  ASSERT_EQ(batches.size(), 3u);
  for (const auto& b : batches) {
    EXPECT_EQ(b.size(), 20u);
    for (auto i : b) EXPECT_LT(i, 50u);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig tc = quick(1);
  EXPECT_THROW(tc.validate(10), ContractError);  // batch 20 > N
  EXPECT_NO_THROW(tc.validate(20));
  tc.learning_rate = 0.0;
  EXPECT_THROW(tc.validate(20), ContractError);
  tc = quick(1);
  tc.eval_every = 0;
  EXPECT_THROW(tc.validate(20), ContractError);
}

TEST(Train, SameSeedGivesIdenticalLogs) {
  const Dataset ds = synthetic(100, 1);
  const Dataset val = synthetic(40, 2);
  const TrainResult a = train(ds, val, mlp(), Likelihood::gaussian, quick(5));
  const TrainResult b = train(ds, val, mlp(), Likelihood::gaussian, quick(5));
  EXPECT_EQ(a.log, b.log);
  EXPECT_EQ(a.log.to_csv(), b.log.to_csv());
  EXPECT_EQ(a.model, b.model);
  const TrainResult c = train(ds, val, mlp(), Likelihood::gaussian, quick(5, 2));
  EXPECT_NE(a.log.to_csv(), c.log.to_csv());
}

TEST(Train, ZeroEpochsReturnsInitializedModel) {
  const Dataset ds = synthetic(40, 3);
  const TrainResult r = train(ds, std::nullopt, mlp(), Likelihood::gaussian, quick(0, 9));
  EXPECT_TRUE(r.log.rows.empty());
  SeededRng init = SeededRng(9).derive(0);
  EXPECT_EQ(r.model, init_model(mlp(), Likelihood::gaussian, init));
  EXPECT_EQ(r.log.to_csv(), std::string(TrainLog::kCsvHeader) + "\n");
  EXPECT_EQ(r.initial_train.elbo, r.final_train.elbo);
}

TEST(Train, LogRowsFollowEvalEvery) {
  const Dataset ds = synthetic(50, 4);
  TrainConfig tc = quick(10);
  tc.eval_every = 3;
  const TrainResult r = train(ds, synthetic(10, 5), mlp(), Likelihood::gaussian, tc);
  ASSERT_EQ(r.log.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.log.rows[i].epoch, 3 * (i + 1));
    EXPECT_EQ(r.log.rows[i].step, 3 * (i + 1) * 3);  // ceil(50 / 20) = 3 steps per epoch
    EXPECT_EQ(r.log.rows[i].wall_ms, 0.0);
    EXPECT_EQ(r.log.rows[i].seed, 1u);
    EXPECT_TRUE(std::isfinite(r.log.rows[i].val_elbo));
    EXPECT_NEAR(r.log.rows[i].train_elbo, r.log.rows[i].recon_term - r.log.rows[i].kl_term, 1e-9);
  }
}

TEST(Train, MissingValidationSetLogsNan) {
  const TrainResult r = train(synthetic(40, 6), std::nullopt, mlp(), Likelihood::gaussian, quick(1));
  ASSERT_EQ(r.log.rows.size(), 1u);
  EXPECT_TRUE(std::isnan(r.log.rows[0].val_elbo));
  EXPECT_NE(r.log.to_csv().find(",nan,"), std::string::npos);
}

TEST(Train, NonFiniteLossAbortsNamingStepAndTerm) {
  Dataset ds = synthetic(40, 7);
  ds.x[5] = std::nan("");
  TrainConfig tc = quick(2);
  tc.batch_size = 40;
  try {
    train(ds, std::nullopt, mlp(), Likelihood::gaussian, tc);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("reconstruction term"), std::string::npos) << msg;
  }
}

TEST(Train, DimensionMismatchIsShapeError) {
  EXPECT_THROW(train(synthetic(40, 8), std::nullopt, mlp(5), Likelihood::gaussian, quick(1)), ShapeError);
}

TEST(Train, SmokeRunGainsAtLeastFiveNats) {
  const Dataset ds = synthetic(500, 11);
  TrainConfig tc = quick(200, 5);
  tc.eval_every = 50;
  const TrainResult r = train(ds, std::nullopt, mlp(8, 16, 2), Likelihood::gaussian, tc);
  EXPECT_GE(r.final_train.elbo_per_datapoint - r.initial_train.elbo_per_datapoint, 5.0)
      << r.initial_train.elbo_per_datapoint << " -> " << r.final_train.elbo_per_datapoint;
  for (const auto& row : r.log.rows) EXPECT_TRUE(std::isfinite(row.train_elbo));
}

TEST(Train, FullVbModeReturnsPosteriorAndFiniteLog) {
  const Dataset ds = synthetic(60, 12);
  TrainConfig tc = quick(3);
  tc.mode = TrainConfig::full_vb;
  const TrainResult r = train(ds, synthetic(20, 13), mlp(), Likelihood::gaussian, tc);
  ASSERT_TRUE(r.posterior.has_value());
  EXPECT_EQ(r.model, r.posterior->mean_model());
  ASSERT_EQ(r.log.rows.size(), 3u);
  for (const auto& row : r.log.rows) {
    EXPECT_TRUE(std::isfinite(row.train_elbo));
    EXPECT_TRUE(std::isfinite(row.val_elbo));
  }
}

TEST(Train, InitialModelIsUsedAndChecked) {
  const Dataset ds = synthetic(40, 14);
  SeededRng rng(15);
  const VaeModel start = init_model(mlp(), Likelihood::gaussian, rng);
  const TrainResult r = train(ds, std::nullopt, mlp(), Likelihood::gaussian, quick(0), start);
  EXPECT_EQ(r.model, start);
  EXPECT_THROW(train(ds, std::nullopt, mlp(8, 10, 2), Likelihood::gaussian, quick(0), start), ContractError);
}

TEST(Evaluate, DeterministicAndConsistentWithObjectives) {
  const Dataset ds = synthetic(130, 16);
  SeededRng init(17);
  const VaeModel m = init_model(mlp(), Likelihood::gaussian, init);
  const EvalConfig cfg{1, 50};
  SeededRng a(18), b(18);
  const Metrics ma = evaluate(ds, m, cfg, a);
  const Metrics mb = evaluate(ds, m, cfg, b);
  EXPECT_EQ(ma.elbo, mb.elbo);
  EXPECT_EQ(ma.mse, mb.mse);

  SeededRng direct(18);
  double elbo = 0.0;
  for (std::size_t start = 0; start < ds.size(); start += 50) {
    const Tensor chunk = ds.x.row_slice(start, std::min(ds.size(), start + 50));
    elbo += elbo_estimate(m, chunk, ObjectiveConfig{}, direct).total;
  }
  SeededRng unused(0);
  EXPECT_NEAR(ma.elbo, elbo, 1e-12 * std::abs(elbo));
  EXPECT_NEAR(ma.mse, reconstruction_mse(m, ds.x, DecodeMode::posterior_mean(), unused), 1e-12);
  EXPECT_EQ(ma.n, 130u);
  EXPECT_DOUBLE_EQ(ma.elbo_per_datapoint, ma.elbo / 130.0);
}

TEST(Evaluate, PerfectModelScoresZero) {
  const std::vector<double> row{0, 1, 1, 0};
  const VaeModel m = oracle::perfect_bernoulli_model(row);
  Dataset ds{Tensor::matrix({{0, 1, 1, 0}, {0, 1, 1, 0}}), PixelRange::binary, "perfect", Split::test, {2, 2}, {}};
  SeededRng rng(19);
  const Metrics mt = evaluate(ds, m, {}, rng);
  EXPECT_NEAR(mt.elbo, 0.0, 1e-6 * 8);
  EXPECT_NEAR(mt.mse, 0.0, 1e-40);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-2.5), "-2.5");
  EXPECT_EQ(format_double(std::nan("")), "nan");
  EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);
}
