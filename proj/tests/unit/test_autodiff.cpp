#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "vaelab/autodiff.hpp"
#include "vaelab/distributions.hpp"
#include "vaelab/errors.hpp"
#include "vaelab/rng.hpp"

using namespace vaelab;
using vaelab::oracle::gradcheck;

namespace {

Tensor random_tensor(const Shape& shape, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Values kept at least `gap` away from each kink in `kinks`.
Tensor away_from(const Shape& shape, SeededRng& rng, std::vector<double> kinks, double gap) {
  Tensor t = random_tensor(shape, rng, -2.0, 2.0);
  for (double& v : t.data()) {
    for (double k : kinks) {
      if (std::abs(v - k) < gap) v = k + (v < k ? -gap : gap);
    }
  }
  return t;
}

}  // namespace

TEST(Autodiff, SquareGradient) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::scalar(3.0));
  const GradientMap g = tape.backward(square(x));
  EXPECT_EQ(g.at("x").item(), 6.0);
}

TEST(Autodiff, SigmoidSumGradientAtZero) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::zeros({4}));
  const GradientMap g = tape.backward(reduce_sum(sigmoid(x)));
  for (double v : g.at("x").data()) EXPECT_EQ(v, 0.25);
}

TEST(Autodiff, ElementwiseValues) {
  Tape tape;
  EXPECT_EQ(sigmoid(tape.constant(Tensor::scalar(0))).item(), 0.5);
  EXPECT_EQ(tanh(tape.constant(Tensor::scalar(0))).item(), 0.0);
  EXPECT_NEAR(exp(tape.constant(Tensor::scalar(1))).item(), 2.718281828459045, 1e-15);
  EXPECT_EQ(exp(tape.constant(Tensor::scalar(1))).item(), std::exp(1.0));
}

TEST(Autodiff, LogOfNonPositiveIsDomainError) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(log(tape.constant(Tensor::vector({-1.0}))), DomainError);
}

TEST(Autodiff, BinaryShapeMismatchIsShapeError) {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({3, 2}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, b), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Autodiff, ReduceSumAxisOutOfRange) {
  Tape tape;
  EXPECT_THROW(reduce_sum(tape.constant(Tensor::zeros({2, 2})), 2), ShapeError);
}

TEST(Autodiff, NonScalarLossIsContractError) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::zeros({3}));
  EXPECT_THROW(tape.backward(square(x)), ContractError);
}

TEST(Autodiff, InputsReferenceEarlierNodes) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::vector({1, 2}));
  Var y = reduce_sum(square(x) * x + exp(x));
  (void)y;
  for (NodeId id = 0; id < tape.size(); ++id) {
    for (NodeId in : tape.node(id).inputs) EXPECT_LT(in, id);
  }
}

TEST(Autodiff, ReplayIsBitIdentical) {
  SeededRng rng(5);
  Tape tape;
  Var w = tape.parameter("w", random_tensor({3, 4}, rng));
  Var x = tape.constant(random_tensor({2, 3}, rng));
  Var b = tape.parameter("b", random_tensor({1, 4}, rng));
  Var h = tanh(matmul(x, w) + b);
  reduce_sum(softplus(h) * sigmoid(h) - log(exp(h) + 1.0));
  const std::vector<Tensor> replayed = tape.replay();
  ASSERT_EQ(replayed.size(), tape.size());
  for (NodeId id = 0; id < tape.size(); ++id) EXPECT_EQ(replayed[id], tape.node(id).value);
}

TEST(Autodiff, ZeroPathParametersGetExactZeros) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::vector({1, 2}));
  tape.parameter("unused", Tensor::zeros({2, 2}));
  ParameterSet params;
  params.add({"x", Tensor::vector({1, 2}), true});
  params.add({"unused", Tensor::zeros({2, 2}), true});
  params.add({"absent", Tensor::zeros({3}), true});
  const GradientMap g = tape.backward(reduce_sum(square(x)), params);
  EXPECT_EQ(g.at("unused"), Tensor::zeros({2, 2}));
  EXPECT_EQ(g.at("absent"), Tensor::zeros({3}));
  EXPECT_EQ(g.at("x"), Tensor::vector({2, 4}));
}

TEST(Autodiff, FrozenParametersAreSkipped) {
  Tape tape;
  Var x = tape.parameter("x", Tensor::scalar(2.0), false);
  const GradientMap g = tape.backward(square(x));
  EXPECT_FALSE(g.contains("x"));
}

TEST(Autodiff, RepeatedParameterAccumulates) {
  Tape tape;
  Var a = tape.parameter("x", Tensor::scalar(3.0));
  Var b = tape.parameter("x", Tensor::scalar(3.0));
  const GradientMap g = tape.backward(a * b);
  EXPECT_EQ(g.at("x").item(), 6.0);
}

TEST(Autodiff, DuplicateIdsInParameterSetRejected) {
  ParameterSet p;
  p.add({"w", Tensor::scalar(1.0), true});
  EXPECT_THROW(p.add({"w", Tensor::scalar(2.0), true}), ContractError);
}

TEST(Autodiff, Linearity) {
  SeededRng rng(11);
  const Tensor xv = random_tensor({2, 3}, rng);
  const double a = 0.7, b = -1.3;
  auto f = [](Var x) { return reduce_sum(tanh(x) * x); };
  auto g = [](Var x) { return reduce_sum(exp(x)); };

  Tape t1;
  Var x1 = t1.parameter("x", xv);
  const Tensor combined = t1.backward(a * f(x1) + b * g(x1)).at("x");
  Tape t2;
  Var x2 = t2.parameter("x", xv);
  const Tensor gf = t2.backward(f(x2)).at("x");
  Tape t3;
  Var x3 = t3.parameter("x", xv);
  const Tensor gg = t3.backward(g(x3)).at("x");
  for (std::size_t i = 0; i < combined.numel(); ++i) EXPECT_NEAR(combined[i], a * gf[i] + b * gg[i], 1e-14);
}

TEST(Autodiff, Determinism) {
  auto run = [] {
    SeededRng rng(3);
    Tape tape;
    Var w = tape.parameter("w", random_tensor({3, 3}, rng));
    Var x = tape.constant(random_tensor({4, 3}, rng));
    return tape.backward(reduce_sum(sigmoid(matmul(x, w))));
  };
  EXPECT_EQ(run(), run());
}

// Every op kind against central differences on 100 random draws.
TEST(Autodiff, GradientCheckEveryOpKind) {
  using oracle::LossBuilder;
  struct Case {
    const char* name;
    std::function<Var(Var)> op;
    std::vector<double> kinks;
    bool positive;
  };
  const std::vector<Case> unary = {
      {"neg", [](Var x) { return -x; }, {}, false},
      {"scale", [](Var x) { return 2.5 * x; }, {}, false},
      {"add_scalar", [](Var x) { return x + 1.5; }, {}, false},
      {"exp", [](Var x) { return exp(x); }, {}, false},
      {"log", [](Var x) { return log(x); }, {}, true},
      {"tanh", [](Var x) { return tanh(x); }, {}, false},
      {"sigmoid", [](Var x) { return sigmoid(x); }, {}, false},
      {"relu", [](Var x) { return relu(x); }, {0.0}, false},
      {"softplus", [](Var x) { return softplus(x); }, {}, false},
      {"square", [](Var x) { return square(x); }, {}, false},
      {"clamp", [](Var x) { return clamp(x, -0.5, 0.8); }, {-0.5, 0.8}, false},
      {"reduce_sum_axis0", [](Var x) { return reduce_sum(x, 0); }, {}, false},
      {"reduce_sum_axis1", [](Var x) { return reduce_sum(x, 1); }, {}, false},
      {"tile_rows", [](Var x) { return tile_rows(x, 3); }, {}, false},
  };
  for (const auto& c : unary) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      SeededRng rng(seed, 17);
      ParameterSet p;
      p.add({"x", c.positive ? random_tensor({3, 2}, rng, 0.2, 2.0) : away_from({3, 2}, rng, c.kinks, 1e-3), true});
      Tape probe;
      const Shape out = c.op(probe.constant(p.value("x"))).shape();
      const Tensor weights = random_tensor(out, rng);
      const LossBuilder loss = [&](Tape& t, const std::map<std::string, Var>& v) {
        return reduce_sum(c.op(v.at("x")) * t.constant(weights));
      };
      const auto r = gradcheck(p, loss);
      ASSERT_LT(r.max_rel_error, 1e-4) << c.name << " seed " << seed;
    }
  }

  const std::vector<std::pair<const char*, std::function<Var(Var, Var)>>> binary = {
      {"add", [](Var a, Var b) { return a + b; }},
      {"sub", [](Var a, Var b) { return a - b; }},
      {"mul", [](Var a, Var b) { return a * b; }},
  };
  const std::vector<std::pair<Shape, Shape>> shapes = {{{3, 2}, {3, 2}}, {{3, 2}, {1, 2}}, {{1, 2}, {3, 2}},
                                                       {{3, 2}, {}}};
  for (const auto& [name, op] : binary) {
    for (const auto& [sa, sb] : shapes) {
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SeededRng rng(seed, 23);
        ParameterSet p;
        p.add({"a", random_tensor(sa, rng), true});
        p.add({"b", random_tensor(sb, rng), true});
        const Tensor weights = random_tensor({3, 2}, rng);
        const oracle::LossBuilder loss = [&](Tape& t, const std::map<std::string, Var>& v) {
          return reduce_sum(op(v.at("a"), v.at("b")) * t.constant(weights));
        };
        const auto r = gradcheck(p, loss);
        ASSERT_LT(r.max_rel_error, 1e-4) << name << " " << to_string(sa) << " " << to_string(sb) << " seed " << seed;
      }
    }
  }

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SeededRng rng(seed, 29);
    ParameterSet p;
    p.add({"a", random_tensor({3, 4}, rng), true});
    p.add({"b", random_tensor({4, 2}, rng), true});
    const Tensor weights = random_tensor({3, 2}, rng);
    const oracle::LossBuilder loss = [&](Tape& t, const std::map<std::string, Var>& v) {
      return reduce_sum(matmul(v.at("a"), v.at("b")) * t.constant(weights));
    };
    ASSERT_LT(gradcheck(p, loss).max_rel_error, 1e-4) << "matmul seed " << seed;
  }
}

TEST(Autodiff, GradientCheckThreeLayerMlp) {
  SeededRng rng(99);
  ParameterSet p;
  p.add({"W1", random_tensor({4, 5}, rng), true});
  p.add({"b1", random_tensor({1, 5}, rng), true});
  p.add({"W2", random_tensor({5, 3}, rng), true});
  p.add({"b2", random_tensor({1, 3}, rng), true});
  p.add({"W3", random_tensor({3, 2}, rng), true});
  const Tensor x = random_tensor({6, 4}, rng);
  const oracle::LossBuilder loss = [&](Tape& t, const std::map<std::string, Var>& v) {
    Var h1 = tanh(matmul(t.constant(x), v.at("W1")) + v.at("b1"));
    Var h2 = sigmoid(matmul(h1, v.at("W2")) + v.at("b2"));
    return reduce_sum(softplus(matmul(h2, v.at("W3"))));
  };
  EXPECT_LT(gradcheck(p, loss).max_rel_error, 1e-4);
}
