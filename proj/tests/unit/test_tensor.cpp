#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "vaelab/errors.hpp"
#include "vaelab/tensor.hpp"

using namespace vaelab;

TEST(Tensor, ShapeAndDataLengthMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  const Tensor t({2, 3}, std::vector<double>(6, 1.5));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Tensor, DefaultIsRankZeroZero) {
  const Tensor t;
  EXPECT_TRUE(t.is_scalar());
  EXPECT_EQ(t.item(), 0.0);
}

TEST(Tensor, ItemRejectsMultiElementTensors) { EXPECT_THROW(Tensor::vector({1, 2}).item(), ShapeError); }

TEST(Tensor, RowSliceAndGather) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(m.row_slice(1, 3), Tensor::matrix({{3, 4}, {5, 6}}));
  const std::vector<std::size_t> idx{2, 0, 2};
  EXPECT_EQ(m.gather_rows(idx), Tensor::matrix({{5, 6}, {1, 2}, {5, 6}}));
  EXPECT_THROW(m.row_slice(2, 4), ShapeError);
}

TEST(Tensor, AllFiniteDetectsNanAndInf) {
  Tensor t = Tensor::vector({1, 2});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Kernels, MatmulIdentity) {
  const Tensor i2 = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  EXPECT_EQ(kernels::matmul(i2, b), b);
}

TEST(Kernels, MatmulHandArithmetic) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
  EXPECT_EQ(kernels::matmul(a, b), Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(Kernels, MatmulMismatchNamesBothShapes) {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4, 2});
  try {
    kernels::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(Kernels, BroadcastRules) {
  EXPECT_EQ(kernels::broadcast_shape({2, 3}, {2, 3}), (Shape{2, 3}));
  EXPECT_EQ(kernels::broadcast_shape({2, 3}, {}), (Shape{2, 3}));
  EXPECT_EQ(kernels::broadcast_shape({}, {2, 3}), (Shape{2, 3}));
  EXPECT_EQ(kernels::broadcast_shape({2, 3}, {1, 3}), (Shape{2, 3}));
  EXPECT_EQ(kernels::broadcast_shape({1, 3}, {2, 3}), (Shape{2, 3}));
  EXPECT_THROW(kernels::broadcast_shape({2, 3}, {3}), ShapeError);
  EXPECT_THROW(kernels::broadcast_shape({2, 3}, {2, 1}), ShapeError);
  EXPECT_THROW(kernels::broadcast_shape({2, 3}, {3, 2}), ShapeError);
}

TEST(Kernels, RowBiasAddition) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{10, 20}});
  EXPECT_EQ(kernels::add(m, b), Tensor::matrix({{11, 22}, {13, 24}}));
  EXPECT_EQ(kernels::sub(b, m), Tensor::matrix({{9, 18}, {7, 16}}));
}

TEST(Kernels, ReduceToUndoesBroadcast) {
  const Tensor g = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(kernels::reduce_to(g, {1, 2}), Tensor::matrix({{4, 6}}));
  EXPECT_EQ(kernels::reduce_to(g, {}), Tensor::scalar(10));
  EXPECT_EQ(kernels::reduce_to(g, {2, 2}), g);
}

TEST(Kernels, ReduceSum) {
  EXPECT_EQ(kernels::reduce_sum(Tensor::vector({1, 2, 3})).item(), 6.0);
  EXPECT_EQ(kernels::reduce_sum(Tensor::zeros({4, 5})).item(), 0.0);
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(kernels::reduce_sum(m, 0).values(), (std::vector<double>{4, 6}));
  EXPECT_EQ(kernels::reduce_sum(m, 1).values(), (std::vector<double>{3, 7}));
  EXPECT_THROW(kernels::reduce_sum(m, 2), ShapeError);
}

TEST(Kernels, TileRows) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(kernels::tile_rows(m, 2), Tensor::matrix({{1, 2}, {3, 4}, {1, 2}, {3, 4}}));
}

TEST(Kernels, StableSigmoidAndSoftplusDoNotOverflow) {
  EXPECT_EQ(kernels::stable_sigmoid(0.0), 0.5);
  EXPECT_EQ(kernels::stable_sigmoid(800.0), 1.0);
  EXPECT_EQ(kernels::stable_sigmoid(-800.0), 0.0);
  EXPECT_TRUE(std::isfinite(kernels::stable_softplus(800.0)));
  EXPECT_DOUBLE_EQ(kernels::stable_softplus(800.0), 800.0);
  EXPECT_NEAR(kernels::stable_softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_GT(kernels::stable_softplus(-800.0), -1e-300);
}
