#include "deformer/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "test_support.hpp"

namespace deformer {
namespace {

using testing::probe;
using testing::random_const;
using testing::random_leaf;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  std::mt19937_64 rng(1);
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor m = random_const(rng, {3, 3});
  Tensor r = matmul(eye, m);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(r[i], m[i]);
}

TEST(Matmul, HandComputedProduct) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {1, 1});
  Tensor r = matmul(a, b);
  ASSERT_EQ(r.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(r[0], 3.0);
  EXPECT_DOUBLE_EQ(r[1], 7.0);
}

TEST(Matmul, GradientOfSumIsRowSumsOfB) {
  std::mt19937_64 rng(2);
  Tensor a = random_leaf(rng, {3, 4});
  Tensor b = random_const(rng, {4, 5});
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = sum(matmul(a, b));
  Tensor g = backward(loss).at(a);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t p = 0; p < 4; ++p) {
      double row = 0.0;
      for (std::size_t j = 0; j < 5; ++j) row += b.at({p, j});
      EXPECT_NEAR(g.at({i, p}), row, 1e-12);
    }
  }
  EXPECT_LT(finite_diff_check([&](const Tensor& x) { return sum(matmul(x, b)); }, a), 1e-4);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(matmul(Tensor::zeros({2, 2, 3}), Tensor::zeros({3, 3, 1})), ShapeError);
}

TEST(Matmul, BatchedMatchesPerSlice) {
  std::mt19937_64 rng(3);
  Tensor a = random_const(rng, {2, 3, 4});
  Tensor b = random_const(rng, {2, 4, 2});
  Tensor r = matmul(a, b);
  for (std::size_t s = 0; s < 2; ++s) {
    Tensor rs = matmul(reshape(slice(a, 0, s, 1), {3, 4}), reshape(slice(b, 0, s, 1), {4, 2}));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(r[s * 6 + i], rs[i]);
  }
}

TEST(Softmax, ConstantVectorIsUniform) {
  Tensor y = softmax(Tensor::full({4}, 3.7), 0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y[i], 0.25);
}

TEST(Softmax, ClosedForm) {
  Tensor y = softmax(Tensor({2}, {0.0, std::log(3.0)}), 0);
  EXPECT_NEAR(y[0], 0.25, 1e-15);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(Softmax, SumsToOneAndShiftInvariantAlongAnyAxis) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = random_const(rng, {3, 5, 2}, -20.0, 20.0);
    for (int axis = 0; axis < 3; ++axis) {
      Tensor y = softmax(x, axis);
      Tensor shifted = softmax(add(x, 123.25), axis);
      Tensor totals = sum(y, axis);
      for (double t : totals.data()) EXPECT_NEAR(t, 1.0, 1e-12);
      for (std::size_t i = 0; i < y.numel(); ++i) {
        EXPECT_GE(y[i], 0.0);
        EXPECT_NEAR(y[i], shifted[i], 1e-12);
      }
    }
  }
}

TEST(Elementwise, IdentitiesAndDomain) {
  std::mt19937_64 rng(5);
  Tensor x = random_const(rng, {2, 3});
  Tensor y = add(x, Tensor::zeros({2, 3}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(x[i], y[i]);
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_THROW(log(Tensor({2}, {1.0, 0.0})), DomainError);
  EXPECT_THROW(div(x, Tensor::zeros({3})), DomainError);
  EXPECT_THROW(pow(Tensor({1}, {-1.0}), 0.5), DomainError);
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
}

TEST(Elementwise, ExpDerivativeAtOne) {
  Tensor x = Tensor::leaf({1}, {1.0});
  Tape tape;
  TapeScope scope(tape);
  Tensor g = backward(exp(x)).at(x);
  EXPECT_NEAR(g.item(), std::exp(1.0), 1e-12);
  const double h = 1e-5;
  const double fd = (std::exp(1.0 + h) - std::exp(1.0 - h)) / (2 * h);
  EXPECT_NEAR(g.item(), fd, 1e-6);
}

TEST(Elementwise, BroadcastTrailingAlignment) {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row({3}, {10, 20, 30});
  Tensor col({2, 1}, {100, 200});
  Tensor r1 = add(a, row);
  Tensor r2 = add(a, col);
  EXPECT_EQ(r1.to_vector(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  EXPECT_EQ(r2.to_vector(), (std::vector<double>{101, 102, 103, 204, 205, 206}));
  Tensor outer = mul(col, Tensor({1, 3}, {1, 2, 3}));
  EXPECT_EQ(outer.shape(), (Shape{2, 3}));
  EXPECT_EQ(outer.to_vector(), (std::vector<double>{100, 200, 300, 200, 400, 600}));

  // Gradients into broadcast operands are summed over broadcast dimensions.
  Tensor c = Tensor::leaf({2, 1}, {1.0, 2.0});
  Tape tape;
  TapeScope scope(tape);
  Tensor g = backward(sum(mul(c, a))).at(c);
  EXPECT_DOUBLE_EQ(g[0], 6.0);
  EXPECT_DOUBLE_EQ(g[1], 15.0);
}

TEST(Reduce, Basics) {
  EXPECT_DOUBLE_EQ(sum(Tensor::ones({7})).item(), 7.0);
  EXPECT_DOUBLE_EQ(mean(Tensor({3}, {1, 2, 3})).item(), 2.0);
  Tensor x({2, 3}, {1, 5, 2, 7, 0, 7});
  Tensor m = max(x, 1);
  EXPECT_EQ(m.to_vector(), (std::vector<double>{5, 7}));
  EXPECT_EQ(sum(x, 0, true).shape(), (Shape{1, 3}));
  EXPECT_THROW(sum(x, 2), ShapeError);
}

TEST(Reduce, MaxGradientGoesToFirstMaximum) {
  Tensor x = Tensor::leaf({5}, {1.0, 3.0, 2.0, 3.0, 0.0});
  Tape tape;
  TapeScope scope(tape);
  Tensor g = backward(max(x)).at(x);
  EXPECT_EQ(g.to_vector(), (std::vector<double>{0, 1, 0, 0, 0}));
}

TEST(Reduce, GradientOfSumOfSquares) {
  std::mt19937_64 rng(6);
  Tensor x = random_leaf(rng, {4, 3});
  Tape tape;
  TapeScope scope(tape);
  Tensor g = backward(sum(square(x))).at(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(g[i], 2.0 * x[i], 1e-15);
}

TEST(Backward, SumOfFreeLeafIsAllOnes) {
  Tensor w = Tensor::leaf({3}, {0.3, -1.0, 2.0});
  Tape tape;
  TapeScope scope(tape);
  EXPECT_EQ(backward(sum(w)).at(w).to_vector(), (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Backward, MeanSquaredErrorGradient) {
  std::mt19937_64 rng(7);
  Tensor w = random_leaf(rng, {6});
  Tensor t = random_const(rng, {6});
  Tape tape;
  TapeScope scope(tape);
  Tensor g = backward(mul(sum(square(sub(w, t))), 1.0 / 6.0)).at(w);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g[i], 2.0 * (w[i] - t[i]) / 6.0, 1e-15);
}

TEST(Backward, ChainMatmulSoftmaxSum) {
  std::mt19937_64 rng(8);
  Tensor a = random_leaf(rng, {3, 4});
  Tensor b = random_const(rng, {4, 5});
  auto f = [&](const Tensor& x) { return probe(softmax(matmul(x, b), 1)); };
  EXPECT_LT(finite_diff_check(f, a), 1e-4);
}

TEST(Backward, LinearityInTheLoss) {
  std::mt19937_64 rng(9);
  Tensor w = random_leaf(rng, {4});
  Tensor c = random_const(rng, {4});
  auto loss1 = [&] { return sum(exp(mul(w, c))); };
  auto loss2 = [&] { return sum(square(w)); };
  Tape tape;
  TapeScope scope(tape);
  Tensor g1 = backward(loss1()).at(w);
  Tensor g2 = backward(loss2()).at(w);
  Tensor g12 = backward(add(loss1(), loss2())).at(w);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(g12[i], g1[i] + g2[i]);
}

TEST(Backward, Errors) {
  Tensor w = Tensor::leaf({2}, {1.0, 2.0});
  Tape tape;
  {
    TapeScope scope(tape);
    EXPECT_THROW(backward(mul(w, 2.0)), TapeError);
    EXPECT_THROW(backward(Tensor::scalar(1.0)), TapeError);
  }
  Tensor detached = sum(w);  // recorded nowhere
  TapeScope scope(tape);
  EXPECT_THROW(backward(detached), TapeError);
}

TEST(Backward, NonFiniteResultIsAnError) {
  EXPECT_THROW(exp(Tensor::scalar(1000.0)), NumericError);
  EXPECT_THROW(Tensor({1}, {std::nan("")}), NumericError);
}

TEST(FiniteDiff, SumOfSquaresAndConstant) {
  std::mt19937_64 rng(10);
  Tensor x = random_leaf(rng, {5}, 0.5, 2.0);
  EXPECT_LT(finite_diff_check([](const Tensor& v) { return sum(square(v)); }, x), 1e-8);
  EXPECT_EQ(finite_diff_check([](const Tensor&) { return Tensor::scalar(4.0); }, x), 0.0);
}

// Every differentiable op against central differences, 100 seeded trials.
struct OpCase {
  const char* name;
  std::function<Tensor(const Tensor&, const Tensor&)> op;  // (x, other)
  Shape x_shape;
  Shape other_shape;
  double lo;
  double hi;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const OpCase& c = GetParam();
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x;
    Tensor other;
    auto fx = [&](const Tensor& v) { return probe(c.op(v, other.detach())); };
    auto fo = [&](const Tensor& v) { return probe(c.op(x.detach(), v)); };
    do {
      x = random_leaf(rng, c.x_shape, c.lo, c.hi);
      // keep relu away from its kink
      if (std::string(c.name) == "relu") {
        for (std::size_t i = 0; i < x.numel(); ++i) {
          if (std::abs(x[i]) < 0.05) x.set(i, 0.1);
        }
      }
      other = random_leaf(rng, c.other_shape, 0.5, 1.5);
    } while (!testing::well_conditioned(fx, x) || !testing::well_conditioned(fo, other));
    EXPECT_LT(finite_diff_check(fx, x), 1e-4) << c.name << " trial " << trial;
    EXPECT_LT(finite_diff_check(fo, other), 1e-4) << c.name << " (other) trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"add", [](auto& x, auto& o) { return add(x, o); }, {3, 4}, {4}, -1, 1},
        OpCase{"sub", [](auto& x, auto& o) { return sub(x, o); }, {3, 1}, {3, 4}, -1, 1},
        OpCase{"mul", [](auto& x, auto& o) { return mul(x, o); }, {2, 3, 4}, {3, 1}, -1, 1},
        OpCase{"div", [](auto& x, auto& o) { return div(x, o); }, {3, 4}, {3, 4}, -1, 1},
        OpCase{"exp", [](auto& x, auto& o) { return mul(exp(x), o); }, {6}, {6}, -2, 2},
        OpCase{"log", [](auto& x, auto& o) { return mul(log(x), o); }, {6}, {6}, 0.2, 3},
        OpCase{"pow", [](auto& x, auto& o) { return mul(pow(x, 1.7), o); }, {6}, {6}, 0.2, 3},
        OpCase{"relu", [](auto& x, auto& o) { return mul(relu(x), o); }, {8}, {8}, -1, 1},
        OpCase{"tanh", [](auto& x, auto& o) { return mul(tanh(x), o); }, {6}, {6}, -2, 2},
        OpCase{"sigmoid", [](auto& x, auto& o) { return mul(sigmoid(x), o); }, {6}, {6}, -3, 3},
        OpCase{"matmul", [](auto& x, auto& o) { return matmul(x, o); }, {3, 4}, {4, 2}, -1, 1},
        OpCase{"bmm", [](auto& x, auto& o) { return matmul(x, o); }, {2, 3, 4}, {2, 4, 2}, -1, 1},
        OpCase{"softmax", [](auto& x, auto& o) { return mul(softmax(x, 0), o); }, {4, 3}, {3},
               -2, 2},
        OpCase{"sum_axis", [](auto& x, auto& o) { return mul(sum(x, 1), o); }, {3, 4}, {3}, -1,
               1},
        OpCase{"mean_axis", [](auto& x, auto& o) { return mul(mean(x, 0, true), o); }, {3, 4},
               {1, 4}, -1, 1},
        OpCase{"max_axis", [](auto& x, auto& o) { return mul(max(x, 1), o); }, {3, 4}, {3}, -1,
               1},
        OpCase{"permute",
               [](auto& x, auto& o) { return mul(permute(x, {2, 0, 1}), o); }, {2, 3, 4},
               {4, 2, 3}, -1, 1},
        OpCase{"concat", [](auto& x, auto& o) { return concat({x, o, x}, 1); }, {2, 3}, {2, 2},
               -1, 1},
        OpCase{"index_select",
               [](auto& x, auto& o) { return mul(index_select(x, 0, {2, 0, 2}), o); }, {3, 2},
               {3, 2}, -1, 1}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace deformer
