#include "deformer/discriminator.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

namespace deformer {
namespace {

using testing::random_const;
using testing::random_leaf;

TEST(Discriminator, ScoresStayInsideUnitInterval) {
  nn::ParameterStore store(1);
  MotionDiscriminator disc(store, 48, 16);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> len(1, 9);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor poses = random_const(rng, {len(rng), 48}, -3, 3);
    const double s = disc(poses).item();
    ASSERT_GT(s, 0.0);
    ASSERT_LT(s, 1.0);
  }
}

TEST(Discriminator, PoolingWeightsSumToOne) {
  nn::ParameterStore store(2);
  MotionDiscriminator disc(store, 48, 16);
  std::mt19937_64 rng(2);
  for (std::size_t steps : {1u, 4u, 7u}) {
    Tensor pooling;
    disc(random_const(rng, {steps, 48}), &pooling);
    ASSERT_EQ(pooling.shape(), (Shape{steps}));
    double s = 0.0;
    for (double w : pooling.to_vector()) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Discriminator, SingleFrameIsDeterministic) {
  nn::ParameterStore a(3), b(3);
  MotionDiscriminator da(a, 48, 16), db(b, 48, 16);
  std::mt19937_64 rng(3);
  Tensor frame = random_const(rng, {1, 48});
  Tensor pooling;
  EXPECT_EQ(da(frame, &pooling).item(), db(frame).item());
  EXPECT_EQ(pooling[0], 1.0);
  EXPECT_EQ(a.scalar_count(), b.scalar_count());
  EXPECT_THROW(da(random_const(rng, {3, 47})), ShapeError);
}

TEST(Discriminator, BatchScoresMatchIndividualCalls) {
  nn::ParameterStore store(4);
  MotionDiscriminator disc(store, 48, 8);
  std::mt19937_64 rng(4);
  std::vector<Tensor> seqs{random_const(rng, {7, 48}), random_const(rng, {3, 48})};
  Tensor batch = disc.score_batch(seqs);
  ASSERT_EQ(batch.shape(), (Shape{2}));
  EXPECT_EQ(batch[0], disc(seqs[0]).item());
  EXPECT_EQ(batch[1], disc(seqs[1]).item());
}

TEST(Discriminator, GradientCheck) {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 5;; ++seed) {
    nn::ParameterStore store(seed);
    MotionDiscriminator disc(store, 6, 4);
    Tensor poses = random_leaf(rng, {4, 6});
    std::vector<Tensor> leaves{poses};
    for (const auto& p : store.parameters()) leaves.push_back(p.value);
    double err = testing::max_gradient_error(leaves, [&] { return disc(poses); });
    if (err < 0.0) continue;
    EXPECT_LT(err, 1e-4);
    break;
  }
}

}  // namespace
}  // namespace deformer
