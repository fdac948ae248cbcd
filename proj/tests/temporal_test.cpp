#include "deformer/temporal.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

namespace deformer {
namespace {

using testing::random_const;
using testing::random_leaf;

ModelConfig small_config() {
  ModelConfig c;
  c.dim = 8;
  c.query_dim = 8;
  c.heads = 2;
  c.ffn_dim = 12;
  return c;
}

TEST(Temporal, OutputShapes) {
  nn::ParameterStore store(1);
  TemporalTransformer net(store, ModelConfig{}, 7);
  std::mt19937_64 rng(1);
  TemporalOutput out = net(random_const(rng, {7, 64}));
  EXPECT_EQ(out.enriched.shape(), (Shape{7, 64}));
  EXPECT_EQ(out.pose.shape(), (Shape{7, 48}));
  EXPECT_EQ(out.motion_fw.shape(), (Shape{7, 48}));
  EXPECT_EQ(out.motion_bw.shape(), (Shape{7, 48}));
  EXPECT_EQ(out.confidence.shape(), (Shape{7}));
  EXPECT_EQ(out.shape.shape(), (Shape{10}));
  EXPECT_EQ(out.monocular_pose.shape(), (Shape{7, 48}));
  EXPECT_EQ(out.monocular_shape.shape(), (Shape{7, 10}));
  EXPECT_THROW(net(random_const(rng, {8, 64})), ShapeError);
  EXPECT_THROW(net(random_const(rng, {3, 32})), ShapeError);
}

TEST(Temporal, SingleFrameMatchesEncoderOfOneToken) {
  ModelConfig cfg = small_config();
  cfg.temporal_embeddings = false;
  nn::ParameterStore store(2);
  TemporalTransformer net(store, cfg, 7);
  nn::ParameterStore twin(2);
  std::vector<nn::EncoderLayer> layers;
  layers.emplace_back(twin, "temporal.encoder0", 8, 2, 12);
  std::mt19937_64 rng(2);
  Tensor x = random_const(rng, {1, 8});
  TemporalOutput out = net(x);
  Tensor expected = nn::encoder_forward(x, layers);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(out.enriched[i], expected[i]);
}

TEST(Temporal, EveryPoseDependsOnEveryFrame) {
  nn::ParameterStore store(3);
  TemporalTransformer net(store, small_config(), 7);
  std::mt19937_64 rng(3);
  Tensor latents = random_leaf(rng, {5, 8});
  for (std::size_t t = 0; t < 5; ++t) {
    Tape tape;
    TapeScope scope(tape);
    Tensor row = slice(net(latents).pose, 0, t, 1);
    Tensor g = backward(testing::probe(row)).at(latents);
    for (std::size_t j = 0; j < 5; ++j) {
      double mag = 0.0;
      for (std::size_t d = 0; d < 8; ++d) mag += std::abs(g.at({j, d}));
      EXPECT_GT(mag, 0.0) << "pose " << t << " vs latent " << j;
    }
  }
}

TEST(Temporal, HeadsAreDeterministic) {
  nn::ParameterStore a(4), b(4);
  TemporalTransformer na(a, small_config(), 7), nb(b, small_config(), 7);
  std::mt19937_64 rng(4);
  Tensor x = random_const(rng, {4, 8});
  TemporalOutput oa = na(x), ob = nb(x);
  EXPECT_EQ(oa.pose.to_vector(), ob.pose.to_vector());
  EXPECT_EQ(oa.confidence.to_vector(), ob.confidence.to_vector());
  EXPECT_EQ(oa.shape.to_vector(), ob.shape.to_vector());
  EXPECT_EQ(na(x).pose.to_vector(), oa.pose.to_vector());
}

TEST(Temporal, EndToEndGradientCheck) {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 5;; ++seed) {
    nn::ParameterStore store(seed);
    TemporalTransformer net(store, small_config(), 7);
    Tensor latents = random_leaf(rng, {3, 8});
    std::vector<Tensor> leaves{latents};
    for (const auto& p : store.parameters()) leaves.push_back(p.value);
    double err = testing::max_gradient_error(leaves, [&] {
      TemporalOutput out = net(latents);
      Tensor total = add(testing::probe(out.pose, 1), testing::probe(out.confidence, 2));
      total = add(total, testing::probe(out.shape, 3));
      total = add(total, testing::probe(out.motion_fw, 4));
      total = add(total, testing::probe(out.motion_bw, 5));
      total = add(total, testing::probe(out.monocular_pose, 6));
      return add(total, testing::probe(out.monocular_shape, 7));
    });
    if (err < 0.0) continue;
    EXPECT_LT(err, 1e-4);
    break;
  }
}

}  // namespace
}  // namespace deformer
