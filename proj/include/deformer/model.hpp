#pragma once

// Full generator (spatial -> temporal -> fusion -> hand model) plus the
// motion discriminator, each with its own parameter store.

#include <optional>
#include <vector>

#include "deformer/config.hpp"
#include "deformer/discriminator.hpp"
#include "deformer/fusion.hpp"
#include "deformer/handmodel.hpp"
#include "deformer/spatial.hpp"
#include "deformer/temporal.hpp"

namespace deformer {

struct GeneratorOutput {
  TemporalOutput temporal;
  Tensor joints2d;      // [T x 21 x 2]
  Tensor fused;         // [T x 48]
  Tensor shape;         // [T x 10], the shared shape repeated
  hand::HandMesh mesh;  // of the fused poses
};

class DeformerModel {
 public:
  explicit DeformerModel(const Config& config);
  DeformerModel(const DeformerModel&) = delete;
  DeformerModel& operator=(const DeformerModel&) = delete;

  // grids [T x H x W x C]. `external` feeds WeightedExternal fusion.
  GeneratorOutput forward(const Tensor& grids, AggregationMode mode,
                          const std::optional<std::vector<double>>& external = std::nullopt,
                          bool with_vertices = true) const;
  // poses [T x 48] -> score [1]
  Tensor discriminate(const Tensor& poses) const { return discriminator_(poses); }
  Tensor discriminate(const std::vector<Tensor>& batch) const {
    return discriminator_.score_batch(batch);
  }

  const Config& config() const { return config_; }
  const hand::KinematicTemplate& hand_template() const { return template_; }
  nn::ParameterStore& generator_parameters() { return generator_store_; }
  const nn::ParameterStore& generator_parameters() const { return generator_store_; }
  nn::ParameterStore& discriminator_parameters() { return discriminator_store_; }
  const nn::ParameterStore& discriminator_parameters() const { return discriminator_store_; }

 private:
  Config config_;
  hand::KinematicTemplate template_;
  nn::ParameterStore generator_store_;
  nn::ParameterStore discriminator_store_;
  SpatialTransformer spatial_;
  TemporalTransformer temporal_;
  MotionDiscriminator discriminator_;
};

// Marks every parameter of `store` as constant for its lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(const nn::ParameterStore& store);
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;
  ~FreezeGuard();

 private:
  const nn::ParameterStore& store_;
};

}  // namespace deformer
