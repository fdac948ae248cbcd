#include "deformer/model.hpp"

#include "deformer/error.hpp"
#include "deformer/random.hpp"

namespace deformer {

DeformerModel::DeformerModel(const Config& config)
    : config_(config),
      template_(hand::template_from_seed(config.data.template_seed)),
      generator_store_(config.model.init_seed),
      discriminator_store_(derive_seed(config.model.init_seed, {1})),
      spatial_(generator_store_, config.model),
      temporal_(generator_store_, config.model, config.data.seq_len),
      discriminator_(discriminator_store_, hand::kPoseDim, config.model.discriminator_hidden) {}

GeneratorOutput DeformerModel::forward(const Tensor& grids, AggregationMode mode,
                                       const std::optional<std::vector<double>>& external,
                                       bool with_vertices) const {
  if (grids.ndim() != 4) throw ShapeError("forward expects grids [T x H x W x C]");
  const std::size_t steps = grids.shape()[0];
  const Shape frame{grids.shape()[1], grids.shape()[2], grids.shape()[3]};

  std::vector<Tensor> latents;
  std::vector<Tensor> joints2d;
  latents.reserve(steps);
  joints2d.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    SpatialOutput s = spatial_(reshape(slice(grids, 0, t, 1), frame));
    latents.push_back(s.latent);
    joints2d.push_back(s.joints2d);
  }

  GeneratorOutput out;
  out.temporal = temporal_(concat(latents, 0));
  out.joints2d = stack(joints2d, 0);
  const TemporalOutput& tp = out.temporal;
  out.fused = fuse_sequence(tp.pose, tp.motion_fw, tp.motion_bw, tp.confidence, mode, external);
  out.shape = add(Tensor::zeros({steps, hand::kShapeDim}), reshape(tp.shape, {1, hand::kShapeDim}));
  out.mesh = hand::hand_forward(out.fused, out.shape, template_, with_vertices);
  return out;
}

FreezeGuard::FreezeGuard(const nn::ParameterStore& store) : store_(store) {
  for (const auto& p : store_.parameters()) p.value.set_requires_grad(false);
}

FreezeGuard::~FreezeGuard() {
  for (const auto& p : store_.parameters()) p.value.set_requires_grad(true);
}

}  // namespace deformer
