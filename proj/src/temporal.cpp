#include "deformer/temporal.hpp"

#include "deformer/handmodel.hpp"

namespace deformer {

MlpHead::MlpHead(nn::ParameterStore& store, const std::string& name, std::size_t in,
                 std::size_t hidden, std::size_t out, bool output_bias)
    : hidden_(store, name + ".hidden", in, hidden), out_(store, name + ".out", hidden, out, output_bias) {}

TemporalTransformer::TemporalTransformer(nn::ParameterStore& store, const ModelConfig& config,
                                         std::size_t max_len)
    : config_(config), max_len_(max_len) {
  const std::size_t d = config.dim;
  if (config.temporal_embeddings) {
    time_embedding_ = store.add_weight("temporal.time_embedding", {max_len, d}, d);
  }
  for (std::size_t i = 0; i < config.temporal_encoder_layers; ++i) {
    encoder_.emplace_back(store, "temporal.encoder" + std::to_string(i), d, config.heads,
                          config.ffn_dim);
  }
  pose_ = MlpHead(store, "temporal.pose", d, d, hand::kPoseDim);
  motion_fw_ = MlpHead(store, "temporal.motion_fw", d, d, hand::kPoseDim);
  motion_bw_ = MlpHead(store, "temporal.motion_bw", d, d, hand::kPoseDim);
  confidence_ = MlpHead(store, "temporal.confidence", d, d, 1, /*output_bias=*/false);
  shape_query_ = store.add_weight("temporal.shape_query", {1, config.query_dim}, config.query_dim);
  for (std::size_t i = 0; i < config.temporal_decoder_layers; ++i) {
    shape_decoder_.emplace_back(store, "temporal.shape_decoder" + std::to_string(i), d,
                                config.heads, config.ffn_dim);
  }
  shape_ = MlpHead(store, "temporal.shape", d, d, hand::kShapeDim);
  monocular_pose_ = MlpHead(store, "monocular.pose", d, d, hand::kPoseDim);
  monocular_shape_ = MlpHead(store, "monocular.shape", d, d, hand::kShapeDim);
}

TemporalOutput TemporalTransformer::operator()(const Tensor& latents) const {
  if (latents.ndim() != 2 || latents.shape()[1] != config_.dim) {
    throw ShapeError("temporal input must be [T x D], got " + shape_string(latents.shape()));
  }
  const std::size_t steps = latents.shape()[0];
  if (steps == 0 || steps > max_len_) {
    throw ShapeError("sequence length " + std::to_string(steps) + " outside [1, " +
                     std::to_string(max_len_) + "]");
  }
  TemporalOutput out;
  Tensor tokens = latents;
  if (config_.temporal_embeddings) tokens = add(tokens, slice(time_embedding_, 0, 0, steps));
  out.enriched = nn::encoder_forward(tokens, encoder_);
  out.pose = pose_(out.enriched);
  out.motion_fw = motion_fw_(out.enriched);
  out.motion_bw = motion_bw_(out.enriched);
  out.confidence = reshape(confidence_(out.enriched), {steps});
  out.shape = reshape(shape_(nn::decoder_forward(shape_query_, out.enriched, shape_decoder_)),
                      {hand::kShapeDim});
  out.monocular_pose = monocular_pose_(latents);
  out.monocular_shape = monocular_shape_(latents);
  return out;
}

}  // namespace deformer
