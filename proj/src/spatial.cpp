#include "deformer/spatial.hpp"

namespace deformer {

Tensor cell_centers(std::size_t height, std::size_t width) {
  std::vector<double> values(height * width * 2);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      values[(r * width + c) * 2] = static_cast<double>(c) + 0.5;
      values[(r * width + c) * 2 + 1] = static_cast<double>(r) + 0.5;
    }
  }
  return Tensor({height * width, 2}, std::move(values));
}

std::pair<Tensor, Tensor> soft_argmax(const Tensor& logits, const Tensor& centers) {
  if (logits.ndim() != 2 || logits.shape()[0] != centers.shape()[0]) {
    throw ShapeError("soft_argmax expects [HW x J] logits, got " + shape_string(logits.shape()));
  }
  Tensor heat = softmax(transpose(logits), -1);  // [J x HW]
  return {heat, matmul(heat, centers)};
}

SpatialTransformer::SpatialTransformer(nn::ParameterStore& store, const ModelConfig& config)
    : config_(config),
      embed_(store, "spatial.embed", config.channels, config.dim),
      heatmap_logits_(store, "spatial.heatmap", config.dim, kHeatmapJoints, /*with_bias=*/false),
      skip_(store, "spatial.skip", config.dim + kHeatmapJoints, config.dim),
      centers_(cell_centers(config.grid_height, config.grid_width)) {
  if (config.positional_embeddings) {
    positional_ = nn::PositionalEmbedding2D(store, "spatial.position", config.grid_height,
                                            config.grid_width, config.dim, config.positional_kind);
  }
  for (std::size_t i = 0; i < config.spatial_encoder_layers; ++i) {
    encoder_.emplace_back(store, "spatial.encoder" + std::to_string(i), config.dim, config.heads,
                          config.ffn_dim);
  }
  query_ = store.add_weight("spatial.query", {1, config.query_dim}, config.query_dim);
  for (std::size_t i = 0; i < config.spatial_decoder_layers; ++i) {
    decoder_.emplace_back(store, "spatial.decoder" + std::to_string(i), config.dim, config.heads,
                          config.ffn_dim);
  }
}

Tensor SpatialTransformer::embed(const Tensor& grid) const {
  const Shape expected{config_.grid_height, config_.grid_width, config_.channels};
  if (grid.shape() != expected) {
    throw ShapeError("feature grid " + shape_string(grid.shape()) + " does not match config " +
                     shape_string(expected));
  }
  Tensor tokens =
      embed_(reshape(grid, {config_.grid_height * config_.grid_width, config_.channels}));
  if (config_.positional_embeddings) tokens = add(tokens, positional_.table());
  return tokens;
}

std::pair<Tensor, Tensor> SpatialTransformer::heatmap_head(const Tensor& encoded) const {
  auto [heat, joints] = soft_argmax(heatmap_logits_(encoded), centers_);
  return {reshape(heat, {kHeatmapJoints, config_.grid_height, config_.grid_width}), joints};
}

SpatialOutput SpatialTransformer::operator()(const Tensor& grid) const {
  SpatialOutput out;
  out.encoded = nn::encoder_forward(embed(grid), encoder_);
  auto [heat, joints] = soft_argmax(heatmap_logits_(out.encoded), centers_);
  out.heatmaps = reshape(heat, {kHeatmapJoints, config_.grid_height, config_.grid_width});
  out.joints2d = joints;
  Tensor memory = skip_(concat({out.encoded, transpose(heat)}, 1));
  out.latent = nn::decoder_forward(query_, memory, decoder_);
  return out;
}

}  // namespace deformer
