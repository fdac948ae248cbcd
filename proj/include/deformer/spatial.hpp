#pragma once

// Per-frame network: feature grid -> tokens -> encoder -> joint heatmaps ->
// heatmap skip -> decoder with one learnable query -> latent vector.
//
// Pixel convention: the grid spans [0, W] x [0, H] pixels, cell (r, c) has
// its center at x = c + 0.5, y = r + 0.5.

#include <vector>

#include "deformer/config.hpp"
#include "deformer/nn.hpp"

namespace deformer {

inline constexpr std::size_t kHeatmapJoints = 21;

struct SpatialOutput {
  Tensor encoded;   // [HW x D]
  Tensor heatmaps;  // [21 x H x W], each channel sums to 1
  Tensor joints2d;  // [21 x 2] pixels (x, y)
  Tensor latent;    // [1 x D]
};

// Cell-center coordinates [HW x 2], row-major cell order.
Tensor cell_centers(std::size_t height, std::size_t width);

// logits [HW x J], centers [HW x 2] -> (heatmaps [J x HW], expected
// coordinates [J x 2]).
std::pair<Tensor, Tensor> soft_argmax(const Tensor& logits, const Tensor& centers);

class SpatialTransformer {
 public:
  SpatialTransformer(nn::ParameterStore& store, const ModelConfig& config);

  // grid [H x W x C] -> tokens [HW x D]
  Tensor embed(const Tensor& grid) const;
  // encoded [HW x D] -> (heatmaps [21 x H x W], joints2d [21 x 2])
  std::pair<Tensor, Tensor> heatmap_head(const Tensor& encoded) const;
  SpatialOutput operator()(const Tensor& grid) const;

 private:
  ModelConfig config_;
  nn::Linear embed_;
  nn::PositionalEmbedding2D positional_;
  std::vector<nn::EncoderLayer> encoder_;
  nn::Linear heatmap_logits_;
  nn::Linear skip_;
  Tensor query_;
  std::vector<nn::DecoderLayer> decoder_;
  Tensor centers_;
};

}  // namespace deformer
