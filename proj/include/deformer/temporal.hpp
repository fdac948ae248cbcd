#pragma once

// Sequence network over per-frame latents: temporal encoder, per-frame pose /
// motion / confidence heads, a shape decoder with one learnable query, and
// monocular heads on the pre-mixing latents.

#include <vector>

#include "deformer/config.hpp"
#include "deformer/nn.hpp"

namespace deformer {

struct TemporalOutput {
  Tensor enriched;         // [T x D]
  Tensor pose;             // [T x 48]
  Tensor motion_fw;        // [T x 48]
  Tensor motion_bw;        // [T x 48]
  Tensor confidence;       // [T], unbounded logits
  Tensor shape;            // [10], shared by all frames
  Tensor monocular_pose;   // [T x 48]
  Tensor monocular_shape;  // [T x 10]
};

// Linear -> tanh -> Linear.
class MlpHead {
 public:
  MlpHead() = default;
  MlpHead(nn::ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
          std::size_t out, bool output_bias = true);
  Tensor operator()(const Tensor& x) const { return out_(tanh(hidden_(x))); }

 private:
  nn::Linear hidden_;
  nn::Linear out_;
};

class TemporalTransformer {
 public:
  TemporalTransformer(nn::ParameterStore& store, const ModelConfig& config, std::size_t max_len);

  // latents [T x D], 1 <= T <= max_len
  TemporalOutput operator()(const Tensor& latents) const;

 private:
  ModelConfig config_;
  std::size_t max_len_;
  Tensor time_embedding_;
  std::vector<nn::EncoderLayer> encoder_;
  MlpHead pose_;
  MlpHead motion_fw_;
  MlpHead motion_bw_;
  MlpHead confidence_;
  Tensor shape_query_;
  std::vector<nn::DecoderLayer> shape_decoder_;
  MlpHead shape_;
  MlpHead monocular_pose_;
  MlpHead monocular_shape_;
};

}  // namespace deformer
