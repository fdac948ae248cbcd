#pragma once

// Realism score of a pose sequence: per-frame embedding, two bidirectional
// GRU layers, attention pooling over time with one learned scoring vector,
// and a sigmoid head.

#include "deformer/nn.hpp"

namespace deformer {

class MotionDiscriminator {
 public:
  MotionDiscriminator(nn::ParameterStore& store, std::size_t pose_dim, std::size_t hidden);

  // poses [T x pose_dim] -> score [1] in (0, 1). `pooling` receives the
  // attention weights over time [T] when given.
  Tensor operator()(const Tensor& poses, Tensor* pooling = nullptr) const;

  // Scores of several sequences stacked into [B].
  Tensor score_batch(const std::vector<Tensor>& sequences) const;

 private:
  std::size_t pose_dim_;
  nn::Linear embed_;
  nn::BiGruLayer gru1_;
  nn::BiGruLayer gru2_;
  nn::Linear attention_;
  nn::Linear head_;
};

}  // namespace deformer
