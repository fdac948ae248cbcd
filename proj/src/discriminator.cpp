#include "deformer/discriminator.hpp"

namespace deformer {

MotionDiscriminator::MotionDiscriminator(nn::ParameterStore& store, std::size_t pose_dim,
                                         std::size_t hidden)
    : pose_dim_(pose_dim),
      embed_(store, "disc.embed", pose_dim, hidden),
      gru1_(store, "disc.gru1", hidden, hidden),
      gru2_(store, "disc.gru2", 2 * hidden, hidden),
      attention_(store, "disc.attention", 2 * hidden, 1, /*with_bias=*/false),
      head_(store, "disc.head", 2 * hidden, 1) {}

Tensor MotionDiscriminator::operator()(const Tensor& poses, Tensor* pooling) const {
  if (poses.ndim() != 2 || poses.shape()[1] != pose_dim_ || poses.shape()[0] == 0) {
    throw ShapeError("discriminator expects [T x " + std::to_string(pose_dim_) + "], got " +
                     shape_string(poses.shape()));
  }
  Tensor features = gru2_(gru1_(embed_(poses)));     // [T x 2H]
  Tensor weights = softmax(attention_(features), 0);  // [T x 1]
  if (pooling != nullptr) *pooling = reshape(weights, {poses.shape()[0]});
  Tensor pooled = matmul(transpose(weights), features);  // [1 x 2H]
  return reshape(sigmoid(head_(pooled)), {1});
}

Tensor MotionDiscriminator::score_batch(const std::vector<Tensor>& sequences) const {
  std::vector<Tensor> scores;
  scores.reserve(sequences.size());
  for (const auto& s : sequences) scores.push_back((*this)(s));
  return concat(scores, 0);
}

}  // namespace deformer
