#include "deformer/fusion.hpp"

#include <stdexcept>

namespace deformer {
namespace {

void check_sequence(const Tensor& poses, const Tensor& fw, const Tensor& bw) {
  if (poses.ndim() != 2 || fw.shape() != poses.shape() || bw.shape() != poses.shape()) {
    throw ShapeError("fusion expects poses and motions of equal [T x P] shape");
  }
}

void check_external(const std::optional<std::vector<double>>& external, std::size_t steps,
                    AggregationMode mode) {
  if (mode == AggregationMode::WeightedExternal) {
    if (!external || external->size() != steps) {
      throw std::invalid_argument("weighted aggregation needs one external weight per frame");
    }
    double total = 0.0;
    for (double w : *external) {
      if (w < 0.0) throw std::invalid_argument("external fusion weights must be nonnegative");
      total += w;
    }
    if (total == 0.0) throw std::invalid_argument("external fusion weights are all zero");
  } else if (external) {
    throw std::invalid_argument("external weights are only accepted by weighted aggregation");
  }
}

}  // namespace

std::pair<Tensor, Tensor> motion_targets(const Tensor& gt) {
  if (gt.ndim() != 2) throw ShapeError("motion_targets expects [T x P] poses");
  const std::size_t steps = gt.shape()[0];
  const std::size_t p = gt.shape()[1];
  const auto v = gt.data();
  std::vector<double> fw(steps * p, 0.0);
  std::vector<double> bw(steps * p, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < p; ++k) {
      if (t + 1 < steps) fw[t * p + k] = v[(t + 1) * p + k] - v[t * p + k];
      if (t > 0) bw[t * p + k] = v[(t - 1) * p + k] - v[t * p + k];
    }
  }
  return {Tensor(gt.shape(), std::move(fw)), Tensor(gt.shape(), std::move(bw))};
}

Tensor deform(const Tensor& poses, const Tensor& fw, const Tensor& bw, std::size_t i,
              std::size_t j) {
  check_sequence(poses, fw, bw);
  const std::size_t steps = poses.shape()[0];
  if (i >= steps || j >= steps) throw std::out_of_range("deform frame index out of range");
  const std::size_t p = poses.shape()[1];
  Tensor out = reshape(slice(poses, 0, i, 1), {p});
  if (j > i) {
    out = add(out, sum(slice(fw, 0, i, j - i), 0));
  } else if (j < i) {
    out = add(out, sum(slice(bw, 0, j + 1, i - j), 0));
  }
  return out;
}

Tensor fusion_weights(const Tensor& confidence, AggregationMode mode,
                      const std::optional<std::vector<double>>& external) {
  const std::size_t steps = confidence.numel();
  check_external(external, steps, mode);
  switch (mode) {
    case AggregationMode::Dynamic:
      return softmax(reshape(confidence, {steps}), 0);
    case AggregationMode::Average:
      return Tensor::full({steps}, 1.0 / static_cast<double>(steps));
    case AggregationMode::WeightedExternal: {
      double total = 0.0;
      for (double w : *external) total += w;
      std::vector<double> w(*external);
      for (double& x : w) x /= total + 1e-8;
      return Tensor({steps}, std::move(w));
    }
    case AggregationMode::Center:
      break;
  }
  throw std::invalid_argument("center aggregation has no shared fusion weights");
}

Tensor fuse(const Tensor& poses, const Tensor& fw, const Tensor& bw, const Tensor& confidence,
            std::size_t t, AggregationMode mode,
            const std::optional<std::vector<double>>& external) {
  check_sequence(poses, fw, bw);
  const std::size_t steps = poses.shape()[0];
  if (t >= steps) throw std::out_of_range("fusion target index out of range");
  if (confidence.numel() != steps) throw ShapeError("one confidence per frame expected");
  if (mode == AggregationMode::Center || steps == 1) {
    check_external(external, steps, mode);
    return deform(poses, fw, bw, t, t);
  }
  Tensor w = fusion_weights(confidence, mode, external);
  Tensor out;
  for (std::size_t i = 0; i < steps; ++i) {
    Tensor term = mul(deform(poses, fw, bw, i, t), slice(w, 0, i, 1));
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

Tensor fuse_sequence(const Tensor& poses, const Tensor& fw, const Tensor& bw,
                     const Tensor& confidence, AggregationMode mode,
                     const std::optional<std::vector<double>>& external) {
  check_sequence(poses, fw, bw);
  const std::size_t steps = poses.shape()[0];
  if (confidence.numel() != steps) throw ShapeError("one confidence per frame expected");
  if (mode == AggregationMode::Center || steps == 1) {
    check_external(external, steps, mode);
    return poses;
  }
  // With W_k = sum_{i<=k} w_i, E_k = sum_{i<k} w_i and S = sum_i w_i the
  // deformation sums regroup into two triangular matrices:
  //   fused_t = sum_i w_i pose_i + sum_{k<t} W_k fw_k + sum_{k>t} (S - E_k) bw_k
  Tensor w = fusion_weights(confidence, mode, external);
  std::vector<double> lower(steps * steps, 0.0);
  std::vector<double> strictly_lower(steps * steps, 0.0);
  std::vector<double> strictly_upper(steps * steps, 0.0);
  for (std::size_t r = 0; r < steps; ++r) {
    for (std::size_t c = 0; c < steps; ++c) {
      if (c <= r) lower[r * steps + c] = 1.0;
      if (c < r) strictly_lower[r * steps + c] = 1.0;
      if (c > r) strictly_upper[r * steps + c] = 1.0;
    }
  }
  const Tensor below({steps, steps}, strictly_lower);
  Tensor wcol = reshape(w, {steps, 1});
  Tensor inclusive = reshape(matmul(Tensor({steps, steps}, std::move(lower)), wcol), {1, steps});
  Tensor exclusive = reshape(matmul(below, wcol), {1, steps});
  Tensor forward_mix = mul(below, inclusive);
  Tensor backward_mix =
      mul(Tensor({steps, steps}, std::move(strictly_upper)), sub(sum(w), exclusive));
  Tensor mean_pose = matmul(reshape(w, {1, steps}), poses);  // [1 x P]
  return add(add(mean_pose, matmul(forward_mix, fw)), matmul(backward_mix, bw));
}

}  // namespace deformer
