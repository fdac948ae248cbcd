#pragma once

// Cross-frame pose deformation and confidence-weighted aggregation.
// Frames are indexed from 0. Deformation adds predicted per-frame motions in
// axis-angle parameter space:
//   j > i: pose_i + sum_{k=i}^{j-1} fw_k
//   j < i: pose_i + sum_{k=j+1}^{i} bw_k
// and the fused pose at t is sum_i w_i * deform(i -> t) with weights that do
// not depend on t. With exact motions both branches telescope to pose_j.

#include <optional>
#include <utility>
#include <vector>

#include "deformer/config.hpp"
#include "deformer/tensor.hpp"

namespace deformer {

// fw_t = theta_{t+1} - theta_t, bw_t = theta_{t-1} - theta_t; the undefined
// boundary rows (fw at T-1, bw at 0) are zero.
std::pair<Tensor, Tensor> motion_targets(const Tensor& gt_poses);

// pose/fw/bw [T x 48] -> [48]. Throws std::out_of_range on a bad index.
Tensor deform(const Tensor& poses, const Tensor& fw, const Tensor& bw, std::size_t i,
              std::size_t j);

// Per-frame fusion weights [T]. Dynamic: softmax of `confidence`;
// Average: uniform; WeightedExternal: nonnegative `external` normalized with
// 1e-8 added to the denominator; Center: one-hot is target dependent, so
// this throws std::invalid_argument.
Tensor fusion_weights(const Tensor& confidence, AggregationMode mode,
                      const std::optional<std::vector<double>>& external = std::nullopt);

// Fused pose at target frame t [48], evaluated literally as a weighted sum
// of deformed frame predictions.
Tensor fuse(const Tensor& poses, const Tensor& fw, const Tensor& bw, const Tensor& confidence,
            std::size_t t, AggregationMode mode,
            const std::optional<std::vector<double>>& external = std::nullopt);

// All targets at once [T x 48].
Tensor fuse_sequence(const Tensor& poses, const Tensor& fw, const Tensor& bw,
                     const Tensor& confidence, AggregationMode mode,
                     const std::optional<std::vector<double>>& external = std::nullopt);

}  // namespace deformer
