#pragma once

#include <string>

#include "deformer/config.hpp"
#include "deformer/handmodel.hpp"
#include "deformer/tensor.hpp"

namespace deformer {

// Error-weighted squared error over points [..., N, D]:
//   sum_i |e_i|^4 / sum_i |e_i|^2
// reduced over the last two axes; 0 where sum_i |e_i|^2 < 1e-12.
// Leading axes are kept (one value per frame).
Tensor max_mse(const Tensor& pred, const Tensor& ref);
// Plain mean over points of |e_i|^2, same reduction layout.
Tensor point_mse(const Tensor& pred, const Tensor& ref);
// Either of the two, summed over leading axes to a scalar.
Tensor point_loss(const Tensor& pred, const Tensor& ref, bool use_max_mse);

// Treats each component of the last axis as a one-dimensional point.
Tensor maxmse_vec(const Tensor& pred, const Tensor& ref);
Tensor vector_loss(const Tensor& pred, const Tensor& ref, bool use_max_mse);

// sum_t [loss(V_t) + loss(J_t)] over [T x 778 x 3] and [T x 21 x 3].
Tensor mesh_loss(const hand::HandMesh& pred, const hand::HandMesh& gt, bool use_max_mse = true);

// Least-squares adversarial terms on scores in [0, 1].
Tensor adv_generator_loss(const Tensor& scores_generated);
Tensor discriminator_loss(const Tensor& scores_generated, const Tensor& scores_real);

// sum of squared pixel distances, [..., 21, 2].
Tensor l2d(const Tensor& pred2d, const Tensor& gt2d);

// Mesh of the monocular parameters against the ground-truth mesh plus
// per-frame parameter terms.
Tensor monocular_loss(const Tensor& mono_pose, const Tensor& mono_shape, const Tensor& gt_theta,
                      const Tensor& gt_beta, const hand::HandMesh& gt_mesh,
                      const hand::KinematicTemplate& tmpl, bool use_max_mse = true);

// Deformed one-step predictions against neighbouring targets, boundaries
// masked. `targets` are the ground-truth poses, or the predictions
// themselves for the prediction-target variant. 0 when T < 2.
Tensor motion_loss(const Tensor& poses, const Tensor& fw, const Tensor& bw, const Tensor& targets,
                   bool use_max_mse = true);

// w1 * mean_t |x_{t+1} - x_t|^2 + w2 * mean_t |x_{t+1} - 2 x_t + x_{t-1}|^2;
// each term vanishes when T is too short for it.
Tensor smooth_loss(const Tensor& fused, double w1 = 1.0, double w2 = 1.0);

struct LossTerms {
  Tensor mesh;
  Tensor adv;
  Tensor l2d;
  Tensor monocular;
  Tensor motion;
  Tensor smooth;  // already carries its two sub-weights
};

struct LossReport {
  double mesh = 0.0;
  double adv = 0.0;
  double l2d = 0.0;
  double monocular = 0.0;
  double motion = 0.0;
  double smooth = 0.0;
  double total = 0.0;
  double disc = 0.0;

  static std::string csv_header();  // step,mesh,adv,l2d,monocular,motion,smooth,total,disc
  std::string csv_row(std::size_t step) const;
};

// Weighted sum (undefined terms count as zero). Throws NumericError naming
// the first non-finite term.
std::pair<Tensor, LossReport> total_loss(const LossTerms& terms, const LossConfig& weights);

}  // namespace deformer
