#include "deformer/losses.hpp"

#include <cmath>
#include <cstdio>

namespace deformer {
namespace {

void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

// sum e^2 / sum e over the last axis of per-point squared errors `e`,
// with the zero-error convention.
Tensor weighted_ratio(const Tensor& sq_err) {
  Tensor num = sum(square(sq_err), -1);
  Tensor den = sum(sq_err, -1);
  std::vector<double> keep(den.numel());
  std::vector<double> pad(den.numel());
  for (std::size_t i = 0; i < den.numel(); ++i) {
    const bool degenerate = den[i] < 1e-12;
    keep[i] = degenerate ? 0.0 : 1.0;
    pad[i] = degenerate ? 1.0 : 0.0;
  }
  return mul(div(num, add(den, Tensor(den.shape(), std::move(pad)))),
             Tensor(den.shape(), std::move(keep)));
}

Tensor zero() { return Tensor::scalar(0.0); }

}  // namespace

Tensor max_mse(const Tensor& pred, const Tensor& ref) {
  check_same(pred, ref, "max_mse");
  if (pred.ndim() < 2 || pred.shape()[pred.ndim() - 2] == 0) {
    throw ShapeError("max_mse expects [..., N, D] points with N >= 1");
  }
  return weighted_ratio(sum(square(sub(pred, ref)), -1));
}

Tensor point_mse(const Tensor& pred, const Tensor& ref) {
  check_same(pred, ref, "point_mse");
  if (pred.ndim() < 2) throw ShapeError("point_mse expects [..., N, D] points");
  return mean(sum(square(sub(pred, ref)), -1), -1);
}

Tensor point_loss(const Tensor& pred, const Tensor& ref, bool use_max_mse) {
  return sum(use_max_mse ? max_mse(pred, ref) : point_mse(pred, ref));
}

Tensor maxmse_vec(const Tensor& pred, const Tensor& ref) {
  check_same(pred, ref, "maxmse_vec");
  if (pred.ndim() < 1) throw ShapeError("maxmse_vec expects [..., N]");
  return weighted_ratio(square(sub(pred, ref)));
}

Tensor vector_loss(const Tensor& pred, const Tensor& ref, bool use_max_mse) {
  return sum(use_max_mse ? maxmse_vec(pred, ref) : mean(square(sub(pred, ref)), -1));
}

Tensor mesh_loss(const hand::HandMesh& pred, const hand::HandMesh& gt, bool use_max_mse) {
  if (pred.joints.shape()[0] != gt.joints.shape()[0]) {
    throw ShapeError("mesh_loss: sequence lengths differ");
  }
  Tensor joints = point_loss(pred.joints, gt.joints, use_max_mse);
  if (!pred.vertices.defined()) return joints;
  return add(point_loss(pred.vertices, gt.vertices, use_max_mse), joints);
}

Tensor adv_generator_loss(const Tensor& scores) { return mean(square(add(scores, -1.0))); }

Tensor discriminator_loss(const Tensor& generated, const Tensor& real) {
  return add(mean(square(generated)), mean(square(add(real, -1.0))));
}

Tensor l2d(const Tensor& pred2d, const Tensor& gt2d) {
  check_same(pred2d, gt2d, "l2d");
  return sum(square(sub(pred2d, gt2d)));
}

Tensor monocular_loss(const Tensor& mono_pose, const Tensor& mono_shape, const Tensor& gt_theta,
                      const Tensor& gt_beta, const hand::HandMesh& gt_mesh,
                      const hand::KinematicTemplate& tmpl, bool use_max_mse) {
  check_same(mono_pose, gt_theta, "monocular_loss pose");
  const std::size_t steps = mono_pose.shape()[0];
  if (mono_shape.shape() != Shape{steps, hand::kShapeDim}) {
    throw ShapeError("monocular shape must be [T x 10]");
  }
  const Tensor beta_ref = reshape(gt_beta, {1, hand::kShapeDim});
  hand::HandMesh mesh = hand_forward(mono_pose, mono_shape, tmpl, gt_mesh.vertices.defined());
  Tensor total = mesh_loss(mesh, gt_mesh, use_max_mse);
  total = add(total, vector_loss(mono_pose, gt_theta, use_max_mse));
  Tensor beta_rows = index_select(beta_ref, 0, std::vector<std::size_t>(steps, 0));
  return add(total, vector_loss(mono_shape, beta_rows, use_max_mse));
}

Tensor motion_loss(const Tensor& poses, const Tensor& fw, const Tensor& bw, const Tensor& targets,
                   bool use_max_mse) {
  check_same(poses, fw, "motion_loss");
  check_same(poses, bw, "motion_loss");
  check_same(poses, targets, "motion_loss");
  const std::size_t steps = poses.shape()[0];
  if (steps < 2) return zero();
  const std::size_t n = steps - 1;
  Tensor forward = add(slice(poses, 0, 0, n), slice(fw, 0, 0, n));
  Tensor backward = add(slice(poses, 0, 1, n), slice(bw, 0, 1, n));
  return add(vector_loss(forward, slice(targets, 0, 1, n), use_max_mse),
             vector_loss(backward, slice(targets, 0, 0, n), use_max_mse));
}

Tensor smooth_loss(const Tensor& fused, double w1, double w2) {
  if (fused.ndim() != 2) throw ShapeError("smooth_loss expects [T x P]");
  const std::size_t steps = fused.shape()[0];
  Tensor total = zero();
  if (steps >= 2) {
    Tensor d1 = sub(slice(fused, 0, 1, steps - 1), slice(fused, 0, 0, steps - 1));
    total = add(total, mul(mean(sum(square(d1), 1)), w1));
  }
  if (steps >= 3) {
    Tensor d2 = add(sub(slice(fused, 0, 2, steps - 2), mul(slice(fused, 0, 1, steps - 2), 2.0)),
                    slice(fused, 0, 0, steps - 2));
    total = add(total, mul(mean(sum(square(d2), 1)), w2));
  }
  return total;
}

std::string LossReport::csv_header() { return "step,mesh,adv,l2d,monocular,motion,smooth,total,disc"; }

std::string LossReport::csv_row(std::size_t step) const {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", step, mesh,
                adv, l2d, monocular, motion, smooth, total, disc);
  return buf;
}

std::pair<Tensor, LossReport> total_loss(const LossTerms& terms, const LossConfig& weights) {
  struct Item {
    const char* name;
    const Tensor* term;
    double weight;
    double LossReport::*slot;
  };
  const Item items[] = {
      {"mesh", &terms.mesh, weights.mesh, &LossReport::mesh},
      {"adv", &terms.adv, weights.adv, &LossReport::adv},
      {"l2d", &terms.l2d, weights.l2d, &LossReport::l2d},
      {"monocular", &terms.monocular, weights.monocular, &LossReport::monocular},
      {"motion", &terms.motion, weights.motion, &LossReport::motion},
      {"smooth", &terms.smooth, 1.0, &LossReport::smooth},
  };
  LossReport report;
  Tensor total = zero();
  for (const Item& item : items) {
    if (!item.term->defined()) continue;
    const double value = item.term->item();
    if (!std::isfinite(value)) {
      throw NumericError(std::string("loss term '") + item.name + "' is not finite");
    }
    report.*item.slot = value;
    if (item.weight != 0.0) total = add(total, mul(*item.term, item.weight));
  }
  report.total = total.item();
  return {total, report};
}

}  // namespace deformer
