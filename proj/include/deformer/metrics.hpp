#pragma once

// Pose and mesh accuracy metrics plus occlusion-stratified evaluation of a
// trained model. Distances are in millimetres.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "deformer/model.hpp"
#include "deformer/synthdata.hpp"

namespace deformer::metrics {

inline constexpr double kAucMaxMm = 50.0;
inline constexpr std::size_t kAucSteps = 100;
// Alignment round-off must not turn an exact prediction into a miss at 0 mm.
inline constexpr double kPckToleranceMm = 1e-9;

// Similarity transform (rotation without reflection, uniform scale,
// translation) of pred [N x 3] onto gt [N x 3] minimizing squared error.
// Throws DomainError for N < 3 or collinear gt.
Tensor procrustes_align(const Tensor& pred, const Tensor& gt);

// Euclidean distance per point, [N x 3] pairs -> N values.
std::vector<double> point_errors(const Tensor& pred, const Tensor& gt);
double mpjpe(const Tensor& pred, const Tensor& gt);
double root_aligned_mpjpe(const Tensor& pred, const Tensor& gt, std::size_t root = 0);
double procrustes_mpjpe(const Tensor& pred, const Tensor& gt);

// Area under the fraction-within-threshold curve over 0..50 mm (101
// thresholds, trapezoid rule), normalized to [0, 1]. An error counts as
// within a threshold up to kPckToleranceMm.
double pck_auc(const std::vector<double>& errors_mm);

// Index-matched vertices: fraction within the threshold.
double f_score(const Tensor& pred_verts, const Tensor& gt_verts, double threshold_mm);

// Per interior frame t = 1..T-2: mean over joints of |a_pred - a_gt|.
std::vector<double> accel_errors(const Tensor& pred_seq, const Tensor& gt_seq, double dt);
// Mean of accel_errors. Throws DomainError for T < 3.
double accel_error(const Tensor& pred_seq, const Tensor& gt_seq, double dt);

struct MetricSet {
  std::size_t frames = 0;
  std::size_t accel_frames = 0;
  double mpjpe_mm = 0.0;
  double root_aligned_mpjpe_mm = 0.0;
  double auc = 0.0;
  double f_at_5 = 0.0;
  double f_at_15 = 0.0;
  double accel_error_mm_s2 = 0.0;  // 0 when accel_frames == 0
};

struct EvalReport {
  std::string mode;
  std::size_t sequences = 0;
  MetricSet overall;
  std::array<std::optional<MetricSet>, synth::kBuckets> buckets;  // empty when unpopulated
  std::array<double, 21> per_joint_mpjpe{};
  std::array<double, 21> per_joint_std{};  // spread of each joint's error over frames
  double joint_balance_std = 0.0;          // spread of per_joint_mpjpe over the joints

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
  static std::string per_joint_csv_header();
  std::string per_joint_csv_row() const;
};

// Predicted meshes of one sequence.
struct SequencePrediction {
  Tensor joints;    // [T x 21 x 3]
  Tensor vertices;  // [T x 778 x 3]
};

// Scores predictions against the ground truth of `samples` (same order).
EvalReport evaluate_predictions(const std::vector<SequencePrediction>& predictions,
                                const std::vector<synth::SequenceSample>& samples,
                                const hand::KinematicTemplate& tmpl, double dt,
                                const std::string& mode);

SequencePrediction predict(const DeformerModel& model, const synth::SequenceSample& sample,
                           AggregationMode mode);

// Inference on every sample followed by evaluate_predictions.
EvalReport evaluate(const DeformerModel& model, const std::vector<synth::SequenceSample>& samples,
                    AggregationMode mode);

}  // namespace deformer::metrics
