#include "deformer/metrics.hpp"

#include <algorithm>
#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>

#include "deformer/error.hpp"
#include "deformer/training.hpp"

namespace deformer::metrics {

namespace {

using Points = Eigen::Matrix<double, 3, Eigen::Dynamic>;

Points to_points(const Tensor& t, const char* what) {
  if (t.ndim() != 2 || t.shape()[1] != 3) {
    throw ShapeError(std::string(what) + " expects [N x 3], got " + shape_string(t.shape()));
  }
  const std::size_t n = t.shape()[0];
  Points p(3, static_cast<Eigen::Index>(n));
  const auto d = t.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 3; ++k) p(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = d[i * 3 + k];
  }
  return p;
}

Tensor from_points(const Points& p) {
  const auto n = static_cast<std::size_t>(p.cols());
  std::vector<double> v(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 3; ++k) v[i * 3 + k] = p(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
  }
  return Tensor({n, 3}, std::move(v));
}

void check_pair(const Tensor& pred, const Tensor& gt, const char* what) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_string(pred.shape()) + " and " +
                     shape_string(gt.shape()) + " differ");
  }
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

Tensor frame(const Tensor& seq, std::size_t t) {
  const Shape& s = seq.shape();
  return reshape(slice(seq, 0, t, 1), {s[1], s[2]});
}

}  // namespace

Tensor procrustes_align(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt, "procrustes_align");
  Points p = to_points(pred, "procrustes_align");
  Points g = to_points(gt, "procrustes_align");
  if (p.cols() < 3) throw DomainError("procrustes_align needs at least 3 points");
  Points centered = g.colwise() - g.rowwise().mean();
  Eigen::JacobiSVD<Points> svd(centered);
  const auto sv = svd.singularValues();
  if (sv(0) <= 0.0 || sv(1) <= 1e-9 * sv(0)) {
    throw DomainError("procrustes_align: ground-truth points are collinear");
  }
  const Eigen::Matrix4d transform = Eigen::umeyama(p, g, true);
  Points aligned = (transform.topLeftCorner<3, 3>() * p).colwise() + transform.topRightCorner<3, 1>();
  return from_points(aligned);
}

std::vector<double> point_errors(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt, "point_errors");
  if (pred.ndim() != 2 || pred.shape()[1] != 3) throw ShapeError("point_errors expects [N x 3]");
  const auto a = pred.data();
  const auto b = gt.data();
  std::vector<double> out(pred.shape()[0]);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double dx = a[i * 3] - b[i * 3], dy = a[i * 3 + 1] - b[i * 3 + 1],
                 dz = a[i * 3 + 2] - b[i * 3 + 2];
    out[i] = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return out;
}

double mpjpe(const Tensor& pred, const Tensor& gt) { return mean_of(point_errors(pred, gt)); }

double root_aligned_mpjpe(const Tensor& pred, const Tensor& gt, std::size_t root) {
  check_pair(pred, gt, "root_aligned_mpjpe");
  if (pred.ndim() != 2 || pred.shape()[1] != 3) throw ShapeError("root_aligned_mpjpe expects [N x 3]");
  if (root >= pred.shape()[0]) throw std::out_of_range("root index out of range");
  Tensor offset = sub(slice(gt, 0, root, 1), slice(pred, 0, root, 1));
  return mpjpe(add(pred, offset), gt);
}

double procrustes_mpjpe(const Tensor& pred, const Tensor& gt) {
  return mpjpe(procrustes_align(pred, gt), gt);
}

double pck_auc(const std::vector<double>& errors) {
  if (errors.empty()) throw DomainError("pck_auc of an empty error list");
  for (double e : errors) {
    if (!(e >= 0.0)) throw DomainError("pck_auc: errors must be nonnegative");
  }
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double h = kAucMaxMm / static_cast<double>(kAucSteps);
  double area = 0.0, prev = 0.0;
  for (std::size_t k = 0; k <= kAucSteps; ++k) {
    const double tau = h * static_cast<double>(k);
    const double pck =
        static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), tau + kPckToleranceMm) - sorted.begin()) / n;
    if (k > 0) area += 0.5 * (prev + pck) * h;
    prev = pck;
  }
  return area / kAucMaxMm;
}

double f_score(const Tensor& pred_verts, const Tensor& gt_verts, double threshold_mm) {
  const auto errors = point_errors(pred_verts, gt_verts);
  if (errors.empty()) throw ShapeError("f_score of an empty mesh");
  std::size_t hit = 0;
  for (double e : errors) hit += e <= threshold_mm ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(errors.size());
}

std::vector<double> accel_errors(const Tensor& pred, const Tensor& gt, double dt) {
  check_pair(pred, gt, "accel_error");
  if (pred.ndim() != 3 || pred.shape()[2] != 3) throw ShapeError("accel_error expects [T x J x 3]");
  if (!(dt > 0.0)) throw DomainError("accel_error needs a positive frame interval");
  const std::size_t steps = pred.shape()[0], joints = pred.shape()[1];
  if (steps < 3) throw DomainError("accel_error needs at least 3 frames");
  const auto p = pred.data();
  const auto g = gt.data();
  const std::size_t stride = joints * 3;
  std::vector<double> out;
  for (std::size_t t = 1; t + 1 < steps; ++t) {
    double total = 0.0;
    for (std::size_t j = 0; j < joints; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t i = t * stride + j * 3 + k;
        const double ap = p[i + stride] - 2.0 * p[i] + p[i - stride];
        const double ag = g[i + stride] - 2.0 * g[i] + g[i - stride];
        sq += (ap - ag) * (ap - ag);
      }
      total += std::sqrt(sq) / (dt * dt);
    }
    out.push_back(total / static_cast<double>(joints));
  }
  return out;
}

double accel_error(const Tensor& pred, const Tensor& gt, double dt) {
  return mean_of(accel_errors(pred, gt, dt));
}

namespace {

struct Accumulator {
  std::size_t frames = 0;
  std::vector<double> mpjpe, root, f5, f15, accel, joint_errors;

  void add_frame(const std::vector<double>& errors, double root_err, double f5v, double f15v) {
    ++frames;
    mpjpe.push_back(mean_of(errors));
    root.push_back(root_err);
    f5.push_back(f5v);
    f15.push_back(f15v);
    joint_errors.insert(joint_errors.end(), errors.begin(), errors.end());
  }

  MetricSet finish() const {
    MetricSet m;
    m.frames = frames;
    m.accel_frames = accel.size();
    m.mpjpe_mm = mean_of(mpjpe);
    m.root_aligned_mpjpe_mm = mean_of(root);
    m.auc = pck_auc(joint_errors);
    m.f_at_5 = mean_of(f5);
    m.f_at_15 = mean_of(f15);
    m.accel_error_mm_s2 = mean_of(accel);
    return m;
  }
};

nlohmann::ordered_json metric_json(const MetricSet& m) {
  return {{"frames", m.frames},
          {"accel_frames", m.accel_frames},
          {"mpjpe_mm", m.mpjpe_mm},
          {"root_aligned_mpjpe_mm", m.root_aligned_mpjpe_mm},
          {"auc", m.auc},
          {"f_at_5", m.f_at_5},
          {"f_at_15", m.f_at_15},
          {"accel_error_mm_s2", m.accel_error_mm_s2}};
}

const char* const kBucketNames[synth::kBuckets] = {"0-25", "25-50", "50-75", "75-100"};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

EvalReport evaluate_predictions(const std::vector<SequencePrediction>& predictions,
                                const std::vector<synth::SequenceSample>& samples,
                                const hand::KinematicTemplate& tmpl, double dt,
                                const std::string& mode) {
  if (predictions.size() != samples.size()) throw ShapeError("one prediction per sample expected");
  if (samples.empty()) throw DomainError("evaluate needs at least one sequence");
  Accumulator all;
  std::array<Accumulator, synth::kBuckets> buckets;
  std::array<std::vector<double>, 21> per_joint;

  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& sample = samples[s];
    const auto& pred = predictions[s];
    const std::size_t steps = sample.steps();
    const train::SequenceTarget target = train::make_target(sample, tmpl);
    if (pred.joints.shape() != target.mesh.joints.shape() ||
        pred.vertices.shape() != target.mesh.vertices.shape()) {
      throw ShapeError("prediction shape does not match sequence " + std::to_string(s));
    }
    for (std::size_t t = 0; t < steps; ++t) {
      const Tensor pj = frame(pred.joints, t), gj = frame(target.mesh.joints, t);
      const Tensor pv = frame(pred.vertices, t), gv = frame(target.mesh.vertices, t);
      const auto errors = point_errors(procrustes_align(pj, gj), gj);
      const double root = root_aligned_mpjpe(pj, gj);
      const double f5 = f_score(pv, gv, 5.0), f15 = f_score(pv, gv, 15.0);
      const std::size_t b = synth::occlusion_bucket(sample.occlusion[t]);
      all.add_frame(errors, root, f5, f15);
      buckets[b].add_frame(errors, root, f5, f15);
      for (std::size_t j = 0; j < 21; ++j) per_joint[j].push_back(errors[j]);
    }
    if (steps >= 3) {
      const auto acc = accel_errors(pred.joints, target.mesh.joints, dt);
      for (std::size_t t = 1; t + 1 < steps; ++t) {
        all.accel.push_back(acc[t - 1]);
        buckets[synth::occlusion_bucket(sample.occlusion[t])].accel.push_back(acc[t - 1]);
      }
    }
  }

  EvalReport report;
  report.mode = mode;
  report.sequences = samples.size();
  report.overall = all.finish();
  for (std::size_t b = 0; b < synth::kBuckets; ++b) {
    if (buckets[b].frames > 0) report.buckets[b] = buckets[b].finish();
  }
  std::vector<double> means;
  for (std::size_t j = 0; j < 21; ++j) {
    report.per_joint_mpjpe[j] = mean_of(per_joint[j]);
    report.per_joint_std[j] = population_std(per_joint[j]);
    means.push_back(report.per_joint_mpjpe[j]);
  }
  report.joint_balance_std = population_std(means);
  return report;
}

SequencePrediction predict(const DeformerModel& model, const synth::SequenceSample& sample,
                           AggregationMode mode) {
  std::optional<std::vector<double>> external;
  if (mode == AggregationMode::WeightedExternal) external = train::visibility_weights(sample);
  GeneratorOutput out = model.forward(sample.grids, mode, external, true);
  return {out.mesh.joints.detach(), out.mesh.vertices.detach()};
}

EvalReport evaluate(const DeformerModel& model, const std::vector<synth::SequenceSample>& samples,
                    AggregationMode mode) {
  if (active_tape() != nullptr) throw TapeError("evaluate must run without an active tape");
  std::vector<SequencePrediction> predictions;
  predictions.reserve(samples.size());
  for (const auto& s : samples) predictions.push_back(predict(model, s, mode));
  return evaluate_predictions(predictions, samples, model.hand_template(),
                              model.config().frame_interval(), to_string(mode));
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = mode;
  j["sequences"] = sequences;
  j["overall"] = metric_json(overall);
  nlohmann::ordered_json b = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < synth::kBuckets; ++i) {
    b[kBucketNames[i]] = buckets[i] ? metric_json(*buckets[i]) : nlohmann::ordered_json(nullptr);
  }
  j["occlusion_buckets"] = b;
  j["per_joint_mpjpe_mm"] = per_joint_mpjpe;
  j["per_joint_std_mm"] = per_joint_std;
  j["joint_balance_std_mm"] = joint_balance_std;
  return j.dump(2) + "\n";
}

std::string EvalReport::csv_header() {
  std::string h = "mode,sequences,frames,mpjpe_mm,root_aligned_mpjpe_mm,auc,f_at_5,f_at_15,accel_error_mm_s2,joint_balance_std_mm";
  for (const char* name : kBucketNames) {
    const std::string p = std::string(",occ") + name;
    h += p + "_frames" + p + "_mpjpe_mm" + p + "_root_aligned_mpjpe_mm" + p + "_auc" + p +
         "_f_at_5" + p + "_f_at_15" + p + "_accel_error_mm_s2";
  }
  return h;
}

std::string EvalReport::csv_row() const {
  std::string r = mode + "," + std::to_string(sequences) + "," + std::to_string(overall.frames) +
                  "," + fmt(overall.mpjpe_mm) + "," + fmt(overall.root_aligned_mpjpe_mm) + "," +
                  fmt(overall.auc) + "," + fmt(overall.f_at_5) + "," + fmt(overall.f_at_15) + "," +
                  fmt(overall.accel_error_mm_s2) + "," + fmt(joint_balance_std);
  for (const auto& b : buckets) {
    if (!b) {
      r += ",0,,,,,,";
      continue;
    }
    r += "," + std::to_string(b->frames) + "," + fmt(b->mpjpe_mm) + "," +
         fmt(b->root_aligned_mpjpe_mm) + "," + fmt(b->auc) + "," + fmt(b->f_at_5) + "," +
         fmt(b->f_at_15) + "," + (b->accel_frames ? fmt(b->accel_error_mm_s2) : std::string());
  }
  return r;
}

std::string EvalReport::per_joint_csv_header() {
  std::string h = "mode,statistic";
  for (std::size_t j = 0; j < 21; ++j) h += ",joint" + std::to_string(j);
  return h;
}

std::string EvalReport::per_joint_csv_row() const {
  std::string mean = mode + ",mpjpe_mm", spread = mode + ",std_mm";
  for (std::size_t j = 0; j < 21; ++j) {
    mean += "," + fmt(per_joint_mpjpe[j]);
    spread += "," + fmt(per_joint_std[j]);
  }
  return mean + "\n" + spread;
}

}  // namespace deformer::metrics
