// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails. Pass criterion numbers as
// arguments to run a subset (e.g. `acceptance 1 2 3 4 10`).

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "deformer/config.hpp"
#include "deformer/fusion.hpp"
#include "deformer/gradcheck.hpp"
#include "deformer/losses.hpp"
#include "deformer/metrics.hpp"
#include "deformer/synthdata.hpp"
#include "deformer/training.hpp"

namespace fs = std::filesystem;
using namespace deformer;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------- 1

Outcome max_mse_dominance() {
  std::mt19937_64 rng(20261);
  std::uniform_int_distribution<std::size_t> count(2, 778);
  std::normal_distribution<double> normal;
  double worst_gap = std::numeric_limits<double>::infinity(), worst_equal = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = count(rng);
    std::vector<double> a = uniform(rng, n * 3, -100, 100);
    std::vector<double> b = uniform(rng, n * 3, -100, 100);
    const double m = max_mse(Tensor({n, 3}, a), Tensor({n, 3}, b)).item();
    const double e = point_mse(Tensor({n, 3}, a), Tensor({n, 3}, b)).item();
    worst_gap = std::min(worst_gap, (m - e) / e);

    // every point displaced by the same distance in a random direction
    const double r = uniform(rng, 1, 0.1, 10)[0];
    std::vector<double> c = a;
    for (std::size_t i = 0; i < n; ++i) {
      double u[3] = {normal(rng), normal(rng), normal(rng)};
      const double len = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
      for (int k = 0; k < 3; ++k) c[i * 3 + k] += r * u[k] / len;
    }
    const double me = max_mse(Tensor({n, 3}, c), Tensor({n, 3}, a)).item();
    const double ee = point_mse(Tensor({n, 3}, c), Tensor({n, 3}, a)).item();
    worst_equal = std::max(worst_equal, std::abs(me - ee) / ee);
  }
  return {worst_gap >= -1e-12 && worst_equal <= 1e-12,
          fmt("min (maxMSE-MSE)/MSE %.3g, equal-error mismatch %.3g", worst_gap, worst_equal)};
}

// ---------------------------------------------------------------- 2

Outcome gradient_suite() {
  std::size_t total = 0, failed = 0;
  double worst = 0.0;
  std::string worst_name;
  for (auto scope : {gradcheck::Scope::Ops, gradcheck::Scope::Layers, gradcheck::Scope::EndToEnd}) {
    for (const auto& r : gradcheck::run(scope)) {
      ++total;
      if (!r.passed) {
        ++failed;
        std::fprintf(stderr, "  gradcheck %s failed: %.3g\n", r.name.c_str(), r.max_rel_error);
      }
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_name = r.name;
      }
    }
  }
  return {failed == 0, fmt("%zu checks, %zu failed, worst %.3g (%s)", total, failed, worst,
                           worst_name.c_str())};
}

// ---------------------------------------------------------------- 3

constexpr std::size_t kPose = 48;

std::vector<double> direct_deform(const std::vector<double>& p, const std::vector<double>& fw,
                                  const std::vector<double>& bw, std::size_t i, std::size_t j) {
  std::vector<double> out(p.begin() + i * kPose, p.begin() + (i + 1) * kPose);
  for (std::size_t d = 0; d < kPose; ++d) {
    if (j > i) {
      for (std::size_t k = i; k < j; ++k) out[d] += fw[k * kPose + d];
    } else {
      for (std::size_t k = j + 1; k <= i; ++k) out[d] += bw[k * kPose + d];
    }
  }
  return out;
}

std::vector<double> direct_weights(AggregationMode mode, const std::vector<double>& conf,
                                   const std::vector<double>& external) {
  const std::size_t T = conf.size();
  std::vector<double> w(T);
  double s = 0.0;
  if (mode == AggregationMode::Dynamic) {
    const double m = *std::max_element(conf.begin(), conf.end());
    for (std::size_t i = 0; i < T; ++i) s += w[i] = std::exp(conf[i] - m);
    for (double& v : w) v /= s;
  } else if (mode == AggregationMode::Average) {
    std::fill(w.begin(), w.end(), 1.0 / double(T));
  } else {
    for (double v : external) s += v;
    for (std::size_t i = 0; i < T; ++i) w[i] = external[i] / (s + 1e-8);
  }
  return w;
}

Outcome fusion_oracle() {
  std::mt19937_64 rng(20263);
  std::uniform_int_distribution<std::size_t> len(1, 7);
  const AggregationMode modes[] = {AggregationMode::Center, AggregationMode::Average,
                                   AggregationMode::WeightedExternal, AggregationMode::Dynamic};
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = len(rng);
    auto p = uniform(rng, T * kPose, -3, 3);
    auto fw = uniform(rng, T * kPose, -0.3, 0.3);
    auto bw = uniform(rng, T * kPose, -0.3, 0.3);
    auto conf = uniform(rng, T, -4, 4);
    auto ext = uniform(rng, T, 0, 1);
    const Tensor P({T, kPose}, p), FW({T, kPose}, fw), BW({T, kPose}, bw), C({T}, conf);
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t j = 0; j < T; ++j) {
        const auto ref = direct_deform(p, fw, bw, i, j);
        const Tensor got = deform(P, FW, BW, i, j);
        for (std::size_t d = 0; d < kPose; ++d) worst = std::max(worst, std::abs(got[d] - ref[d]));
      }
    }
    for (auto mode : modes) {
      const auto external = mode == AggregationMode::WeightedExternal
                                 ? std::optional<std::vector<double>>(ext)
                                 : std::nullopt;
      const Tensor all = fuse_sequence(P, FW, BW, C, mode, external);
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> ref(kPose, 0.0);
        if (mode == AggregationMode::Center || T == 1) {
          std::copy(p.begin() + t * kPose, p.begin() + (t + 1) * kPose, ref.begin());
        } else {
          const auto w = direct_weights(mode, conf, ext);
          for (std::size_t i = 0; i < T; ++i) {
            const auto moved = direct_deform(p, fw, bw, i, t);
            for (std::size_t d = 0; d < kPose; ++d) ref[d] += w[i] * moved[d];
          }
        }
        const Tensor single = fuse(P, FW, BW, C, t, mode, external);
        for (std::size_t d = 0; d < kPose; ++d) {
          worst = std::max(worst, std::abs(all.at({t, d}) - ref[d]));
          worst = std::max(worst, std::abs(single[d] - ref[d]));
        }
      }
    }
  }

  // Dyadic poses keep every partial sum exact, so the deformation of any
  // frame to any target with true motions reproduces the target bit for bit.
  std::uniform_int_distribution<int> tick(-2048, 2048);
  std::size_t inexact_deforms = 0;
  double fused_gap = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = len(rng);
    std::vector<double> gt(T * kPose);
    for (double& v : gt) v = tick(rng) / 1024.0;
    const Tensor G({T, kPose}, gt);
    auto [fw, bw] = motion_targets(G);
    const Tensor C({T}, uniform(rng, T, -3, 3));
    for (std::size_t i = 0; i < T; ++i) {
      for (std::size_t j = 0; j < T; ++j) {
        const Tensor moved = deform(G, fw, bw, i, j);
        for (std::size_t d = 0; d < kPose; ++d) inexact_deforms += moved[d] != gt[j * kPose + d];
      }
    }
    for (auto mode : {AggregationMode::Center, AggregationMode::Average, AggregationMode::Dynamic}) {
      const Tensor fused = fuse_sequence(G, fw, bw, C, mode);
      for (std::size_t k = 0; k < gt.size(); ++k) {
        fused_gap = std::max(fused_gap, std::abs(fused[k] - gt[k]));
      }
    }
  }
  return {worst <= 1e-12 && inexact_deforms == 0 && fused_gap <= 1e-12,
          fmt("max oracle gap %.3g, inexact telescoped deforms %zu, fused gap %.3g", worst,
              inexact_deforms, fused_gap)};
}

// ---------------------------------------------------------------- 4

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

Points to_points(const Tensor& t) {
  const std::size_t n = t.numel() / 3;
  Points m(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) m(i, k) = t[i * 3 + k];
  }
  return m;
}

Tensor to_tensor(const Points& m) {
  std::vector<double> v(m.rows() * 3);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (int k = 0; k < 3; ++k) v[i * 3 + k] = m(i, k);
  }
  return Tensor({std::size_t(m.rows()), 3}, v);
}

// Horn's closed form: the rotation is the top eigenvector of a symmetric
// 4x4 built from the cross-covariance, read as a unit quaternion.
Points horn_align(const Points& pred, const Points& gt) {
  const Eigen::RowVector3d mp = pred.colwise().mean(), mg = gt.colwise().mean();
  const Points a = pred.rowwise() - mp, b = gt.rowwise() - mg;
  const Eigen::Matrix3d S = a.transpose() * b;
  Eigen::Matrix4d N;
  N << S(0, 0) + S(1, 1) + S(2, 2), S(1, 2) - S(2, 1), S(2, 0) - S(0, 2), S(0, 1) - S(1, 0),
      S(1, 2) - S(2, 1), S(0, 0) - S(1, 1) - S(2, 2), S(0, 1) + S(1, 0), S(2, 0) + S(0, 2),
      S(2, 0) - S(0, 2), S(0, 1) + S(1, 0), -S(0, 0) + S(1, 1) - S(2, 2), S(1, 2) + S(2, 1),
      S(0, 1) - S(1, 0), S(2, 0) + S(0, 2), S(1, 2) + S(2, 1), -S(0, 0) - S(1, 1) + S(2, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(N);
  const Eigen::Vector4d q = eig.eigenvectors().col(3);
  const Eigen::Matrix3d R = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
  const Points rotated = a * R.transpose();
  const double scale = (rotated.array() * b.array()).sum() / a.squaredNorm();
  return (scale * rotated).rowwise() + mg;
}

double mean_distance(const Points& a, const Points& b) {
  return (a - b).rowwise().norm().mean();
}

double direct_auc(const std::vector<double>& errors) {
  double area = 0.0, previous = 0.0;
  for (std::size_t s = 0; s <= metrics::kAucSteps; ++s) {
    const double tau = metrics::kAucMaxMm * double(s) / double(metrics::kAucSteps);
    std::size_t hits = 0;
    for (double e : errors) hits += e <= tau + metrics::kPckToleranceMm;
    const double pck = double(hits) / double(errors.size());
    if (s > 0) area += 0.5 * (pck + previous) / double(metrics::kAucSteps);
    previous = pck;
  }
  return area;
}

double direct_accel(const std::vector<Points>& pred, const std::vector<Points>& gt, double dt) {
  double total = 0.0;
  for (std::size_t t = 1; t + 1 < pred.size(); ++t) {
    const Points ap = (pred[t + 1] - 2.0 * pred[t] + pred[t - 1]) / (dt * dt);
    const Points ag = (gt[t + 1] - 2.0 * gt[t] + gt[t - 1]) / (dt * dt);
    total += (ap - ag).rowwise().norm().mean();
  }
  return total / double(pred.size() - 2);
}

Outcome metrics_oracles() {
  std::mt19937_64 rng(20264);
  std::normal_distribution<double> normal;
  double recovery = 0.0, gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 21;
    Points gt = to_points(Tensor({n, 3}, uniform(rng, n * 3, -80, 80)));
    const Eigen::Matrix3d R =
        Eigen::Quaterniond(Eigen::Vector4d(normal(rng), normal(rng), normal(rng), normal(rng))
                               .normalized())
            .toRotationMatrix();
    const double s = uniform(rng, 1, 0.5, 2.0)[0];
    const Eigen::RowVector3d shift(normal(rng) * 100, normal(rng) * 100, normal(rng) * 100);
    Points moved = ((s * gt) * R.transpose()).rowwise() + shift;
    const Tensor aligned = metrics::procrustes_align(to_tensor(moved), to_tensor(gt));
    recovery = std::max(recovery, (to_points(aligned) - gt).rowwise().norm().maxCoeff());

    Points noisy = moved + to_points(Tensor({n, 3}, uniform(rng, n * 3, -8, 8)));
    const Tensor pred = to_tensor(noisy), ref = to_tensor(gt);
    const Points horn = horn_align(noisy, gt);
    gap = std::max(gap, std::abs(metrics::procrustes_mpjpe(pred, ref) - mean_distance(horn, gt)));
    gap = std::max(gap, std::abs(metrics::mpjpe(pred, ref) - mean_distance(noisy, gt)));
    const Points root_p = noisy.rowwise() - noisy.row(0), root_g = gt.rowwise() - gt.row(0);
    gap = std::max(gap, std::abs(metrics::root_aligned_mpjpe(pred, ref) -
                                 mean_distance(root_p, root_g)));

    std::vector<double> errors = uniform(rng, 200, 0, 70);
    errors[0] = 0.0;
    errors[1] = 25.0;
    gap = std::max(gap, std::abs(metrics::pck_auc(errors) - direct_auc(errors)));

    const std::size_t v = 778;
    const Points gv = to_points(Tensor({v, 3}, uniform(rng, v * 3, -90, 90)));
    const Points pv = gv + to_points(Tensor({v, 3}, uniform(rng, v * 3, -12, 12)));
    for (double th : {5.0, 15.0}) {
      const double direct =
          double(((pv - gv).rowwise().norm().array() <= th).count()) / double(v);
      gap = std::max(gap, std::abs(metrics::f_score(to_tensor(pv), to_tensor(gv), th) - direct));
    }

    const std::size_t T = 3 + trial % 5;
    const double dt = 1.0 / uniform(rng, 1, 2, 30)[0];
    std::vector<Points> ps, gs;
    std::vector<double> flat_p, flat_g;
    for (std::size_t t = 0; t < T; ++t) {
      auto a = uniform(rng, n * 3, -60, 60);
      auto b = uniform(rng, n * 3, -60, 60);
      ps.push_back(to_points(Tensor({n, 3}, a)));
      gs.push_back(to_points(Tensor({n, 3}, b)));
      flat_p.insert(flat_p.end(), a.begin(), a.end());
      flat_g.insert(flat_g.end(), b.begin(), b.end());
    }
    const double got = metrics::accel_error(Tensor({T, n, 3}, flat_p), Tensor({T, n, 3}, flat_g), dt);
    const double ref_accel = direct_accel(ps, gs, dt);
    gap = std::max(gap, std::abs(got - ref_accel) / std::max(1.0, std::abs(ref_accel)));
  }
  return {recovery < 1e-9 && gap <= 1e-9,
          fmt("Procrustes residual %.3g mm, max oracle gap %.3g", recovery, gap)};
}

// ---------------------------------------------------------------- 5-7, 9

class DeskBench {
 public:
  DeskBench() : base_(desk_preset()), dir_(fs::temp_directory_path() / "deformer_acceptance") {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    train_ = synth::generate_split(base_, synth::Split::Train);
    test_ = synth::generate_split(base_, synth::Split::Test);
  }
  ~DeskBench() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  const Config& base() const { return base_; }
  const fs::path& dir() const { return dir_; }
  const std::vector<synth::SequenceSample>& train() const { return train_; }

  static Config seeded(Config c, int k) {
    c.train.seed = 1 + k;
    c.model.init_seed = 7 + k;
    return c;
  }

  struct Result {
    metrics::EvalReport center;
    metrics::EvalReport dynamic;
  };

  Result evaluate(train::Trainer& trainer) const {
    return {metrics::evaluate(trainer.model(), test_, AggregationMode::Center),
            metrics::evaluate(trainer.model(), test_, AggregationMode::Dynamic)};
  }

  // Full run; `midway` is called once after `midway_step` global steps.
  Result run(const Config& config, const std::string& label, const std::string& out_dir = "",
             const std::function<void(train::Trainer&)>& midway = {},
             std::size_t midway_step = 0) const {
    const auto t0 = std::chrono::steady_clock::now();
    train::Trainer trainer(config, train_);
    train::FitOptions options;
    options.out_dir = out_dir;
    if (midway) {
      options.max_steps = midway_step;
      trainer.fit(options);
      midway(trainer);
      options.max_steps = 0;
    }
    trainer.fit(options);
    Result r = evaluate(trainer);
    log(label, t0, r);
    return r;
  }

  static void log(const std::string& label, std::chrono::steady_clock::time_point t0,
                  const Result& r) {
    const double minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    std::fprintf(stderr,
                 "  [%s] %.1f min: center %.3f mm, dynamic %.3f mm, accel %.1f mm/s^2, joint std "
                 "%.3f\n",
                 label.c_str(), minutes, r.center.overall.mpjpe_mm, r.dynamic.overall.mpjpe_mm,
                 r.dynamic.overall.accel_error_mm_s2, r.dynamic.joint_balance_std);
  }

 private:
  Config base_;
  fs::path dir_;
  std::vector<synth::SequenceSample> train_;
  std::vector<synth::SequenceSample> test_;
};

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_file(const fs::path& a, const fs::path& b) {
  return fs::exists(a) && fs::exists(b) && read_bytes(a) == read_bytes(b);
}

// ---------------------------------------------------------------- 8

Outcome overfit_smoke(const Config& base, const std::vector<synth::SequenceSample>& train) {
  const std::vector<synth::SequenceSample> subset(train.begin(), train.begin() + 10);
  Config config = base;
  config.train.epochs = 1000;
  train::Trainer trainer(config, subset);
  train::FitOptions options;
  options.max_steps = 200;
  trainer.fit(options);
  const auto& h = trainer.history();
  if (h.size() != 200) return {false, fmt("ran %zu steps", h.size())};
  const double first = h.front().total, last = h.back().total;
  return {last < 0.5 * first, fmt("step 1 %.1f, step 200 %.1f, ratio %.3f", first, last, last / first)};
}

// ---------------------------------------------------------------- 10

Outcome preset_snapshot() {
  const Config p = parse_config("preset = paper\n");
  std::vector<std::string> wrong;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) wrong.emplace_back(what);
  };
  expect(p.preset == "paper", "preset");
  expect(p.data.seq_len == 7, "T");
  expect(p.data.stride == 10, "stride");
  expect(p.model.spatial_encoder_layers == 3 && p.model.spatial_decoder_layers == 3, "spatial layers");
  expect(p.model.temporal_encoder_layers == 3 && p.model.temporal_decoder_layers == 3,
         "temporal layers");
  expect(p.model.heads == 8, "heads");
  expect(p.model.ffn_dim == 256, "ffn");
  expect(p.model.query_dim == 256, "query");
  expect(p.train.lr_generator == 1e-5, "generator lr");
  expect(p.train.lr_discriminator == 1e-3, "discriminator lr");
  expect(p.train.lr_decay == 0.7 && p.train.lr_decay_every == 10, "decay");
  expect(p.train.epochs == 60, "epochs");
  std::string detail = wrong.empty() ? "all documented values match" : "mismatch:";
  for (const auto& w : wrong) detail += " " + w;
  return {wrong.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
  auto wanted = [&](int c) { return selected.empty() || selected.count(c) > 0; };

  int failures = 0;
  auto report = [&](int id, const char* name, double seconds, const Outcome& o) {
    std::printf("[%s] criterion %d %s: %s (%.1f s)\n", o.passed ? "PASS" : "FAIL", id, name,
                o.detail.c_str(), seconds);
    std::fflush(stdout);
    failures += !o.passed;
  };
  auto timed = [&](int id, const char* name, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    report(id, name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), o);
  };

  timed(1, "maxMSE dominance", max_mse_dominance);
  timed(2, "gradient suite", gradient_suite);
  timed(3, "fusion oracle", fusion_oracle);
  timed(4, "metrics oracles", metrics_oracles);

  const bool training = wanted(5) || wanted(6) || wanted(7) || wanted(8) || wanted(9);
  if (training) {
    DeskBench bench;
    timed(8, "overfit smoke", [&] { return overfit_smoke(bench.base(), bench.train()); });

    std::vector<DeskBench::Result> full, mse, plain;
    Outcome determinism{false, "not run"};
    double seconds9 = 0.0, bench_seconds = 0.0;
    const auto bench_start = std::chrono::steady_clock::now();
    if (wanted(5) || wanted(6) || wanted(7) || wanted(9)) {
      const fs::path a = bench.dir() / "a", b = bench.dir() / "b", c = bench.dir() / "c";
      const fs::path snapshot = bench.dir() / "midway.dfrm";
      const std::size_t batches = (bench.train().size() + bench.base().train.batch_size - 1) /
                                  bench.base().train.batch_size;
      const std::size_t midway_step = batches * (bench.base().train.epochs - 2) + batches / 2;
      for (int k = 0; k < 3; ++k) {
        const Config config = DeskBench::seeded(bench.base(), k);
        if (k == 0) {
          full.push_back(bench.run(
              config, "full seed 1", a.string(),
              [&](train::Trainer& t) { t.save_checkpoint(snapshot.string()); }, midway_step));
        } else {
          full.push_back(bench.run(config, "full seed " + std::to_string(k + 1)));
        }
        if (k == 0 && wanted(9)) {
          const auto t0 = std::chrono::steady_clock::now();
          bench.run(config, "repeat seed 1", b.string());
          const auto t_resume = std::chrono::steady_clock::now();
          train::Trainer resumed(config, bench.train());
          resumed.resume(snapshot.string());
          train::FitOptions options;
          options.out_dir = c.string();
          resumed.fit(options);
          DeskBench::log("resumed seed 1", t_resume, bench.evaluate(resumed));
          const bool repeat = same_file(a / "checkpoint.dfrm", b / "checkpoint.dfrm") &&
                              same_file(a / "train_log.csv", b / "train_log.csv");
          const bool resume = same_file(a / "checkpoint.dfrm", c / "checkpoint.dfrm") &&
                              same_file(a / "train_log.csv", c / "train_log.csv");
          determinism = {repeat && resume,
                         fmt("repeat run %s, resume from step %zu %s",
                             repeat ? "bit-identical" : "differs", midway_step,
                             resume ? "bit-identical" : "differs")};
          seconds9 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        if (wanted(6)) {
          Config c6 = config;
          c6.loss.max_mse = false;
          mse.push_back(bench.run(c6, "mse seed " + std::to_string(k + 1)));
        }
        if (wanted(7)) {
          Config c7 = config;
          c7.train.smoothness = false;
          c7.train.discriminator = false;
          plain.push_back(bench.run(c7, "no smooth/disc seed " + std::to_string(k + 1)));
        }
      }
    }
    bench_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - bench_start).count() -
        seconds9;

    auto pick = [](const std::vector<DeskBench::Result>& rs, auto field) {
      std::vector<double> v;
      for (const auto& r : rs) v.push_back(field(r));
      return median3(v);
    };
    auto center = [](const DeskBench::Result& r) { return r.center.overall.mpjpe_mm; };
    auto dynamic = [](const DeskBench::Result& r) { return r.dynamic.overall.mpjpe_mm; };
    auto balance = [](const DeskBench::Result& r) { return r.dynamic.joint_balance_std; };
    auto accel = [](const DeskBench::Result& r) { return r.dynamic.overall.accel_error_mm_s2; };

    if (wanted(5)) {
      std::vector<double> ratios;
      for (const auto& r : full) ratios.push_back(dynamic(r) / center(r));
      const double ratio = median3(ratios);
      report(5, "dynamic fusion vs center", bench_seconds,
             {ratio <= 0.95, fmt("median Dynamic/Center %.4f (Dynamic %.3f mm, Center %.3f mm)",
                                 ratio, pick(full, dynamic), pick(full, center))});
    }
    if (wanted(6)) {
      const double m_max = pick(full, dynamic), m_mse = pick(mse, dynamic);
      const double s_max = pick(full, balance), s_mse = pick(mse, balance);
      report(6, "maxMSE balance", bench_seconds,
             {m_max <= 1.02 * m_mse && s_max < s_mse,
              fmt("MPJPE maxMSE %.3f vs MSE %.3f mm, per-joint std %.3f vs %.3f", m_max, m_mse,
                  s_max, s_mse)});
    }
    if (wanted(7)) {
      const double a_full = pick(full, accel), a_plain = pick(plain, accel);
      report(7, "smoothness/discriminator ablation", bench_seconds,
             {a_plain > a_full,
              fmt("accel error full %.2f vs without %.2f mm/s^2", a_full, a_plain)});
    }
    if (wanted(9)) report(9, "determinism", seconds9, determinism);
  }

  timed(10, "paper preset", preset_snapshot);
  return failures == 0 ? 0 : 1;
}
