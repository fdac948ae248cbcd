#include "deformer/synthdata.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "deformer/random.hpp"
#include "test_support.hpp"

namespace deformer::synth {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("deformer_synth_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

Config small_config() {
  Config c;
  c.data.train_sequences = 5;
  c.data.test_sequences = 3;
  return c;
}

TEST(Trajectory, DeterministicAndBounded) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> len(2, 12), stride(1, 20);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint64_t seed = rng();
    const std::size_t steps = trial < 500 ? 7 : len(rng);
    const std::size_t gap = trial < 500 ? 10 : stride(rng);
    Trajectory a = sample_trajectory(seed, steps, gap);
    if (trial % 100 == 0) {
      Trajectory b = sample_trajectory(seed, steps, gap);
      ASSERT_EQ(a.theta.to_vector(), b.theta.to_vector());
      ASSERT_EQ(a.beta.to_vector(), b.beta.to_vector());
    }
    for (double v : a.beta.to_vector()) ASSERT_LE(std::abs(v), 3.0);
    for (std::size_t t = 1; t < steps; ++t) {
      for (std::size_t c = 0; c < hand::kPoseDim; ++c) {
        worst = std::max(worst, std::abs(a.theta.at({t, c}) - a.theta.at({t - 1, c})));
      }
    }
  }
  EXPECT_LE(worst, kMaxStep);
  EXPECT_GT(worst, 0.5 * kMaxStep);  // the bound is actually exercised
}

TEST(Trajectory, SingleFrame) {
  Trajectory t = sample_trajectory(5, 1, 10);
  EXPECT_EQ(t.theta.shape(), (Shape{1, 48}));
  EXPECT_EQ(t.beta.shape(), (Shape{10}));
}

TEST(Render, PeaksSitAtNearestCells) {
  GridSpec spec;
  spec.noise = 0.0;
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor uv = testing::random_const(rng, {21, 2}, 0.0, 16.0);
    Tensor grid = render_grid(uv, spec, 7);
    for (std::size_t j = 0; j < 21; ++j) {
      std::size_t best = 0;
      for (std::size_t cell = 1; cell < 256; ++cell) {
        if (grid[cell * 32 + j] > grid[best * 32 + j]) best = cell;
      }
      const std::size_t row = std::min<std::size_t>(15, std::size_t(uv.at({j, 1})));
      const std::size_t col = std::min<std::size_t>(15, std::size_t(uv.at({j, 0})));
      EXPECT_EQ(best, row * 16 + col);
    }
  }
}

TEST(Render, NoiseStaysBelowPeakAndChannelsAreBounded) {
  GridSpec spec;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor uv = testing::random_const(rng, {21, 2}, 0.5, 15.5);
    Tensor grid = render_grid(uv, spec, trial);
    for (double v : grid.to_vector()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
    for (std::size_t cell = 0; cell < 256; ++cell) {
      for (std::size_t c = 21; c < 32; ++c) ASSERT_LE(grid[cell * 32 + c], spec.noise);
    }
    // The peak cell of every joint is within one cell of its nearest cell,
    // and its value exceeds the nearest cell's by at most twice the noise.
    for (std::size_t j = 0; j < 21; ++j) {
      std::size_t best = 0;
      for (std::size_t cell = 1; cell < 256; ++cell) {
        if (grid[cell * 32 + j] > grid[best * 32 + j]) best = cell;
      }
      const long row = long(uv.at({j, 1})), col = long(uv.at({j, 0}));
      EXPECT_LE(std::abs(long(best / 16) - row), 1);
      EXPECT_LE(std::abs(long(best % 16) - col), 1);
    }
  }
  Tensor uv = testing::random_const(rng, {21, 2}, 0.5, 15.5);
  EXPECT_EQ(render_grid(uv, spec, 11).to_vector(), render_grid(uv, spec, 11).to_vector());
  EXPECT_NE(render_grid(uv, spec, 11).to_vector(), render_grid(uv, spec, 12).to_vector());
  std::vector<double> outside = uv.to_vector();
  outside[0] = -1.0;
  EXPECT_THROW(render_grid(Tensor({21, 2}, outside), spec, 1), DomainError);
}

TEST(Blur, MatchesNeighbourhoodMean) {
  std::mt19937_64 rng(4);
  Tensor g = testing::random_const(rng, {5, 4, 2}, 0, 1);
  Tensor b = box_blur(g);
  for (long r = 0; r < 5; ++r) {
    for (long c = 0; c < 4; ++c) {
      for (std::size_t k = 0; k < 2; ++k) {
        double s = 0.0;
        int n = 0;
        for (long dr = -1; dr <= 1; ++dr) {
          for (long dc = -1; dc <= 1; ++dc) {
            if (r + dr < 0 || r + dr >= 5 || c + dc < 0 || c + dc >= 4) continue;
            s += g.at({std::size_t(r + dr), std::size_t(c + dc), k});
            ++n;
          }
        }
        EXPECT_NEAR(b.at({std::size_t(r), std::size_t(c), k}), s / n, 1e-15);
      }
    }
  }
  Tensor flat = Tensor::full({4, 4, 3}, 0.3);
  for (double v : box_blur(flat).to_vector()) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(Corrupt, ExtremeTargets) {
  GridSpec spec;
  std::mt19937_64 rng(5);
  Tensor uv = testing::random_const(rng, {21, 2}, 0.5, 15.5);
  Tensor grid = render_grid(uv, spec, 1);
  Corruption none = corrupt(grid, uv, 0.0, false, 3);
  EXPECT_EQ(none.occlusion, 0.0);
  EXPECT_EQ(none.grid.to_vector(), grid.to_vector());
  Corruption all = corrupt(grid, uv, 1.0, false, 3);
  EXPECT_EQ(all.occlusion, 1.0);
  for (double v : all.grid.to_vector()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(corrupt(grid, uv, 1.5, false, 3), DomainError);
}

TEST(Corrupt, MeasuredOcclusionTracksTargetAndMask) {
  GridSpec spec;
  std::mt19937_64 rng(6);
  const auto tmpl = hand::template_from_seed(42);
  const Config cfg;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    // Realistic joint layouts: project a random posed hand.
    Trajectory traj = sample_trajectory(rng(), 1, 10);
    Tensor joints = hand::hand_forward(traj.theta, traj.beta, tmpl, false).joints;
    hand::Camera cam = sample_camera(joints, spec, cfg.data, rng());
    Tensor uv = reshape(hand::project_2d(joints, cam), {21, 2});
    const double target = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    Corruption c = corrupt(render_grid(uv, spec, rng()), uv, target, trial % 5 == 0, rng());
    worst = std::max(worst, std::abs(c.occlusion - target));
    ASSERT_DOUBLE_EQ(c.occlusion, occluded_fraction(uv, c.rect));
    // Definitional identity: a joint counts as occluded iff its cell is masked.
    std::size_t hidden = 0;
    for (std::size_t j = 0; j < 21; ++j) {
      const std::size_t row = std::size_t(uv.at({j, 1})), col = std::size_t(uv.at({j, 0}));
      bool zero = true;
      for (std::size_t k = 0; k < 32; ++k) zero = zero && c.grid.at({row, col, k}) == 0.0;
      const bool inside = row >= c.rect.row0 && row < c.rect.row1 && col >= c.rect.col0 &&
                          col < c.rect.col1;
      if (inside) {
        ASSERT_TRUE(zero);
        ++hidden;
      }
    }
    ASSERT_DOUBLE_EQ(c.occlusion, hidden / 21.0);
  }
  EXPECT_LE(worst, 0.15);
}

TEST(Schedule, HeavyAndCleanFramesAlwaysPresent) {
  DataConfig data;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const std::size_t steps = 3 + seed % 6;
    auto s = corruption_schedule(steps, data, seed);
    ASSERT_EQ(s.size(), steps);
    std::size_t heavy = 0, clean = 0;
    for (const auto& f : s) {
      heavy += f.target >= data.heavy_occlusion;
      clean += f.target == 0.0 && !f.blur;
    }
    EXPECT_GE(heavy, 1u);
    EXPECT_GE(clean, 2u);
  }
  EXPECT_THROW(corruption_schedule(2, data, 1), ConfigError);
}

TEST(Sequence, FramesAreConsistentWithGroundTruth) {
  const Config cfg = small_config();
  const auto tmpl = hand::template_from_seed(cfg.data.template_seed);
  for (std::size_t i = 0; i < 4; ++i) {
    SequenceSample s = generate_sequence(cfg, tmpl, Split::Train, i);
    ASSERT_EQ(s.grids.shape(), (Shape{7, 16, 16, 32}));
    Tensor uv = ground_truth_2d(s, tmpl);
    ASSERT_EQ(uv.shape(), (Shape{7, 21, 2}));
    std::size_t heavy = 0, clean = 0;
    for (std::size_t t = 0; t < 7; ++t) {
      std::size_t hidden = 0;
      for (std::size_t j = 0; j < 21; ++j) {
        const double x = uv.at({t, j, 0}), y = uv.at({t, j, 1});
        ASSERT_GE(x, 0.5);
        ASSERT_LE(x, 15.5);
        ASSERT_GE(y, 0.5);
        ASSERT_LE(y, 15.5);
        bool zero = true;
        for (std::size_t k = 0; k < 32; ++k) {
          zero = zero && s.grids.at({t, std::size_t(y), std::size_t(x), k}) == 0.0;
        }
        hidden += zero;
      }
      EXPECT_DOUBLE_EQ(s.occlusion[t], hidden / 21.0) << "sequence " << i << " frame " << t;
      heavy += s.occlusion[t] >= 0.5;
      clean += s.occlusion[t] == 0.0 && !s.blur[t];
    }
    EXPECT_GE(heavy, 1u);
    EXPECT_GE(clean, 2u);
  }
}

TEST(Dataset, RegenerationIsByteIdenticalAndRoundTrips) {
  const Config cfg = small_config();
  const auto a = scratch_dir("a"), b = scratch_dir("b");
  DatasetManifest m = generate_dataset(cfg, a.string());
  generate_dataset(cfg, b.string());
  for (const char* f : {"train.jsonl", "test.jsonl", "manifest.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  std::size_t total = 0;
  for (std::size_t n : m.buckets()) total += n;
  EXPECT_EQ(total, m.total_frames());
  EXPECT_EQ(m.total_frames(), 8u * 7u);

  Dataset d = load_dataset(a.string());
  EXPECT_EQ(d.manifest.data_hash, m.data_hash);
  ASSERT_EQ(d.train.size(), 5u);
  ASSERT_EQ(d.test.size(), 3u);
  const auto fresh = generate_split(cfg, Split::Test);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(d.test[i].seed, fresh[i].seed);
    EXPECT_EQ(d.test[i].grids.to_vector(), fresh[i].grids.to_vector());
    EXPECT_EQ(d.test[i].gt_theta.to_vector(), fresh[i].gt_theta.to_vector());
    EXPECT_EQ(d.test[i].gt_beta.to_vector(), fresh[i].gt_beta.to_vector());
    EXPECT_EQ(d.test[i].camera.rotation, fresh[i].camera.rotation);
    EXPECT_EQ(d.test[i].camera.translation, fresh[i].camera.translation);
    EXPECT_EQ(d.test[i].occlusion, fresh[i].occlusion);
    EXPECT_EQ(d.test[i].blur, fresh[i].blur);
  }
  EXPECT_NO_THROW(check_compatible(d.manifest, cfg));
  Config other = cfg;
  other.data.seed += 1;
  EXPECT_THROW(check_compatible(d.manifest, other), CompatibilityError);
  other = cfg;
  other.train.epochs = 1;
  EXPECT_NO_THROW(check_compatible(d.manifest, other));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Dataset, ErrorsAreTyped) {
  Config cfg = small_config();
  cfg.data.seq_len = 2;
  EXPECT_THROW(generate_dataset(cfg, scratch_dir("short").string()), ConfigError);
  EXPECT_THROW(load_dataset(scratch_dir("missing").string()), IoError);

  const auto dir = scratch_dir("broken");
  generate_dataset(small_config(), dir.string());
  {
    std::ofstream out(dir / "test.jsonl", std::ios::app);
    out << "{\"seed\": 1, \"grid_shape\": [1, 2]}\n";
  }
  EXPECT_THROW(load_dataset(dir.string()), IoError);
  {
    std::ofstream out(dir / "test.jsonl");
    out << "{not json\n";
  }
  EXPECT_THROW(read_sequences((dir / "test.jsonl").string()), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Buckets, Edges) {
  EXPECT_EQ(occlusion_bucket(0.0), 0u);
  EXPECT_EQ(occlusion_bucket(0.2499), 0u);
  EXPECT_EQ(occlusion_bucket(0.25), 1u);
  EXPECT_EQ(occlusion_bucket(0.5), 2u);
  EXPECT_EQ(occlusion_bucket(0.75), 3u);
  EXPECT_EQ(occlusion_bucket(1.0), 3u);
}

TEST(Seeds, DerivedStreamsAreIndependent) {
  EXPECT_NE(derive_seed(1, {0, 0}), derive_seed(1, {0, 1}));
  EXPECT_NE(derive_seed(1, {0, 1}), derive_seed(1, {1, 0}));
  EXPECT_EQ(derive_seed(9, {3, 4}), derive_seed(9, {3, 4}));
  DataConfig data;
  EXPECT_NE(sequence_seed(data, Split::Train, 0), sequence_seed(data, Split::Test, 0));
}

}  // namespace
}  // namespace deformer::synth
