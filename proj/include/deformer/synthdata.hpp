#pragma once

// Deterministic synthetic hand benchmark. A sequence is a smooth pose
// trajectory, a camera that keeps every joint inside the image, one
// rendered feature grid per frame (one image pixel = one grid cell) and a
// per-frame corruption (rectangular occlusion, optional blur) whose
// occlusion fraction is measured on the ground-truth 2D joints.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "deformer/config.hpp"
#include "deformer/handmodel.hpp"
#include "deformer/tensor.hpp"

namespace deformer::synth {

inline constexpr double kMaxStep = 0.15;  // rad per component per sampled frame
inline constexpr std::size_t kBuckets = 4;

struct GridSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 32;
  double sigma = 1.2;
  double noise = 0.05;
};
GridSpec grid_spec(const Config& config);

struct Trajectory {
  Tensor theta;  // [T x 48]
  Tensor beta;   // [10]
};

// Three keyframes joined by smoothstep segments; the keyframe spacing is
// capped so no component moves more than kMaxStep between sampled frames.
Trajectory sample_trajectory(std::uint64_t seed, std::size_t steps, std::size_t stride);

// Camera looking at the posed joints [T x 21 x 3] such that every projection
// lies at least half a cell inside the grid. Throws DomainError when no
// draw succeeds.
hand::Camera sample_camera(const Tensor& joints, const GridSpec& spec, const DataConfig& data,
                           std::uint64_t seed);

// joints2d [21 x 2] in pixels -> grid [H x W x C]. Joint j lands in channel
// j mod C as an isotropic Gaussian of height 1, plus uniform noise in
// [-noise, noise], clamped to [0, 1].
Tensor render_grid(const Tensor& joints2d, const GridSpec& spec, std::uint64_t seed);

// 3x3 mean filter per channel; border cells average their in-grid neighbours.
Tensor box_blur(const Tensor& grid);

struct Rect {
  std::size_t row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // half-open
  bool empty() const { return row0 >= row1 || col0 >= col1; }
};

// Fraction of joints whose cell lies inside `rect`.
double occluded_fraction(const Tensor& joints2d, const Rect& rect);

struct Corruption {
  Tensor grid;
  double occlusion = 0.0;
  Rect rect;
};

// Blurs (optionally), then zeroes the rectangle whose joint coverage is
// closest to `target` (ties broken at random). Target 0 masks nothing,
// target 1 masks the whole grid.
Corruption corrupt(const Tensor& grid, const Tensor& joints2d, double target, bool blur,
                   std::uint64_t seed);

struct FrameCorruption {
  double target = 0.0;
  bool blur = false;
};

// One heavy frame (target >= heavy_occlusion), two clean frames, the rest
// moderate. Needs T >= 3.
std::vector<FrameCorruption> corruption_schedule(std::size_t steps, const DataConfig& data,
                                                 std::uint64_t seed);

enum class Split { Train = 0, Test = 1 };
std::string to_string(Split split);

struct SequenceSample {
  std::uint64_t seed = 0;
  Tensor grids;     // [T x H x W x C]
  Tensor gt_theta;  // [T x 48]
  Tensor gt_beta;   // [10]
  hand::Camera camera;
  std::vector<double> occlusion;  // measured, per frame
  std::vector<bool> blur;

  std::size_t steps() const { return gt_theta.shape()[0]; }
  Tensor grid(std::size_t t) const;  // [H x W x C]
};

std::uint64_t sequence_seed(const DataConfig& data, Split split, std::size_t index);
SequenceSample generate_sequence(const Config& config, const hand::KinematicTemplate& tmpl,
                                 Split split, std::size_t index);
std::vector<SequenceSample> generate_split(const Config& config, Split split);

// Ground-truth 2D joints of every frame [T x 21 x 2].
Tensor ground_truth_2d(const SequenceSample& sample, const hand::KinematicTemplate& tmpl);

// [0,25) [25,50) [50,75) [75,100] percent.
std::size_t occlusion_bucket(double fraction);

struct SplitSummary {
  std::string file;
  std::size_t sequences = 0;
  std::size_t frames = 0;
  std::array<std::size_t, kBuckets> buckets{};
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::uint64_t template_seed = 0;
  std::size_t seq_len = 0;
  std::size_t stride = 0;
  std::array<std::size_t, 3> grid{};  // H, W, C
  std::string data_hash;
  std::string interface_hash;
  SplitSummary train;
  SplitSummary test;

  std::size_t total_frames() const { return train.frames + test.frames; }
  std::array<std::size_t, kBuckets> buckets() const;
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

// JSON lines, one sequence per line, numbers with 17 significant digits.
void write_sequences(const std::string& path, const std::vector<SequenceSample>& samples);
std::vector<SequenceSample> read_sequences(const std::string& path);

// Writes <dir>/train.jsonl, <dir>/test.jsonl and <dir>/manifest.json.
// Throws ConfigError for T < 3 and IoError when the directory is unusable.
DatasetManifest generate_dataset(const Config& config, const std::string& dir);

struct Dataset {
  DatasetManifest manifest;
  std::vector<SequenceSample> train;
  std::vector<SequenceSample> test;
};
DatasetManifest read_manifest(const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Throws CompatibilityError when the data on disk was generated from a
// different data configuration.
void check_compatible(const DatasetManifest& manifest, const Config& config);

}  // namespace deformer::synth
