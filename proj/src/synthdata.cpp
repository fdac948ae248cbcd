#include "deformer/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include <json.hpp>

#include "deformer/random.hpp"

namespace deformer::synth {
namespace {

constexpr double kFocalPerCell = 1.75;
constexpr double kRadPerRawFrame = 0.01;
constexpr int kCameraAttempts = 64;

double smoothstep(double x) { return x * x * (3.0 - 2.0 * x); }

std::array<double, 9> matmul3(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 3; ++k) out[r * 3 + c] += a[r * 3 + k] * b[k * 3 + c];
    }
  }
  return out;
}

std::array<double, 9> axis_rotation(int axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  switch (axis) {
    case 0:
      return {1, 0, 0, 0, c, -s, 0, s, c};
    case 1:
      return {c, 0, s, 0, 1, 0, -s, 0, c};
    default:
      return {c, -s, 0, s, c, 0, 0, 0, 1};
  }
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
  return index_select(reshape(row, {1, row.numel()}), 0, std::vector<std::size_t>(n, 0));
}

long cell_index(double coord) { return static_cast<long>(std::floor(coord)); }

// ---- JSON lines ------------------------------------------------------------

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_array(std::string& out, std::span<const double> values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    append_number(out, values[i]);
  }
  out += ']';
}

std::string record_line(const SequenceSample& s) {
  std::string out;
  out.reserve(s.grids.numel() * 12 + 4096);
  out += "{\"seed\":" + std::to_string(s.seed);
  out += ",\"gt_theta\":[";
  const std::size_t steps = s.steps();
  const auto theta = s.gt_theta.data();
  for (std::size_t t = 0; t < steps; ++t) {
    if (t) out += ',';
    append_array(out, theta.subspan(t * hand::kPoseDim, hand::kPoseDim));
  }
  out += "],\"gt_beta\":";
  append_array(out, s.gt_beta.data());
  const auto& cam = s.camera;
  out += ",\"camera\":{\"fx\":";
  append_number(out, cam.fx);
  out += ",\"fy\":";
  append_number(out, cam.fy);
  out += ",\"cx\":";
  append_number(out, cam.cx);
  out += ",\"cy\":";
  append_number(out, cam.cy);
  out += ",\"rotation\":";
  append_array(out, cam.rotation);
  out += ",\"translation\":";
  append_array(out, cam.translation);
  out += "},\"occlusion\":";
  append_array(out, s.occlusion);
  out += ",\"blur\":[";
  for (std::size_t t = 0; t < s.blur.size(); ++t) {
    if (t) out += ',';
    out += s.blur[t] ? "true" : "false";
  }
  out += "],\"grid_shape\":[";
  for (std::size_t d = 0; d < 4; ++d) {
    if (d) out += ',';
    out += std::to_string(s.grids.shape()[d]);
  }
  out += "],\"grids\":";
  append_array(out, s.grids.data());
  out += "}\n";
  return out;
}

// Flattens every number under a key path ("camera.fx", "grids", ...).
class FlatRecord : public nlohmann::json_sax<nlohmann::json> {
 public:
  std::map<std::string, std::vector<double>> numbers;
  std::map<std::string, std::uint64_t> integers;
  std::string error;

  bool null() override { return fail("null value"); }
  bool boolean(bool v) override { return push(v ? 1.0 : 0.0); }
  bool number_integer(number_integer_t v) override { return push(static_cast<double>(v)); }
  bool number_unsigned(number_unsigned_t v) override {
    integers[path()] = v;
    return push(static_cast<double>(v));
  }
  bool number_float(number_float_t v, const string_t&) override { return push(v); }
  bool string(string_t&) override { return fail("unexpected string"); }
  bool binary(binary_t&) override { return fail("unexpected binary"); }
  bool start_object(std::size_t) override {
    keys_.emplace_back();
    current_ = nullptr;
    return true;
  }
  bool key(string_t& k) override {
    keys_.back() = k;
    current_ = nullptr;
    return true;
  }
  bool end_object() override {
    keys_.pop_back();
    current_ = nullptr;
    return true;
  }
  bool start_array(std::size_t) override { return true; }
  bool end_array() override { return true; }
  bool parse_error(std::size_t position, const std::string&,
                   const nlohmann::detail::exception& e) override {
    return fail("at byte " + std::to_string(position) + ": " + e.what());
  }

  const std::vector<double>& get(const std::string& key, std::size_t expected) const {
    auto it = numbers.find(key);
    if (it == numbers.end()) throw IoError("sequence record lacks field '" + key + "'");
    if (it->second.size() != expected) {
      throw IoError("field '" + key + "' holds " + std::to_string(it->second.size()) +
                    " numbers, expected " + std::to_string(expected));
    }
    return it->second;
  }

 private:
  std::vector<std::string> keys_;
  std::vector<double>* current_ = nullptr;

  std::string path() const {
    std::string p;
    for (const auto& k : keys_) {
      if (!p.empty()) p += '.';
      p += k;
    }
    return p;
  }
  bool push(double v) {
    if (current_ == nullptr) current_ = &numbers[path()];
    current_->push_back(v);
    return true;
  }
  bool fail(const std::string& what) {
    error = what;
    return false;
  }
};

SequenceSample parse_record(const std::string& line, std::size_t line_number,
                            const std::string& path) {
  FlatRecord rec;
  if (!nlohmann::json::sax_parse(line, &rec) || !rec.error.empty()) {
    throw IoError(path + ":" + std::to_string(line_number) + ": malformed record " + rec.error);
  }
  try {
    SequenceSample s;
    auto seed = rec.integers.find("seed");
    if (seed == rec.integers.end()) throw IoError("sequence record lacks an integer 'seed'");
    s.seed = seed->second;
    const auto& shape = rec.get("grid_shape", 4);
    Shape grid_shape;
    for (double d : shape) grid_shape.push_back(static_cast<std::size_t>(d));
    const std::size_t steps = grid_shape[0];
    if (steps == 0) throw IoError("empty sequence");
    s.gt_theta = Tensor({steps, hand::kPoseDim}, rec.get("gt_theta", steps * hand::kPoseDim));
    s.gt_beta = Tensor({hand::kShapeDim}, rec.get("gt_beta", hand::kShapeDim));
    s.camera.fx = rec.get("camera.fx", 1)[0];
    s.camera.fy = rec.get("camera.fy", 1)[0];
    s.camera.cx = rec.get("camera.cx", 1)[0];
    s.camera.cy = rec.get("camera.cy", 1)[0];
    const auto& rot = rec.get("camera.rotation", 9);
    std::copy(rot.begin(), rot.end(), s.camera.rotation.begin());
    const auto& tr = rec.get("camera.translation", 3);
    std::copy(tr.begin(), tr.end(), s.camera.translation.begin());
    s.occlusion = rec.get("occlusion", steps);
    for (double b : rec.get("blur", steps)) s.blur.push_back(b != 0.0);
    s.grids = Tensor(grid_shape, rec.get("grids", shape_numel(grid_shape)));
    return s;
  } catch (const IoError& e) {
    throw IoError(path + ":" + std::to_string(line_number) + ": " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text) || !out.flush()) throw IoError("cannot write " + path);
}

nlohmann::ordered_json split_json(const SplitSummary& s) {
  return {{"file", s.file}, {"sequences", s.sequences}, {"frames", s.frames}, {"buckets", s.buckets}};
}

SplitSummary split_from_json(const nlohmann::json& j) {
  SplitSummary s;
  j.at("file").get_to(s.file);
  j.at("sequences").get_to(s.sequences);
  j.at("frames").get_to(s.frames);
  j.at("buckets").get_to(s.buckets);
  return s;
}

}  // namespace

GridSpec grid_spec(const Config& config) {
  return {config.model.grid_height, config.model.grid_width, config.model.channels,
          config.data.blob_sigma, config.data.noise};
}

Trajectory sample_trajectory(std::uint64_t seed, std::size_t steps, std::size_t stride) {
  if (steps == 0) throw DomainError("trajectory needs at least one frame");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> beta(hand::kShapeDim);
  for (double& b : beta) {
    do {
      b = normal(rng);
    } while (std::abs(b) > 3.0);
  }

  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::array<double, hand::kPoseDim> key0{};
  for (std::size_t c = 0; c < 3; ++c) key0[c] = uniform(-0.3, 0.3);
  for (std::size_t j = 1; j < hand::kJointCount; ++j) {
    const bool thumb = j >= 13;
    const bool knuckle = !thumb && (j - 1) % 3 == 0;
    double* axis = &key0[3 * j];
    if (thumb) {
      for (int c = 0; c < 3; ++c) axis[c] = uniform(-0.4, 0.4);
    } else {
      axis[0] = uniform(-0.1, 0.9);  // flexion
      axis[1] = uniform(-0.15, 0.15) * (knuckle ? 1.7 : 1.0);
      axis[2] = uniform(-0.15, 0.15);
    }
  }

  // Smoothstep has slope 1.5, each of the two segments spans half of the
  // sequence, so a keyframe gap g moves at most 3 g / (T - 1) per frame.
  const double span = static_cast<double>(steps - 1);
  const double gap = 0.999 * std::min(kMaxStep * span / 3.0,
                                      kRadPerRawFrame * static_cast<double>(stride) * span / 2.0);
  std::array<double, hand::kPoseDim> key1{}, key2{};
  for (std::size_t c = 0; c < hand::kPoseDim; ++c) key1[c] = key0[c] + uniform(-1.0, 1.0) * gap;
  for (std::size_t c = 0; c < hand::kPoseDim; ++c) key2[c] = key1[c] + uniform(-1.0, 1.0) * gap;

  std::vector<double> theta(steps * hand::kPoseDim);
  for (std::size_t t = 0; t < steps; ++t) {
    const double u = steps == 1 ? 0.0 : static_cast<double>(t) / span;
    const bool first = u <= 0.5;
    const double s = smoothstep(first ? u / 0.5 : (u - 0.5) / 0.5);
    const auto& a = first ? key0 : key1;
    const auto& b = first ? key1 : key2;
    for (std::size_t c = 0; c < hand::kPoseDim; ++c) {
      theta[t * hand::kPoseDim + c] = a[c] + s * (b[c] - a[c]);
    }
  }
  return {Tensor({steps, hand::kPoseDim}, std::move(theta)), Tensor({hand::kShapeDim}, std::move(beta))};
}

hand::Camera sample_camera(const Tensor& joints, const GridSpec& spec, const DataConfig& data,
                           std::uint64_t seed) {
  if (joints.ndim() != 3 || joints.shape()[2] != 3) {
    throw ShapeError("sample_camera expects [T x J x 3] joints");
  }
  const auto pts = joints.data();
  const std::size_t count = joints.numel() / 3;
  hand::Vec3 centroid{0, 0, 0};
  for (std::size_t i = 0; i < count; ++i) {
    for (int c = 0; c < 3; ++c) centroid[c] += pts[i * 3 + c] / static_cast<double>(count);
  }
  const double height = static_cast<double>(spec.height);
  const double width = static_cast<double>(spec.width);
  hand::Camera cam;
  cam.fx = cam.fy = kFocalPerCell * std::min(height, width);
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  for (int attempt = 0; attempt < kCameraAttempts; ++attempt) {
    std::mt19937_64 rng = make_rng(seed, {static_cast<std::uint64_t>(attempt)});
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const double roll = uniform(-std::numbers::pi, std::numbers::pi);
    const double tilt_x = uniform(-0.35, 0.35);
    const double tilt_y = uniform(-0.35, 0.35);
    const double depth = uniform(data.depth_min_mm, data.depth_max_mm);
    const double shift_x = uniform(-1.0, 1.0) * depth / cam.fx;
    const double shift_y = uniform(-1.0, 1.0) * depth / cam.fy;
    cam.rotation = matmul3(axis_rotation(2, roll), matmul3(axis_rotation(0, tilt_x), axis_rotation(1, tilt_y)));
    const auto& r = cam.rotation;
    for (int c = 0; c < 3; ++c) {
      const double rc = r[c * 3] * centroid[0] + r[c * 3 + 1] * centroid[1] + r[c * 3 + 2] * centroid[2];
      cam.translation[c] = (c == 0 ? shift_x : c == 1 ? shift_y : depth) - rc;
    }
    bool inside = true;
    for (std::size_t i = 0; i < count && inside; ++i) {
      const hand::Vec3 p{pts[i * 3], pts[i * 3 + 1], pts[i * 3 + 2]};
      const double z = r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + cam.translation[2];
      if (z <= 0.0) {
        inside = false;
        break;
      }
      const auto uv = hand::project_point(p, cam);
      inside = uv[0] >= 0.5 && uv[0] <= width - 0.5 && uv[1] >= 0.5 && uv[1] <= height - 0.5;
    }
    if (inside) return cam;
  }
  throw DomainError("no camera keeps the hand inside the grid after " +
                    std::to_string(kCameraAttempts) + " draws");
}

Tensor render_grid(const Tensor& joints2d, const GridSpec& spec, std::uint64_t seed) {
  if (joints2d.ndim() != 2 || joints2d.shape()[1] != 2) {
    throw ShapeError("render_grid expects [J x 2] joints");
  }
  const std::size_t h = spec.height, w = spec.width, ch = spec.channels;
  const std::size_t joints = joints2d.shape()[0];
  const auto uv = joints2d.data();
  for (std::size_t j = 0; j < joints; ++j) {
    if (!(uv[2 * j] >= 0.0 && uv[2 * j] <= double(w) && uv[2 * j + 1] >= 0.0 &&
          uv[2 * j + 1] <= double(h))) {
      throw DomainError("joint " + std::to_string(j) + " projects outside the grid");
    }
  }
  std::vector<double> grid(h * w * ch, 0.0);
  const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::size_t j = 0; j < joints; ++j) {
    const std::size_t c = j % ch;
    for (std::size_t r = 0; r < h; ++r) {
      const double dy = double(r) + 0.5 - uv[2 * j + 1];
      for (std::size_t col = 0; col < w; ++col) {
        const double dx = double(col) + 0.5 - uv[2 * j];
        grid[(r * w + col) * ch + c] += std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-spec.noise, spec.noise);
  for (double& v : grid) {
    if (spec.noise > 0.0) v += noise(rng);
    v = std::clamp(v, 0.0, 1.0);
  }
  return Tensor({h, w, ch}, std::move(grid));
}

Tensor box_blur(const Tensor& grid) {
  if (grid.ndim() != 3) throw ShapeError("box_blur expects [H x W x C]");
  const std::size_t h = grid.shape()[0], w = grid.shape()[1], ch = grid.shape()[2];
  const auto in = grid.data();
  std::vector<double> out(in.size(), 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t r0 = r == 0 ? 0 : r - 1, r1 = std::min(h, r + 2);
      const std::size_t c0 = c == 0 ? 0 : c - 1, c1 = std::min(w, c + 2);
      const double n = double((r1 - r0) * (c1 - c0));
      for (std::size_t k = 0; k < ch; ++k) {
        double s = 0.0;
        for (std::size_t rr = r0; rr < r1; ++rr) {
          for (std::size_t cc = c0; cc < c1; ++cc) s += in[(rr * w + cc) * ch + k];
        }
        out[(r * w + c) * ch + k] = s / n;
      }
    }
  }
  return Tensor(grid.shape(), std::move(out));
}

double occluded_fraction(const Tensor& joints2d, const Rect& rect) {
  const std::size_t joints = joints2d.shape()[0];
  if (joints == 0) return 0.0;
  std::size_t inside = 0;
  for (std::size_t j = 0; j < joints; ++j) {
    const long col = cell_index(joints2d.at({j, 0}));
    const long row = cell_index(joints2d.at({j, 1}));
    if (row >= long(rect.row0) && row < long(rect.row1) && col >= long(rect.col0) &&
        col < long(rect.col1)) {
      ++inside;
    }
  }
  return double(inside) / double(joints);
}

Corruption corrupt(const Tensor& grid, const Tensor& joints2d, double target, bool blur,
                   std::uint64_t seed) {
  if (grid.ndim() != 3) throw ShapeError("corrupt expects [H x W x C]");
  if (!(target >= 0.0 && target <= 1.0)) throw DomainError("occlusion target must lie in [0, 1]");
  const std::size_t h = grid.shape()[0], w = grid.shape()[1], ch = grid.shape()[2];
  Corruption out;
  out.grid = blur ? box_blur(grid) : Tensor(grid.shape(), grid.to_vector());
  if (target == 0.0) return out;

  if (target >= 1.0) {
    out.rect = {0, 0, h, w};
  } else {
    // Joint counts per cell, summed into a 2D prefix table.
    const std::size_t joints = joints2d.shape()[0];
    std::vector<std::size_t> prefix((h + 1) * (w + 1), 0);
    for (std::size_t j = 0; j < joints; ++j) {
      const long col = cell_index(joints2d.at({j, 0}));
      const long row = cell_index(joints2d.at({j, 1}));
      if (row < 0 || col < 0 || row >= long(h) || col >= long(w)) continue;
      ++prefix[(std::size_t(row) + 1) * (w + 1) + std::size_t(col) + 1];
    }
    for (std::size_t r = 1; r <= h; ++r) {
      for (std::size_t c = 1; c <= w; ++c) {
        prefix[r * (w + 1) + c] += prefix[(r - 1) * (w + 1) + c] + prefix[r * (w + 1) + c - 1] -
                                   prefix[(r - 1) * (w + 1) + c - 1];
      }
    }
    auto count = [&](std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
      return prefix[r1 * (w + 1) + c1] + prefix[r0 * (w + 1) + c0] - prefix[r0 * (w + 1) + c1] -
             prefix[r1 * (w + 1) + c0];
    };
    // Exhaustive search; ties are resolved by reservoir sampling.
    std::mt19937_64 rng(seed);
    double best = 2.0;
    std::uint64_t ties = 0;
    for (std::size_t r0 = 0; r0 < h; ++r0) {
      for (std::size_t r1 = r0 + 1; r1 <= h; ++r1) {
        for (std::size_t c0 = 0; c0 < w; ++c0) {
          for (std::size_t c1 = c0 + 1; c1 <= w; ++c1) {
            const double frac = double(count(r0, c0, r1, c1)) / double(joints);
            const double err = std::abs(frac - target);
            if (err < best - 1e-12) {
              best = err;
              ties = 1;
              out.rect = {r0, c0, r1, c1};
            } else if (err <= best + 1e-12 && rng() % ++ties == 0) {
              out.rect = {r0, c0, r1, c1};
            }
          }
        }
      }
    }
  }
  std::vector<double> masked = out.grid.to_vector();
  for (std::size_t r = out.rect.row0; r < out.rect.row1; ++r) {
    for (std::size_t c = out.rect.col0; c < out.rect.col1; ++c) {
      std::fill_n(masked.begin() + std::ptrdiff_t((r * w + c) * ch), ch, 0.0);
    }
  }
  out.grid = Tensor(grid.shape(), std::move(masked));
  out.occlusion = occluded_fraction(joints2d, out.rect);
  return out;
}

std::vector<FrameCorruption> corruption_schedule(std::size_t steps, const DataConfig& data,
                                                 std::uint64_t seed) {
  if (steps < 3) throw ConfigError("corruption schedule needs at least 3 frames per sequence");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(steps);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::bernoulli_distribution blur(data.blur_probability);
  std::vector<FrameCorruption> out(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    FrameCorruption& f = out[order[k]];
    if (k == 0) {
      const double lo = data.heavy_occlusion;
      f.target = std::uniform_real_distribution<double>(lo, std::min(1.0, lo + 0.3))(rng);
      f.blur = blur(rng);
    } else if (k >= 3) {
      f.target = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
      f.blur = blur(rng);
    }
  }
  return out;
}

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Tensor SequenceSample::grid(std::size_t t) const {
  const Shape& s = grids.shape();
  return reshape(slice(grids, 0, t, 1), {s[1], s[2], s[3]});
}

std::uint64_t sequence_seed(const DataConfig& data, Split split, std::size_t index) {
  return derive_seed(data.seed, {static_cast<std::uint64_t>(split), index});
}

SequenceSample generate_sequence(const Config& config, const hand::KinematicTemplate& tmpl,
                                 Split split, std::size_t index) {
  const DataConfig& data = config.data;
  const GridSpec spec = grid_spec(config);
  const std::size_t steps = data.seq_len;
  SequenceSample s;
  s.seed = sequence_seed(data, split, index);
  Trajectory traj = sample_trajectory(derive_seed(s.seed, {1}), steps, data.stride);
  s.gt_theta = traj.theta;
  s.gt_beta = traj.beta;
  const Tensor joints = hand::hand_forward(traj.theta, repeat_rows(traj.beta, steps), tmpl, false).joints;
  s.camera = sample_camera(joints, spec, data, derive_seed(s.seed, {2}));
  const Tensor joints2d = hand::project_2d(joints, s.camera);
  const auto schedule = corruption_schedule(steps, data, derive_seed(s.seed, {3}));
  std::vector<double> grids;
  grids.reserve(steps * spec.height * spec.width * spec.channels);
  for (std::size_t t = 0; t < steps; ++t) {
    const Tensor uv = reshape(slice(joints2d, 0, t, 1), {hand::kOutputJoints, 2});
    const Tensor clean = render_grid(uv, spec, derive_seed(s.seed, {4, t}));
    Corruption c = corrupt(clean, uv, schedule[t].target, schedule[t].blur, derive_seed(s.seed, {5, t}));
    const auto v = c.grid.data();
    grids.insert(grids.end(), v.begin(), v.end());
    s.occlusion.push_back(c.occlusion);
    s.blur.push_back(schedule[t].blur);
  }
  s.grids = Tensor({steps, spec.height, spec.width, spec.channels}, std::move(grids));
  return s;
}

std::vector<SequenceSample> generate_split(const Config& config, Split split) {
  const auto tmpl = hand::template_from_seed(config.data.template_seed);
  const std::size_t n = split == Split::Train ? config.data.train_sequences : config.data.test_sequences;
  std::vector<SequenceSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sequence(config, tmpl, split, i));
  return out;
}

Tensor ground_truth_2d(const SequenceSample& sample, const hand::KinematicTemplate& tmpl) {
  const Tensor joints =
      hand::hand_forward(sample.gt_theta, repeat_rows(sample.gt_beta, sample.steps()), tmpl, false).joints;
  return hand::project_2d(joints, sample.camera);
}

std::size_t occlusion_bucket(double fraction) {
  if (!(fraction >= 0.0)) return 0;
  return std::min<std::size_t>(kBuckets - 1, static_cast<std::size_t>(fraction * 4.0));
}

std::array<std::size_t, kBuckets> DatasetManifest::buckets() const {
  std::array<std::size_t, kBuckets> out{};
  for (std::size_t b = 0; b < kBuckets; ++b) out[b] = train.buckets[b] + test.buckets[b];
  return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "deformer-synthetic-1";
  j["seed"] = m.seed;
  j["template_seed"] = m.template_seed;
  j["seq_len"] = m.seq_len;
  j["stride"] = m.stride;
  j["grid"] = m.grid;
  j["data_hash"] = m.data_hash;
  j["interface_hash"] = m.interface_hash;
  j["splits"] = {{"train", split_json(m.train)}, {"test", split_json(m.test)}};
  j["total_frames"] = m.total_frames();
  j["buckets"] = m.buckets();
  j["bucket_edges_percent"] = {0, 25, 50, 75, 100};
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DatasetManifest m;
    j.at("seed").get_to(m.seed);
    j.at("template_seed").get_to(m.template_seed);
    j.at("seq_len").get_to(m.seq_len);
    j.at("stride").get_to(m.stride);
    j.at("grid").get_to(m.grid);
    j.at("data_hash").get_to(m.data_hash);
    j.at("interface_hash").get_to(m.interface_hash);
    m.train = split_from_json(j.at("splits").at("train"));
    m.test = split_from_json(j.at("splits").at("test"));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed dataset manifest: ") + e.what());
  }
}

void write_sequences(const std::string& path, const std::vector<SequenceSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& s : samples) out << record_line(s);
  if (!out.flush()) throw IoError("cannot write " + path);
}

std::vector<SequenceSample> read_sequences(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::vector<SequenceSample> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    out.push_back(parse_record(line, n, path));
  }
  return out;
}

DatasetManifest generate_dataset(const Config& config, const std::string& dir) {
  config.validate();
  if (config.data.seq_len < 3) {
    throw ConfigError("data.seq_len must be at least 3 (one heavy and two clean frames)");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory " + dir);

  const auto tmpl = hand::template_from_seed(config.data.template_seed);
  DatasetManifest m;
  m.seed = config.data.seed;
  m.template_seed = config.data.template_seed;
  m.seq_len = config.data.seq_len;
  m.stride = config.data.stride;
  m.grid = {config.model.grid_height, config.model.grid_width, config.model.channels};
  m.data_hash = hex64(data_hash(config));
  m.interface_hash = hex64(interface_hash(config));
  for (Split split : {Split::Train, Split::Test}) {
    SplitSummary& summary = split == Split::Train ? m.train : m.test;
    summary.file = to_string(split) + ".jsonl";
    summary.sequences = split == Split::Train ? config.data.train_sequences : config.data.test_sequences;
    const std::string path = (std::filesystem::path(dir) / summary.file).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < summary.sequences; ++i) {
      const SequenceSample s = generate_sequence(config, tmpl, split, i);
      for (double occ : s.occlusion) ++summary.buckets[occlusion_bucket(occ)];
      summary.frames += s.steps();
      out << record_line(s);
    }
    if (!out.flush()) throw IoError("cannot write " + path);
  }
  write_file((std::filesystem::path(dir) / "manifest.json").string(), manifest_to_json(m));
  return m;
}

DatasetManifest read_manifest(const std::string& dir) {
  return manifest_from_json(read_file((std::filesystem::path(dir) / "manifest.json").string()));
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.manifest = read_manifest(dir);
  d.train = read_sequences((std::filesystem::path(dir) / d.manifest.train.file).string());
  d.test = read_sequences((std::filesystem::path(dir) / d.manifest.test.file).string());
  if (d.train.size() != d.manifest.train.sequences || d.test.size() != d.manifest.test.sequences) {
    throw IoError("dataset in " + dir + " does not match its manifest counts");
  }
  return d;
}

void check_compatible(const DatasetManifest& manifest, const Config& config) {
  const std::string expected = hex64(data_hash(config));
  if (manifest.data_hash != expected) {
    throw CompatibilityError("dataset hash " + manifest.data_hash +
                             " does not match the configuration (" + expected + ")");
  }
}

}  // namespace deformer::synth
