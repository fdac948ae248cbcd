#include "deformer/handmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

namespace deformer::hand {
namespace {

constexpr std::size_t kTipCount = 5;
constexpr std::size_t kFirstTipVertex = kVertexCount - kTipCount;

// Distal joint of each finger, in output-tip order.
constexpr std::array<int, kTipCount> kDistalJoints{3, 6, 9, 12, 15};

struct FingerLayout {
  std::array<int, 3> joints;
  Vec3 base;                // first joint position (mm)
  Vec3 direction;           // finger axis after the first joint
  std::array<double, 3> lengths;  // first->second, second->third, third->tip
};

// Nominal right hand; the seed jitters every length and base position.
const std::array<FingerLayout, 5>& nominal_fingers() {
  static const std::array<FingerLayout, 5> layout{{
      {{1, 2, 3}, {24.0, 66.0, 0.0}, {0.12, 1.0, 0.0}, {40.0, 25.0, 22.0}},
      {{4, 5, 6}, {5.0, 70.0, 0.0}, {0.02, 1.0, 0.0}, {45.0, 28.0, 24.0}},
      {{7, 8, 9}, {-30.0, 58.0, 0.0}, {-0.18, 1.0, 0.0}, {32.0, 23.0, 21.5}},
      {{10, 11, 12}, {-13.0, 66.0, 0.0}, {-0.08, 1.0, 0.0}, {42.0, 27.0, 23.0}},
      {{13, 14, 15}, {22.0, 22.0, -6.0}, {0.6, 0.8, -0.1}, {38.0, 32.0, 26.0}},
  }};
  return layout;
}

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(const Vec3& a) { return (1.0 / norm(a)) * a; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
  return norm(p - (a + t * ab));
}

struct Segment {
  Vec3 from;
  Vec3 to;
  int owner;
  double radius;
};

std::vector<std::size_t> depth_of(const std::array<int, kJointCount>& parents) {
  std::vector<std::size_t> depth(kJointCount, 0);
  for (std::size_t j = 0; j < kJointCount; ++j) {
    std::size_t d = 0;
    for (int p = parents[j]; p >= 0; p = parents[static_cast<std::size_t>(p)]) {
      if (++d > kJointCount) throw DomainError("kinematic tree contains a cycle");
    }
    depth[j] = d;
  }
  return depth;
}

}  // namespace

// ---- template ---------------------------------------------------------------

double KinematicTemplate::bone_length(std::size_t joint) const {
  return norm(offsets_mm.at(joint));
}

std::array<Vec3, kJointCount> KinematicTemplate::rest_joints() const {
  std::array<Vec3, kJointCount> out{};
  const auto depth = depth_of(parents);
  std::vector<std::size_t> order(kJointCount);
  for (std::size_t j = 0; j < kJointCount; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return depth[a] < depth[b]; });
  for (std::size_t j : order) {
    const int p = parents[j];
    out[j] = p < 0 ? offsets_mm[j] : out[static_cast<std::size_t>(p)] + offsets_mm[j];
  }
  return out;
}

void KinematicTemplate::validate() const {
  std::size_t roots = 0;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    const int p = parents[j];
    if (p < 0) {
      ++roots;
    } else if (static_cast<std::size_t>(p) >= kJointCount || static_cast<std::size_t>(p) == j) {
      throw DomainError("invalid parent index for joint " + std::to_string(j));
    }
  }
  if (roots != 1) throw DomainError("kinematic tree must have exactly one root");
  depth_of(parents);
  if (points_mm.size() != kVertexCount || skin_bones.size() != kVertexCount ||
      skin_weights.size() != kVertexCount) {
    throw DomainError("template must have 778 points with skinning data");
  }
  for (std::size_t v = 0; v < kVertexCount; ++v) {
    for (int b : skin_bones[v]) {
      if (b < 0 || static_cast<std::size_t>(b) >= kJointCount) {
        throw DomainError("skinning bone index out of range at point " + std::to_string(v));
      }
    }
    const auto& w = skin_weights[v];
    if (w[0] < 0.0 || w[1] < 0.0 || std::abs(w[0] + w[1] - 1.0) > 1e-12) {
      throw DomainError("skinning weights are not convex at point " + std::to_string(v));
    }
  }
  for (int r : joint_regressor) {
    if (r < 0 || static_cast<std::size_t>(r) >= kJointCount + kVertexCount) {
      throw DomainError("joint regressor index out of range");
    }
  }
}

KinematicTemplate template_from_seed(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  std::uniform_real_distribution<double> shift(-2.0, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  KinematicTemplate t;
  t.parents.fill(-1);
  t.offsets_mm[0] = {0.0, 0.0, 0.0};
  std::array<Vec3, kTipCount> tip_offsets{};
  for (std::size_t f = 0; f < 5; ++f) {
    const FingerLayout& layout = nominal_fingers()[f];
    Vec3 base = layout.base;
    const double base_scale = 1.0 + jitter(rng);
    base = {base[0] * base_scale + shift(rng), base[1] * base_scale + shift(rng), base[2]};
    const Vec3 dir = normalized(layout.direction);
    const auto [a, b, c] = layout.joints;
    t.parents[a] = 0;
    t.parents[b] = a;
    t.parents[c] = b;
    t.offsets_mm[a] = base;
    t.offsets_mm[b] = (layout.lengths[0] * (1.0 + jitter(rng))) * dir;
    t.offsets_mm[c] = (layout.lengths[1] * (1.0 + jitter(rng))) * dir;
    tip_offsets[f] = (layout.lengths[2] * (1.0 + jitter(rng))) * dir;
  }

  // Coefficient 0 scales the whole hand; the rest reshape bones locally.
  std::uniform_real_distribution<double> local(-0.012, 0.012);
  for (std::size_t j = 1; j < kJointCount; ++j) {
    const double length = norm(t.offsets_mm[j]);
    t.shape_basis[j][0] = 0.05 * length;
    for (std::size_t k = 1; k < kShapeDim; ++k) t.shape_basis[j][k] = local(rng) * length;
  }

  const auto rest = t.rest_joints();
  std::vector<Segment> segments;
  for (std::size_t f = 0; f < 5; ++f) {
    const auto [a, b, c] = nominal_fingers()[f].joints;
    segments.push_back({rest[0], rest[a], 0, 12.0});
    segments.push_back({rest[a], rest[b], a, 9.0});
    segments.push_back({rest[b], rest[c], b, 8.0});
    segments.push_back({rest[c], rest[c] + tip_offsets[f], c, 7.0});
  }

  // Surface points per segment proportional to capsule side area
  // (largest-remainder rounding).
  std::vector<double> area(segments.size());
  double total_area = 0.0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    area[s] = norm(segments[s].to - segments[s].from) * segments[s].radius;
    total_area += area[s];
  }
  std::vector<std::size_t> counts(segments.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const double exact = static_cast<double>(kFirstTipVertex) * area[s] / total_area;
    counts[s] = static_cast<std::size_t>(exact);
    assigned += counts[s];
    remainders.emplace_back(exact - static_cast<double>(counts[s]), s);
  }
  std::sort(remainders.begin(), remainders.end(), std::greater<>());
  for (std::size_t i = 0; assigned < kFirstTipVertex; ++i, ++assigned) {
    ++counts[remainders[i].second];
  }

  auto nearest_two = [&](const Vec3& p) {
    std::array<double, kJointCount> dist;
    dist.fill(std::numeric_limits<double>::infinity());
    for (const Segment& seg : segments) {
      const auto o = static_cast<std::size_t>(seg.owner);
      dist[o] = std::min(dist[o], segment_distance(p, seg.from, seg.to));
    }
    std::array<int, 2> best{0, 0};
    std::array<double, 2> best_d{std::numeric_limits<double>::infinity(),
                                 std::numeric_limits<double>::infinity()};
    for (std::size_t j = 0; j < kJointCount; ++j) {
      if (dist[j] < best_d[0]) {
        best_d[1] = best_d[0];
        best[1] = best[0];
        best_d[0] = dist[j];
        best[0] = static_cast<int>(j);
      } else if (dist[j] < best_d[1]) {
        best_d[1] = dist[j];
        best[1] = static_cast<int>(j);
      }
    }
    return std::make_pair(best, best_d);
  };

  constexpr double kTemperature = 5.0;  // mm
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    const Vec3 axis = normalized(seg.to - seg.from);
    const Vec3 helper = std::abs(axis[2]) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
    const Vec3 u = normalized(cross(axis, helper));
    const Vec3 v = cross(axis, u);
    for (std::size_t i = 0; i < counts[s]; ++i) {
      const double along = unit(rng);
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      const Vec3 p = seg.from + along * (seg.to - seg.from) +
                     seg.radius * (std::cos(angle) * u + std::sin(angle) * v);
      const auto [bones, d] = nearest_two(p);
      const double w0 = 1.0 / (1.0 + std::exp(-(d[1] - d[0]) / kTemperature));
      t.points_mm.push_back(p);
      t.skin_bones.push_back(bones);
      t.skin_weights.push_back({w0, 1.0 - w0});
    }
  }
  for (std::size_t f = 0; f < kTipCount; ++f) {
    const int c = kDistalJoints[f];
    t.points_mm.push_back(rest[c] + tip_offsets[f]);
    t.skin_bones.push_back({c, t.parents[c]});
    t.skin_weights.push_back({1.0, 0.0});
  }

  for (std::size_t j = 0; j < kJointCount; ++j) t.joint_regressor[j] = static_cast<int>(j);
  for (std::size_t f = 0; f < kTipCount; ++f) {
    t.joint_regressor[kJointCount + f] = static_cast<int>(kJointCount + kFirstTipVertex + f);
  }
  t.validate();
  return t;
}

std::string template_to_json(const KinematicTemplate& t) {
  nlohmann::json j;
  j["parents"] = t.parents;
  j["offsets_mm"] = t.offsets_mm;
  j["shape_basis"] = t.shape_basis;
  j["points_mm"] = t.points_mm;
  j["skin_bones"] = t.skin_bones;
  j["skin_weights"] = t.skin_weights;
  j["joint_regressor"] = t.joint_regressor;
  return j.dump();
}

KinematicTemplate template_from_json(const std::string& text) {
  KinematicTemplate t;
  try {
    const auto j = nlohmann::json::parse(text);
    j.at("parents").get_to(t.parents);
    j.at("offsets_mm").get_to(t.offsets_mm);
    j.at("shape_basis").get_to(t.shape_basis);
    j.at("points_mm").get_to(t.points_mm);
    j.at("skin_bones").get_to(t.skin_bones);
    j.at("skin_weights").get_to(t.skin_weights);
    j.at("joint_regressor").get_to(t.joint_regressor);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed hand template: ") + e.what());
  }
  t.validate();
  return t;
}

// ---- Rodrigues ----------------------------------------------------------------

namespace {

// R = I + a K + b K^2 with K the cross-product matrix of r, a = sin(t)/t,
// b = (1 - cos t)/t^2. ca and cb are a'(t)/t and b'(t)/t.
struct RodriguesCoefficients {
  double a, b, ca, cb;
};

RodriguesCoefficients rodrigues_coefficients(double t) {
  RodriguesCoefficients c{};
  const double t2 = t * t;
  if (t < 1e-7) {
    c.a = 1.0 - t2 / 6.0;
    c.b = 0.5 - t2 / 24.0;
  } else {
    const double s = std::sin(0.5 * t);
    c.a = std::sin(t) / t;
    c.b = 2.0 * s * s / t2;
  }
  if (t < 0.05) {
    c.ca = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
    c.cb = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
  } else {
    c.ca = (t * std::cos(t) - std::sin(t)) / (t2 * t);
    c.cb = (t * std::sin(t) - 2.0 * (1.0 - std::cos(t))) / (t2 * t2);
  }
  return c;
}

using Mat3 = std::array<double, 9>;

Mat3 skew(double x, double y, double z) { return {0, -z, y, z, 0, -x, -y, x, 0}; }

Mat3 matmul3(const Mat3& p, const Mat3& q) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      for (int j = 0; j < 3; ++j) r[i * 3 + j] += p[i * 3 + k] * q[k * 3 + j];
    }
  }
  return r;
}

double inner(const double* g, const Mat3& m) {
  double s = 0.0;
  for (int i = 0; i < 9; ++i) s += g[i] * m[static_cast<std::size_t>(i)];
  return s;
}

}  // namespace

Tensor rodrigues(const Tensor& axis_angle) {
  if (axis_angle.ndim() != 2 || axis_angle.shape()[1] != 3) {
    throw ShapeError("rodrigues expects [N x 3], got " + shape_string(axis_angle.shape()));
  }
  const std::size_t n = axis_angle.shape()[0];
  const auto r = axis_angle.data();
  std::vector<double> out(n * 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = r[3 * i], y = r[3 * i + 1], z = r[3 * i + 2];
    const auto c = rodrigues_coefficients(std::sqrt(x * x + y * y + z * z));
    const Mat3 k = skew(x, y, z);
    const Mat3 k2 = matmul3(k, k);
    for (std::size_t e = 0; e < 9; ++e) {
      out[9 * i + e] = (e % 4 == 0 ? 1.0 : 0.0) + c.a * k[e] + c.b * k2[e];
    }
  }
  return make_op_result(
      {n, 3, 3}, std::move(out), {axis_angle},
      [axis_angle, n](detail::BackwardContext& ctx) {
        const auto g = ctx.grad_output();
        const auto r = axis_angle.data();
        auto gr = ctx.grad_input(0);
        static const std::array<Mat3, 3> generators{skew(1, 0, 0), skew(0, 1, 0), skew(0, 0, 1)};
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = g.data() + 9 * i;
          const double v[3] = {r[3 * i], r[3 * i + 1], r[3 * i + 2]};
          const auto c = rodrigues_coefficients(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
          const Mat3 k = skew(v[0], v[1], v[2]);
          const Mat3 k2 = matmul3(k, k);
          const double gk = inner(gi, k);
          const double gk2 = inner(gi, k2);
          for (std::size_t d = 0; d < 3; ++d) {
            const Mat3& e = generators[d];
            const Mat3 ek = matmul3(e, k);
            const Mat3 ke = matmul3(k, e);
            Mat3 sym{};
            for (std::size_t q = 0; q < 9; ++q) sym[q] = ek[q] + ke[q];
            gr[3 * i + d] +=
                c.ca * v[d] * gk + c.a * inner(gi, e) + c.cb * v[d] * gk2 + c.b * inner(gi, sym);
          }
        }
      },
      "rodrigues");
}

// ---- forward kinematics ---------------------------------------------------------

namespace {

struct Level {
  std::vector<std::size_t> joints;
  std::vector<std::size_t> parent_slots;  // position of each parent in the previous level
};

std::vector<Level> tree_levels(const KinematicTemplate& t) {
  const auto depth = depth_of(t.parents);
  const std::size_t levels = *std::max_element(depth.begin(), depth.end()) + 1;
  std::vector<Level> out(levels);
  std::vector<std::size_t> slot(kJointCount);
  for (std::size_t d = 0; d < levels; ++d) {
    for (std::size_t j = 0; j < kJointCount; ++j) {
      if (depth[j] != d) continue;
      slot[j] = out[d].joints.size();
      out[d].joints.push_back(j);
      if (d > 0) out[d].parent_slots.push_back(slot[static_cast<std::size_t>(t.parents[j])]);
    }
  }
  return out;
}

Tensor as_batch(const Tensor& x, std::size_t width, const char* what) {
  if (x.ndim() == 1 && x.numel() == width) return reshape(x, {1, width});
  if (x.ndim() == 2 && x.shape()[1] == width) return x;
  throw ShapeError(std::string(what) + " must be [B x " + std::to_string(width) + "], got " +
                   shape_string(x.shape()));
}

// Linear blend skinning of the selected template points.
Tensor skin_points(const Tensor& transforms, const Tensor& joints, const KinematicTemplate& t,
                   const std::vector<std::size_t>& points) {
  const std::size_t batch = transforms.shape()[0];
  const std::size_t m = points.size();
  const auto rest = t.rest_joints();
  std::vector<std::size_t> bones(2 * m);
  std::vector<double> local(2 * m * 3);
  std::vector<double> weights(2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t v = points[i];
    for (std::size_t k = 0; k < 2; ++k) {
      const auto b = static_cast<std::size_t>(t.skin_bones[v][k]);
      bones[2 * i + k] = b;
      weights[2 * i + k] = t.skin_weights[v][k];
      for (std::size_t c = 0; c < 3; ++c) local[(2 * i + k) * 3 + c] = t.points_mm[v][c] - rest[b][c];
    }
  }
  Tensor g = index_select(transforms, 1, bones);  // [B x 2m x 3 x 3]
  Tensor q({2 * m, 1, 3}, std::move(local));
  Tensor moved = add(sum(mul(g, q), -1), index_select(joints, 1, bones));  // [B x 2m x 3]
  Tensor blended = mul(moved, Tensor({2 * m, 1}, std::move(weights)));
  return sum(reshape(blended, {batch, m, 2, 3}), 2);
}

}  // namespace

HandMesh hand_forward(const Tensor& theta, const Tensor& beta, const KinematicTemplate& t,
                      bool with_vertices) {
  const Tensor pose = as_batch(theta, kPoseDim, "theta");
  const Tensor shape = as_batch(beta, kShapeDim, "beta");
  const std::size_t batch = pose.shape()[0];
  if (shape.shape()[0] != batch) throw ShapeError("theta and beta batch sizes differ");

  std::vector<double> offsets(kJointCount * 3);
  std::vector<double> relative_basis(kShapeDim * kJointCount, 0.0);  // [10 x 16]
  for (std::size_t j = 0; j < kJointCount; ++j) {
    for (std::size_t c = 0; c < 3; ++c) offsets[j * 3 + c] = t.offsets_mm[j][c];
    const double length = t.bone_length(j);
    if (length <= 0.0) continue;
    for (std::size_t k = 0; k < kShapeDim; ++k) {
      relative_basis[k * kJointCount + j] = t.shape_basis[j][k] / length;
    }
  }
  // Each offset keeps its direction; its length moves by basis . beta mm.
  Tensor scale = add(matmul(shape, Tensor({kShapeDim, kJointCount}, relative_basis)), 1.0);
  Tensor bone_offsets =
      mul(Tensor({kJointCount, 3}, std::move(offsets)), reshape(scale, {batch, kJointCount, 1}));
  Tensor local_rot = reshape(rodrigues(reshape(pose, {batch * kJointCount, 3})),
                             {batch, kJointCount, 3, 3});

  const auto levels = tree_levels(t);
  std::vector<Tensor> level_rot;
  std::vector<Tensor> level_pos;
  std::vector<std::size_t> order;
  for (std::size_t d = 0; d < levels.size(); ++d) {
    const Level& lv = levels[d];
    const std::size_t n = lv.joints.size();
    Tensor rot = index_select(local_rot, 1, lv.joints);
    Tensor off = index_select(bone_offsets, 1, lv.joints);
    if (d == 0) {
      level_rot.push_back(rot);
      level_pos.push_back(off);
    } else {
      Tensor parent_rot = index_select(level_rot.back(), 1, lv.parent_slots);
      Tensor parent_pos = index_select(level_pos.back(), 1, lv.parent_slots);
      Tensor turned = sum(mul(parent_rot, reshape(off, {batch, n, 1, 3})), -1);
      level_pos.push_back(add(parent_pos, turned));
      level_rot.push_back(matmul(parent_rot, rot));
    }
    order.insert(order.end(), lv.joints.begin(), lv.joints.end());
  }
  std::vector<std::size_t> inverse(kJointCount);
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
  Tensor transforms = index_select(concat(level_rot, 1), 1, inverse);  // [B x 16 x 3 x 3]
  Tensor joints16 = index_select(concat(level_pos, 1), 1, inverse);    // [B x 16 x 3]

  HandMesh mesh;
  std::vector<std::size_t> regressor(kOutputJoints);
  for (std::size_t i = 0; i < kOutputJoints; ++i) {
    regressor[i] = static_cast<std::size_t>(t.joint_regressor[i]);
  }
  if (with_vertices) {
    std::vector<std::size_t> all(kVertexCount);
    for (std::size_t v = 0; v < kVertexCount; ++v) all[v] = v;
    mesh.vertices = skin_points(transforms, joints16, t, all);
    mesh.joints = index_select(concat({joints16, mesh.vertices}, 1), 1, regressor);
  } else {
    std::vector<std::size_t> needed;
    for (auto& r : regressor) {
      if (r >= kJointCount) {
        needed.push_back(r - kJointCount);
        r = kJointCount + needed.size() - 1;
      }
    }
    Tensor pool = needed.empty() ? joints16
                                 : concat({joints16, skin_points(transforms, joints16, t, needed)}, 1);
    mesh.joints = index_select(pool, 1, regressor);
  }
  return mesh;
}

// ---- camera -------------------------------------------------------------------

std::array<double, 2> project_point(const Vec3& p, const Camera& cam) {
  Vec3 c = cam.translation;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 3; ++k) c[i] += cam.rotation[i * 3 + k] * p[k];
  }
  if (!(c[2] > 0.0)) throw DomainError("point behind the camera (depth " + std::to_string(c[2]) + ")");
  return {cam.fx * c[0] / c[2] + cam.cx, cam.fy * c[1] / c[2] + cam.cy};
}

Tensor project_2d(const Tensor& points, const Camera& cam) {
  if (points.ndim() == 0 || points.shape().back() != 3) {
    throw ShapeError("project_2d expects [..., 3] points");
  }
  const std::size_t m = points.numel() / 3;
  Tensor rt({3, 3}, {cam.rotation[0], cam.rotation[3], cam.rotation[6], cam.rotation[1],
                     cam.rotation[4], cam.rotation[7], cam.rotation[2], cam.rotation[5],
                     cam.rotation[8]});
  Tensor camera_pts = add(matmul(reshape(points, {m, 3}), rt),
                          Tensor({3}, {cam.translation[0], cam.translation[1], cam.translation[2]}));
  Tensor depth = slice(camera_pts, 1, 2, 1);
  for (double z : depth.data()) {
    if (!(z > 0.0)) throw DomainError("point behind the camera (depth " + std::to_string(z) + ")");
  }
  Tensor ratio = div(slice(camera_pts, 1, 0, 2), depth);  // [m x 2]
  Tensor pixels = add(mul(ratio, Tensor({2}, {cam.fx, cam.fy})), Tensor({2}, {cam.cx, cam.cy}));
  Shape out = points.shape();
  out.back() = 2;
  return reshape(pixels, std::move(out));
}

}  // namespace deformer::hand
