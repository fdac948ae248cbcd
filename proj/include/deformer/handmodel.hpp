#pragma once

// Seeded stand-in for a parametric hand layer: 48 axis-angle pose values and
// 10 shape coefficients map to 21 joints and 778 surface points (mm).
//
// Joint order (16 articulated joints, parent in brackets):
//   0 wrist; index 1[0] 2[1] 3[2]; middle 4[0] 5[4] 6[5];
//   pinky 7[0] 8[7] 9[8]; ring 10[0] 11[10] 12[11]; thumb 13[0] 14[13] 15[14]
// The 21 output joints are those 16 followed by the fingertips of index,
// middle, pinky, ring and thumb. The hand rests flat in the z=0 plane with
// fingers pointing along +y and the wrist at the origin.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "deformer/tensor.hpp"

namespace deformer::hand {

inline constexpr std::size_t kJointCount = 16;
inline constexpr std::size_t kOutputJoints = 21;
inline constexpr std::size_t kVertexCount = 778;
inline constexpr std::size_t kPoseDim = 48;
inline constexpr std::size_t kShapeDim = 10;

using Vec3 = std::array<double, 3>;

struct KinematicTemplate {
  std::array<int, kJointCount> parents{};
  // Rest offset of each joint from its parent (row 0 is the root position).
  std::array<Vec3, kJointCount> offsets_mm{};
  // Bone-length change in mm per unit of each shape coefficient.
  std::array<std::array<double, kShapeDim>, kJointCount> shape_basis{};
  std::vector<Vec3> points_mm;                 // 778 rest-pose points
  std::vector<std::array<int, 2>> skin_bones;  // two joints per point
  std::vector<std::array<double, 2>> skin_weights;
  // Indices into [16 joints | 778 points].
  std::array<int, kOutputJoints> joint_regressor{};

  // Throws DomainError on a malformed template (cycle, bad index, weights
  // not summing to one, wrong counts).
  void validate() const;
  // Rest joint positions (theta = 0, beta = 0), mm.
  std::array<Vec3, kJointCount> rest_joints() const;
  double bone_length(std::size_t joint) const;
};

KinematicTemplate template_from_seed(std::uint64_t seed);

std::string template_to_json(const KinematicTemplate& tmpl);
// Throws IoError on malformed JSON and DomainError on an invalid template.
KinematicTemplate template_from_json(const std::string& text);

struct HandMesh {
  Tensor joints;    // [B x 21 x 3]
  Tensor vertices;  // [B x 778 x 3]
};

// Batched axis-angle -> rotation matrix: [N x 3] -> [N x 3 x 3].
Tensor rodrigues(const Tensor& axis_angle);

// theta [B x 48], beta [B x 10] (1-D inputs are treated as B = 1).
HandMesh hand_forward(const Tensor& theta, const Tensor& beta, const KinematicTemplate& tmpl,
                      bool with_vertices = true);

struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  Vec3 translation{0, 0, 0};                                  // mm
};

// [..., 3] world points -> [..., 2] pixels. Throws DomainError when a
// point has nonpositive depth in camera coordinates.
Tensor project_2d(const Tensor& points, const Camera& camera);
std::array<double, 2> project_point(const Vec3& point, const Camera& camera);

}  // namespace deformer::hand
