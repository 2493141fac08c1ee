// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file geometry.hpp
 * @brief Rigid-body pose algebra used for targets and trajectories.
 *
 * Conventions
 *  - Camera axes follow KITTI: x right, y down, z forward.
 *  - Euler angles are radians, phi = (phi_x, phi_y, phi_z), and
 *    R = Rz(phi_z) * Ry(phi_y) * Rx(phi_x).
 *  - A PoseSE3 maps points from its own frame into the parent frame:
 *    x_parent = R * x_local + t.
 */

#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcnn_vo {

struct PoseSE3 {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }

  PoseSE3 inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  PoseSE3 operator*(const PoseSE3& o) const { return {R * o.R, R * o.t + t}; }

  /// Largest deviation of R from orthonormality: max(|R^T R - I|_max, |det R - 1|).
  double orthonormality_error() const {
    const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return std::max(ortho, std::abs(R.determinant() - 1.0));
  }

  bool is_valid(double tol = 1e-9) const { return R.allFinite() && t.allFinite() && orthonormality_error() <= tol; }
};

/// Regression target: translation p (metres) and Euler orientation phi (radians).
struct Pose6 {
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Eigen::Vector3d phi = Eigen::Vector3d::Zero();

  bool operator==(const Pose6&) const = default;
};

inline Eigen::Matrix3d rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

inline Eigen::Matrix3d rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

inline Eigen::Matrix3d rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Eigen::Matrix3d m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

inline Eigen::Matrix3d euler_to_rotation(const Eigen::Vector3d& phi) {
  return rot_z(phi.z()) * rot_y(phi.y()) * rot_x(phi.x());
}

namespace detail {
// Maps an atan2 result from [-pi, pi] onto (-pi, pi].
inline double wrap_angle(double a) { return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a; }
}  // namespace detail

inline constexpr double kGimbalLockCos = 1e-6;
inline constexpr double kRotationTolerance = 1e-6;

/// Inverse of euler_to_rotation on the principal branch (phi_y in [-pi/2, pi/2]).
/// At gimbal lock (|cos phi_y| < 1e-6) phi_x is fixed to 0 and phi_z absorbs
/// the remaining rotation.
inline Eigen::Vector3d rotation_to_euler(const Eigen::Matrix3d& R) {
  const PoseSE3 probe{R, Eigen::Vector3d::Zero()};
  if (!R.allFinite() || probe.orthonormality_error() > kRotationTolerance) {
    throw std::invalid_argument("rotation_to_euler: matrix is not a rotation (orthonormality error " +
                                std::to_string(probe.orthonormality_error()) + ")");
  }
  const double cy = std::hypot(R(0, 0), R(1, 0));
  const double y = std::atan2(-R(2, 0), cy);
  double x = 0.0, z = 0.0;
  if (cy >= kGimbalLockCos) {
    x = std::atan2(R(2, 1), R(2, 2));
    z = std::atan2(R(1, 0), R(0, 0));
  } else {
    // With phi_x = 0 both singular branches reduce to R01 = -sin(z), R11 = cos(z).
    z = std::atan2(-R(0, 1), R(1, 1));
  }
  return {detail::wrap_angle(x), y, detail::wrap_angle(z)};
}

inline PoseSE3 to_se3(const Pose6& p) { return {euler_to_rotation(p.phi), p.p}; }

inline Pose6 to_pose6(const PoseSE3& T) { return {T.t, rotation_to_euler(T.R)}; }

/// a^{-1} * b: the pose of b expressed in the frame of a.
inline PoseSE3 relative_pose(const PoseSE3& a, const PoseSE3& b) {
  return {a.R.transpose() * b.R, a.R.transpose() * (b.t - a.t)};
}

/// Chains per-step relative motions onto `start`; the result has
/// relatives.size() + 1 poses and begins with `start`.
inline std::vector<PoseSE3> compose_trajectory(std::span<const Pose6> relatives, const PoseSE3& start) {
  if (relatives.empty()) throw std::invalid_argument("compose_trajectory: empty relative sequence");
  std::vector<PoseSE3> out;
  out.reserve(relatives.size() + 1);
  out.push_back(start);
  for (const auto& rel : relatives) out.push_back(out.back() * to_se3(rel));
  return out;
}

/// Per-step relative targets of an absolute trajectory.
inline std::vector<Pose6> relative_targets(std::span<const PoseSE3> absolute) {
  std::vector<Pose6> out;
  for (std::size_t k = 1; k < absolute.size(); ++k) out.push_back(to_pose6(relative_pose(absolute[k - 1], absolute[k])));
  return out;
}

/// Rotation angle of R in [0, pi], with the arccos argument clamped to [-1, 1].
inline double rotation_angle(const Eigen::Matrix3d& R) {
  // atan2 of the skew and symmetric parts: exact zero when R is symmetric
  // (e.g. A^T A in floating point), and well conditioned near 0 and pi.
  const Eigen::Vector3d w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * w.norm(), 0.5 * (R.trace() - 1.0));
}

/// Nearest rotation in the Frobenius sense (SVD projection with det = +1).
inline Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& M) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  const Eigen::Matrix3d V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
  return U * V.transpose();
}

}  // namespace rcnn_vo
