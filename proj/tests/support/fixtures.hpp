// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

// Random poses and trajectories for property tests.

#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "rcnn_vo/rcnn_vo.hpp"

namespace rcnn_vo::testing {

inline Eigen::Vector3d random_euler(Rng& rng, double pitch_margin = 0.1) {
  const double pi = std::numbers::pi;
  return {rng.uniform(-pi + 1e-3, pi), rng.uniform(-pi / 2 + pitch_margin, pi / 2 - pitch_margin),
          rng.uniform(-pi + 1e-3, pi)};
}

inline PoseSE3 random_pose(Rng& rng, double extent = 10.0) {
  return {euler_to_rotation(random_euler(rng)),
          {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)}};
}

// Smooth random walk: small rotations, forward-biased steps.
inline Trajectory random_trajectory(Rng& rng, std::size_t n, double step = 1.0) {
  Trajectory t;
  t.poses.push_back(random_pose(rng));
  for (std::size_t k = 1; k < n; ++k) {
    Pose6 rel;
    rel.p = {rng.uniform(-0.1, 0.1) * step, rng.uniform(-0.05, 0.05) * step, step * rng.uniform(0.5, 1.5)};
    rel.phi = {rng.uniform(-0.01, 0.01), rng.uniform(-0.05, 0.05), rng.uniform(-0.01, 0.01)};
    t.poses.push_back(t.poses.back() * to_se3(rel));
  }
  return t;
}

// Straight line along +z at `step` metres per frame.
inline Trajectory straight_line(std::size_t n, double step = 1.0) {
  Trajectory t;
  for (std::size_t k = 0; k < n; ++k) {
    PoseSE3 p;
    p.t = {0.0, 0.0, step * static_cast<double>(k)};
    t.poses.push_back(p);
  }
  return t;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rcnn_vo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double pose_distance(const PoseSE3& a, const PoseSE3& b) {
  return std::max((a.t - b.t).cwiseAbs().maxCoeff(), (a.R - b.R).norm());
}

}  // namespace rcnn_vo::testing
