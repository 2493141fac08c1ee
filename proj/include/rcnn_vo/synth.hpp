// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file synth.hpp
 * @brief Procedural camera sequences with exact ground truth.
 *
 * A pinhole camera (KITTI axes: x right, y down, z forward) moves at a fixed
 * height above a textured ground plane y = camera_height. Rays that miss the
 * ground see a sky whose colour varies with azimuth, so rotations change the
 * upper part of the image as well. Distant ground fades into the sky colour.
 * Poses are exact; images are point-sampled at pixel centres.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcnn_vo/geometry.hpp"
#include "rcnn_vo/image.hpp"
#include "rcnn_vo/kitti_io.hpp"
#include "rcnn_vo/rng.hpp"
#include "rcnn_vo/tensor.hpp"

namespace rcnn_vo::synth {

enum class Profile { kStraight, kTurn, kStopAndGo };

inline Profile parse_profile(const std::string& s) {
  if (s == "straight") return Profile::kStraight;
  if (s == "turn") return Profile::kTurn;
  if (s == "stop_and_go") return Profile::kStopAndGo;
  throw std::invalid_argument("unknown motion profile '" + s + "' (straight, turn, stop_and_go)");
}

inline const char* profile_name(Profile p) {
  switch (p) {
    case Profile::kStraight: return "straight";
    case Profile::kTurn: return "turn";
    case Profile::kStopAndGo: return "stop_and_go";
  }
  return "?";
}

struct SceneConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  double focal = 0.0;  // pixels; 0 means width / 2 (90 degree horizontal field of view)
  double camera_height = 1.65;
  double fog_distance = 25.0;
  std::uint64_t texture_seed = 7;
};

struct MotionConfig {
  Profile profile = Profile::kStraight;
  std::size_t frames = 24;
  double step = 1.0;        // metres per frame at full speed
  double yaw_rate = 0.06;   // rad per frame for the turn profile
  std::size_t period = 12;  // frames per stop-and-go cycle
};

/// Absolute camera-to-world poses. Each step moves `step_k` metres along the
/// current optical axis and then yaws, so per-step relative poses are
/// (0, 0, step_k) with Euler angles (0, yaw_k, 0).
inline std::vector<PoseSE3> motion_poses(const MotionConfig& m) {
  if (m.frames == 0) throw std::invalid_argument("synth: frames must be >= 1");
  if (m.period == 0) throw std::invalid_argument("synth: period must be >= 1");
  std::vector<PoseSE3> poses{PoseSE3::identity()};
  for (std::size_t k = 1; k < m.frames; ++k) {
    double step = m.step, yaw = 0.0;
    if (m.profile == Profile::kTurn) yaw = m.yaw_rate;
    if (m.profile == Profile::kStopAndGo) {
      step = m.step * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m.period)));
    }
    const PoseSE3 rel{rot_y(yaw), Eigen::Vector3d(0.0, 0.0, step)};
    poses.push_back(poses.back() * rel);
  }
  return poses;
}

/// Ground texture and sky colouring, fixed by a seed.
class Scene {
 public:
  explicit Scene(const SceneConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.texture_seed);
    for (auto& w : waves_) {
      const double freq = rng.uniform(0.4, 3.0);
      const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
      w.kx = freq * std::cos(dir);
      w.kz = freq * std::sin(dir);
      for (auto& ph : w.phase) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
      w.amp = rng.uniform(12.0, 28.0);
    }
    if (!(cfg_.focal > 0.0)) cfg_.focal = 0.5 * static_cast<double>(cfg_.width);
  }

  const SceneConfig& config() const { return cfg_; }

  std::array<double, 3> ground(double x, double z) const {
    std::array<double, 3> c{120.0, 110.0, 95.0};
    for (const auto& w : waves_) {
      const double a = w.kx * x + w.kz * z;
      for (int ch = 0; ch < 3; ++ch) c[ch] += w.amp * std::sin(a + w.phase[ch]);
    }
    return c;
  }

  std::array<double, 3> sky(const Eigen::Vector3d& dir) const {
    const double az = std::atan2(dir.x(), dir.z());
    const double el = std::atan2(-dir.y(), std::hypot(dir.x(), dir.z()));
    return {150.0 + 40.0 * std::sin(3.0 * az) + 30.0 * el, 170.0 + 35.0 * std::cos(2.0 * az + 0.5),
            210.0 + 25.0 * std::sin(5.0 * az + 1.0)};
  }

  /// Colour seen along a world-space ray from camera centre `c`.
  std::array<double, 3> shade(const Eigen::Vector3d& c, const Eigen::Vector3d& dir) const {
    const auto s = sky(dir);
    if (dir.y() <= 1e-9) return s;
    const double dist = (cfg_.camera_height - c.y()) / dir.y();
    const Eigen::Vector3d hit = c + dist * dir;
    const auto g = ground(hit.x(), hit.z());
    const double fog = 1.0 - std::exp(-dist * dir.norm() / cfg_.fog_distance);
    return {g[0] + fog * (s[0] - g[0]), g[1] + fog * (s[1] - g[1]), g[2] + fog * (s[2] - g[2])};
  }

  /// [3,H,W] image in 0-255 for camera-to-world pose T.
  Tensor render(const PoseSE3& T) const {
    const std::size_t H = cfg_.height, W = cfg_.width;
    std::vector<double> out(3 * H * W);
    const double cx = 0.5 * static_cast<double>(W), cy = 0.5 * static_cast<double>(H);
    for (std::size_t v = 0; v < H; ++v) {
      for (std::size_t u = 0; u < W; ++u) {
        const Eigen::Vector3d d_cam((static_cast<double>(u) + 0.5 - cx) / cfg_.focal,
                                    (static_cast<double>(v) + 0.5 - cy) / cfg_.focal, 1.0);
        const auto col = shade(T.t, T.R * d_cam);
        for (std::size_t ch = 0; ch < 3; ++ch) out[(ch * H + v) * W + u] = std::clamp(col[ch], 0.0, 255.0);
      }
    }
    return Tensor::from({3, H, W}, std::move(out));
  }

  /// Pixel coordinates (continuous, pixel centres at +0.5) where world point
  /// P projects for camera pose T, if it lies in front of the camera.
  std::optional<std::pair<double, double>> project(const PoseSE3& T, const Eigen::Vector3d& P) const {
    const Eigen::Vector3d pc = T.R.transpose() * (P - T.t);
    if (pc.z() <= 1e-9) return std::nullopt;
    return std::make_pair(cfg_.focal * pc.x() / pc.z() + 0.5 * static_cast<double>(cfg_.width),
                          cfg_.focal * pc.y() / pc.z() + 0.5 * static_cast<double>(cfg_.height));
  }

  /// Ground point seen through pixel (u, v) of pose T, if the ray hits the ground.
  std::optional<Eigen::Vector3d> ground_hit(const PoseSE3& T, double u, double v) const {
    const Eigen::Vector3d d_cam((u + 0.5 - 0.5 * static_cast<double>(cfg_.width)) / cfg_.focal,
                                (v + 0.5 - 0.5 * static_cast<double>(cfg_.height)) / cfg_.focal, 1.0);
    const Eigen::Vector3d dir = T.R * d_cam;
    if (dir.y() <= 1e-9) return std::nullopt;
    return T.t + ((cfg_.camera_height - T.t.y()) / dir.y()) * dir;
  }

 private:
  struct Wave {
    double kx = 0, kz = 0, amp = 0;
    std::array<double, 3> phase{};
  };
  SceneConfig cfg_;
  std::array<Wave, 6> waves_{};
};

/// In-memory sequence: rendered frames plus exact poses.
inline SequenceDataset make_sequence(const std::string& id, const SceneConfig& scene_cfg, const MotionConfig& motion,
                                     double frame_rate = 10.0) {
  const Scene scene(scene_cfg);
  SequenceDataset ds;
  ds.id = id;
  ds.frame_rate = frame_rate;
  ds.poses = motion_poses(motion);
  for (const auto& T : *ds.poses) ds.images.push_back(scene.render(T));
  ds.validate();
  return ds;
}

/// Writes sequences/<id>/image_2/%06d.png and poses/<id>.txt under root.
inline void write_kitti_sequence(const std::filesystem::path& root, const SequenceDataset& ds) {
  namespace fs = std::filesystem;
  const fs::path img_dir = root / "sequences" / ds.id / "image_2";
  std::error_code ec;
  fs::create_directories(img_dir, ec);
  fs::create_directories(root / "poses", ec);
  if (!fs::is_directory(img_dir) || !fs::is_directory(root / "poses")) {
    throw DataError("cannot create dataset directories under " + root.string());
  }
  for (std::size_t k = 0; k < ds.frame_count(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", k);
    save_png(img_dir / name, ds.raw_image(k));
  }
  if (ds.poses) write_pose_file(root / "poses" / (ds.id + ".txt"), *ds.poses);
}

}  // namespace rcnn_vo::synth
