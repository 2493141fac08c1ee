// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file kitti_io.hpp
 * @brief KITTI odometry layout, pose files and training segments.
 *
 * Expected layout under a dataset root:
 *
 *   sequences/<NN>/image_2/000000.png ...   (camera directory configurable)
 *   poses/<NN>.txt                           (optional; one line per frame)
 *
 * Each pose line holds the 12 row-major entries of the 3x4 matrix [R | t]
 * mapping frame-k camera coordinates into the frame-0 camera coordinates.
 */

#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "rcnn_vo/geometry.hpp"
#include "rcnn_vo/image.hpp"
#include "rcnn_vo/rng.hpp"
#include "rcnn_vo/tensor.hpp"

namespace rcnn_vo {

// ---------------------------------------------------------------------------
// Pose files

/// Beyond this orthonormality error a parsed rotation is re-projected onto
/// SO(3) with a warning; far beyond it the line is rejected.
inline constexpr double kPoseOrthoTolerance = 1e-4;
inline constexpr double kPoseOrthoReject = 1e-1;

inline std::vector<PoseSE3> parse_pose_text(const std::string& text, const std::string& origin,
                                            std::vector<std::string>* warnings = nullptr) {
  std::vector<PoseSE3> poses;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    double v[12];
    std::size_t count = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      if (count == 12) throw DataError(where + ": more than 12 values");
      if (*p == '+') ++p;  // from_chars rejects a leading plus
      auto [next, ec] = std::from_chars(p, end, v[count]);
      if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) {
        throw DataError(where + ": malformed number");
      }
      if (!std::isfinite(v[count])) throw DataError(where + ": non-finite value");
      ++count;
      p = next;
    }
    if (count != 12) throw DataError(where + ": expected 12 values, found " + std::to_string(count));
    PoseSE3 T;
    T.R << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    T.t << v[3], v[7], v[11];
    const double err = T.orthonormality_error();
    if (err > kPoseOrthoReject) throw DataError(where + ": rotation block is not a rotation");
    if (err > kPoseOrthoTolerance) {
      T.R = nearest_rotation(T.R);
      if (warnings) warnings->push_back(where + ": rotation re-orthonormalized (error " + std::to_string(err) + ")");
    }
    poses.push_back(T);
  }
  if (poses.empty()) throw DataError(origin + ": no poses");
  return poses;
}

inline std::vector<PoseSE3> load_pose_file(const std::filesystem::path& path,
                                           std::vector<std::string>* warnings = nullptr) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open pose file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_pose_text(ss.str(), path.string(), warnings);
}

/// One pose per line, 12 values with 16 significant digits, space-separated.
inline std::string format_pose_line(const PoseSE3& T) {
  const double v[12] = {T.R(0, 0), T.R(0, 1), T.R(0, 2), T.t(0), T.R(1, 0), T.R(1, 1),
                        T.R(1, 2), T.t(1),    T.R(2, 0), T.R(2, 1), T.R(2, 2), T.t(2)};
  std::string line;
  char buf[32];
  for (int i = 0; i < 12; ++i) {
    std::snprintf(buf, sizeof(buf), "%.15e", v[i]);
    if (i) line += ' ';
    line += buf;
  }
  return line;
}

inline std::string format_pose_text(std::span<const PoseSE3> poses) {
  std::string out;
  for (const auto& T : poses) out += format_pose_line(T) + "\n";
  return out;
}

inline void write_pose_file(const std::filesystem::path& path, std::span<const PoseSE3> poses) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write pose file " + path.string());
  os << format_pose_text(poses);
  if (!os) throw DataError("failed writing pose file " + path.string());
}

// ---------------------------------------------------------------------------
// Sequences

struct SequenceDataset {
  std::string id;
  std::vector<std::filesystem::path> frames;  // on-disk frames, ordered by index
  std::vector<Tensor> images;                 // or in-memory [3,H,W] frames (0-255)
  std::optional<std::vector<PoseSE3>> poses;  // absolute, one per frame
  double frame_rate = 10.0;

  std::size_t frame_count() const { return images.empty() ? frames.size() : images.size(); }

  Tensor raw_image(std::size_t i) const { return images.empty() ? load_png(frames.at(i)) : images.at(i); }

  void validate() const {
    if (!frames.empty() && !images.empty()) throw DataError("sequence " + id + ": both frame paths and images set");
    if (poses && poses->size() != frame_count()) {
      throw DataError("sequence " + id + ": " + std::to_string(poses->size()) + " poses for " +
                      std::to_string(frame_count()) + " frames");
    }
    if (frame_rate <= 0.0) throw DataError("sequence " + id + ": frame rate must be positive");
  }
};

/// Where frames live under the dataset root: sequences/<id>/<camera_dir>
/// (kKitti) or directly in <id>/ (kFlat). Poses are poses/<id>.txt in both.
enum class Layout { kKitti, kFlat };

/// Loads sequence `id`. Frames are the .png files of the image directory,
/// named by integer index; poses/<id>.txt is loaded when present, or required
/// when `require_poses` is set.
inline SequenceDataset load_kitti_sequence(const std::filesystem::path& root, const std::string& id,
                                           const std::string& camera_dir = "image_2", bool require_poses = false,
                                           std::vector<std::string>* warnings = nullptr,
                                           Layout layout = Layout::kKitti) {
  namespace fs = std::filesystem;
  SequenceDataset ds;
  ds.id = id;
  const fs::path dir = layout == Layout::kKitti ? root / "sequences" / id / camera_dir : root / id;
  if (!fs::is_directory(dir)) throw DataError("missing image directory " + dir.string());
  std::vector<std::pair<long, fs::path>> indexed;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    long index = 0;
    auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), index);
    if (ec != std::errc() || ptr != stem.data() + stem.size()) {
      throw DataError("frame name is not an index: " + entry.path().string());
    }
    indexed.emplace_back(index, entry.path());
  }
  std::sort(indexed.begin(), indexed.end());
  for (std::size_t i = 1; i < indexed.size(); ++i) {
    if (indexed[i].first == indexed[i - 1].first) throw DataError("duplicate frame index in " + dir.string());
  }
  if (indexed.empty()) throw DataError("no .png frames in " + dir.string());
  for (auto& [idx, path] : indexed) ds.frames.push_back(std::move(path));

  const fs::path pose_path = root / "poses" / (id + ".txt");
  if (fs::exists(pose_path)) {
    ds.poses = load_pose_file(pose_path, warnings);
  } else if (require_poses) {
    throw DataError("missing pose file " + pose_path.string());
  }
  ds.validate();
  return ds;
}

inline MeanRgb compute_mean_rgb(std::span<const SequenceDataset> sequences) {
  MeanRgbAccumulator acc;
  for (const auto& ds : sequences) {
    for (std::size_t i = 0; i < ds.frame_count(); ++i) acc.add(ds.raw_image(i));
  }
  return acc.result();
}

// ---------------------------------------------------------------------------
// Segments

struct SegmentSource {
  std::string sequence_id;
  std::size_t start = 0;   // first frame
  std::size_t length = 0;  // number of pairs; frames [start, start + length]

  bool operator==(const SegmentSource&) const = default;
};

struct Segment {
  std::vector<Tensor> pair_tensors;  // [6,H,W] each
  std::vector<Pose6> targets;        // relative pose of frame k+1 in frame k
  SegmentSource source;
};

struct SegmentOptions {
  std::size_t min_len = 5;
  std::size_t max_len = 10;
  std::size_t stride = 5;
};

/// Window starts every `stride` frames; each length is drawn uniformly in
/// [min_len, max_len] and clipped to the frames that remain. Windows shorter
/// than min_len after clipping are dropped. One length is drawn per candidate
/// start, so the windows depend only on (frame_count, options, rng state).
inline std::vector<SegmentSource> plan_segments(const std::string& id, std::size_t frame_count,
                                                const SegmentOptions& opt, Rng& rng) {
  if (opt.min_len < 1 || opt.min_len > opt.max_len || opt.stride < 1) {
    throw std::invalid_argument("segment options need 1 <= min_len <= max_len and stride >= 1");
  }
  std::vector<SegmentSource> out;
  if (frame_count < opt.min_len + 1) return out;
  const std::size_t pairs = frame_count - 1;
  for (std::size_t start = 0; start + opt.min_len <= pairs; start += opt.stride) {
    auto len = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(opt.min_len), static_cast<std::int64_t>(opt.max_len)));
    len = std::min(len, pairs - start);
    if (len >= opt.min_len) out.push_back({id, start, len});
  }
  return out;
}

/// Preprocessed frames and stacked pairs of one sequence, computed on demand
/// and shared between overlapping segments.
class PairCache {
 public:
  PairCache(const SequenceDataset& ds, MeanRgb mean, std::size_t height, std::size_t width)
      : ds_(&ds), mean_(mean), height_(height), width_(width), frames_(ds.frame_count()), pairs_(ds.frame_count()) {}

  const Tensor& frame(std::size_t i) {
    if (!frames_.at(i)) frames_[i] = preprocess_image(ds_->raw_image(i), mean_, height_, width_);
    return *frames_[i];
  }

  /// Pair of frames (k, k + 1).
  const Tensor& pair(std::size_t k) {
    if (!pairs_.at(k)) pairs_[k] = make_pair(frame(k), frame(k + 1));
    return *pairs_[k];
  }

 private:
  const SequenceDataset* ds_;
  MeanRgb mean_;
  std::size_t height_, width_;
  std::vector<std::optional<Tensor>> frames_;
  std::vector<std::optional<Tensor>> pairs_;
};

inline Segment materialize_segment(const SequenceDataset& ds, const SegmentSource& src, PairCache& cache) {
  if (!ds.poses) throw DataError("sequence " + ds.id + " has no ground truth");
  Segment seg;
  seg.source = src;
  for (std::size_t k = src.start; k < src.start + src.length; ++k) seg.pair_tensors.push_back(cache.pair(k));
  const auto& poses = *ds.poses;
  seg.targets = relative_targets(std::span<const PoseSE3>(poses.data() + src.start, src.length + 1));
  return seg;
}

/// Cuts a ground-truth sequence into training segments (see plan_segments)
/// with preprocessed pair tensors and per-step relative targets.
inline std::vector<Segment> segment_dataset(const SequenceDataset& ds, const SegmentOptions& opt, Rng& rng,
                                            const MeanRgb& mean, std::size_t height, std::size_t width) {
  if (!ds.poses) throw DataError("sequence " + ds.id + " has no ground truth");
  ds.validate();
  PairCache cache(ds, mean, height, width);
  std::vector<Segment> out;
  for (const auto& src : plan_segments(ds.id, ds.frame_count(), opt, rng)) out.push_back(materialize_segment(ds, src, cache));
  return out;
}

}  // namespace rcnn_vo
