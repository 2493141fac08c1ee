// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file evaluation.hpp
 * @brief KITTI odometry drift metrics, inference over sequences, trajectory output.
 *
 * For every start frame (every `start_stride` frames) and every path length L,
 * the end frame is the first frame whose distance along the ground truth from
 * the start is at least L. The error transform between the ground-truth and
 * estimated relative motions over that span gives a translational drift
 * (|t_E| / L) and a rotational drift (angle(R_E) / L). No alignment or scale
 * correction is applied to the estimate.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "rcnn_vo/geometry.hpp"
#include "rcnn_vo/kitti_io.hpp"
#include "rcnn_vo/network.hpp"
#include "rcnn_vo/svg.hpp"

namespace rcnn_vo {

struct Trajectory {
  std::vector<PoseSE3> poses;
  double frame_rate = 10.0;

  std::size_t size() const { return poses.size(); }
  double timestamp(std::size_t k) const { return static_cast<double>(k) / frame_rate; }
};

inline const std::vector<double>& default_eval_lengths() {
  static const std::vector<double> lengths{100, 200, 300, 400, 500, 600, 700, 800};
  return lengths;
}

inline std::vector<double> cumulative_distances(const Trajectory& gt) {
  if (gt.poses.empty()) throw std::invalid_argument("cumulative_distances: empty trajectory");
  std::vector<double> d(gt.size(), 0.0);
  for (std::size_t k = 1; k < gt.size(); ++k) d[k] = d[k - 1] + (gt.poses[k].t - gt.poses[k - 1].t).norm();
  return d;
}

struct ErrorRow {
  std::size_t start = 0;
  double length = 0.0;  // m
  double t_err = 0.0;   // fraction of length
  double r_err = 0.0;   // rad / m
  double speed = 0.0;   // m / s
};

inline std::vector<ErrorRow> segment_errors(const Trajectory& gt, const Trajectory& est,
                                            const std::vector<double>& lengths = default_eval_lengths(),
                                            std::size_t start_stride = 10) {
  if (gt.size() != est.size()) {
    throw std::invalid_argument("segment_errors: ground truth has " + std::to_string(gt.size()) +
                                " poses, estimate has " + std::to_string(est.size()));
  }
  if (start_stride == 0) throw std::invalid_argument("segment_errors: start_stride must be >= 1");
  if (!(gt.frame_rate > 0.0)) throw std::invalid_argument("segment_errors: frame rate must be positive");
  std::vector<ErrorRow> rows;
  if (gt.poses.empty()) return rows;
  const auto dist = cumulative_distances(gt);
  for (std::size_t s = 0; s < gt.size(); s += start_stride) {
    for (double L : lengths) {
      if (!(L > 0.0)) throw std::invalid_argument("segment_errors: lengths must be positive");
      std::size_t j = s;
      while (j < gt.size() && dist[j] - dist[s] < L) ++j;
      if (j == gt.size()) continue;
      const PoseSE3 gt_rel = relative_pose(gt.poses[s], gt.poses[j]);
      const PoseSE3 est_rel = relative_pose(est.poses[s], est.poses[j]);
      const PoseSE3 E = relative_pose(gt_rel, est_rel);
      ErrorRow r;
      r.start = s;
      r.length = L;
      r.t_err = E.t.norm() / L;
      r.r_err = rotation_angle(E.R) / L;
      r.speed = (dist[j] - dist[s]) / (static_cast<double>(j - s) / gt.frame_rate);
      rows.push_back(r);
    }
  }
  return rows;
}

struct DriftStat {
  double t_rel = 0.0;  // fraction
  double r_rel = 0.0;  // rad / m
  std::size_t count = 0;

  bool operator==(const DriftStat&) const = default;
};

struct SequenceSummary {
  double t_rel_percent = 0.0;
  double r_rel_deg_per_100m = 0.0;
  std::size_t subsequences = 0;
};

struct EvalReport {
  std::map<double, DriftStat> per_length;
  std::map<double, DriftStat> per_speed;  // keyed by bin lower edge, m/s
  SequenceSummary per_sequence;
};

inline double rad_per_m_to_deg_per_100m(double r) { return r * (180.0 / std::numbers::pi) * 100.0; }

/// Means per length, per speed bin and overall. Sums are taken in a fixed
/// order (sorted rows) so the result does not depend on row order.
inline EvalReport aggregate(std::vector<ErrorRow> rows, double speed_bin_width = 2.0) {
  if (!(speed_bin_width > 0.0)) throw std::invalid_argument("aggregate: speed bin width must be positive");
  std::sort(rows.begin(), rows.end(), [](const ErrorRow& a, const ErrorRow& b) {
    return std::tie(a.start, a.length, a.t_err, a.r_err, a.speed) < std::tie(b.start, b.length, b.t_err, b.r_err, b.speed);
  });
  EvalReport rep;
  double t_sum = 0.0, r_sum = 0.0;
  for (const auto& r : rows) {
    auto& L = rep.per_length[r.length];
    L.t_rel += r.t_err, L.r_rel += r.r_err, ++L.count;
    auto& S = rep.per_speed[std::floor(r.speed / speed_bin_width) * speed_bin_width];
    S.t_rel += r.t_err, S.r_rel += r.r_err, ++S.count;
    t_sum += r.t_err, r_sum += r.r_err;
  }
  for (auto* m : {&rep.per_length, &rep.per_speed}) {
    for (auto& [key, s] : *m) {
      s.t_rel /= static_cast<double>(s.count);
      s.r_rel /= static_cast<double>(s.count);
    }
  }
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    rep.per_sequence.t_rel_percent = 100.0 * t_sum / n;
    rep.per_sequence.r_rel_deg_per_100m = rad_per_m_to_deg_per_100m(r_sum / n);
    rep.per_sequence.subsequences = rows.size();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Inference

/// Runs the model over every consecutive pair of the sequence, `chunk` pairs
/// at a time with the recurrent state carried across chunks, and composes the
/// relative estimates from the identity. Output has one pose per frame.
inline Trajectory infer_trajectory(const VoModel& model, const SequenceDataset& ds, std::size_t chunk = 32) {
  ds.validate();
  if (ds.frame_count() < 2) throw DataError("sequence " + ds.id + ": inference needs at least 2 frames");
  if (chunk == 0) throw std::invalid_argument("infer_trajectory: chunk must be >= 1");
  NoGradGuard guard;
  PairCache cache(ds, model.mean_rgb, model.image_height, model.image_width);
  RnnState state = RnnState::zeros(model.hidden);
  std::vector<Pose6> rel;
  const std::size_t pairs = ds.frame_count() - 1;
  for (std::size_t s = 0; s < pairs; s += chunk) {
    std::vector<Tensor> batch;
    for (std::size_t k = s; k < std::min(pairs, s + chunk); ++k) batch.push_back(cache.pair(k));
    auto out = model_forward(model, stack_pairs(batch), state);
    state = std::move(out.state);
    for (const auto& p : to_poses(out.poses)) rel.push_back(p);
  }
  return {compose_trajectory(rel, PoseSE3::identity()), ds.frame_rate};
}

// ---------------------------------------------------------------------------
// Output

inline void export_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  if (traj.poses.empty()) throw std::invalid_argument("export_trajectory: empty trajectory");
  write_pose_file(path, traj.poses);
}

/// Ground-plane (x, z) paths, equal axis scales.
inline std::string trajectory_svg(const std::vector<std::pair<std::string, Trajectory>>& trajs,
                                  const std::string& title = "Trajectory") {
  std::vector<svg::Series> series;
  for (const auto& [label, t] : trajs) {
    svg::Series s{label, {}};
    for (const auto& p : t.poses) s.points.emplace_back(p.t.x(), p.t.z());
    series.push_back(std::move(s));
  }
  svg::PlotOptions opt;
  opt.title = title;
  opt.x_label = "x (m)";
  opt.y_label = "z (m)";
  opt.equal_aspect = true;
  return svg::render(series, opt);
}

inline void emit_trajectory_plot(const std::vector<std::pair<std::string, Trajectory>>& trajs,
                                 const std::filesystem::path& path, const std::string& title = "Trajectory") {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << trajectory_svg(trajs, title);
  if (!os) throw DataError("failed writing " + path.string());
}

/// `<key>,t_rel,r_rel` with t_rel as a fraction and r_rel in rad/m.
inline std::string format_drift_table(const std::map<double, DriftStat>& table, const std::string& key) {
  std::string out = key + ",t_rel,r_rel\n";
  char buf[128];
  for (const auto& [k, s] : table) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", k, s.t_rel, s.r_rel);
    out += buf;
  }
  return out;
}

/// Reads a table written by format_drift_table (counts are not stored).
inline std::map<double, DriftStat> parse_drift_table(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != key + ",t_rel,r_rel") throw DataError("drift table: bad header");
  std::map<double, DriftStat> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    double k = 0;
    DriftStat s;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf%c", &k, &s.t_rel, &s.r_rel, &tail) != 3) {
      throw DataError("drift table line " + std::to_string(line_no) + ": malformed row");
    }
    out[k] = s;
  }
  return out;
}

struct SequenceResult {
  std::string id;
  SequenceSummary summary;
  double path_length = 0.0;     // m, along ground truth
  double endpoint_error = 0.0;  // m, final position
};

inline SequenceResult summarize_sequence(const std::string& id, const Trajectory& gt, const Trajectory& est,
                                         const EvalReport& report) {
  SequenceResult r;
  r.id = id;
  r.summary = report.per_sequence;
  r.path_length = cumulative_distances(gt).back();
  r.endpoint_error = (gt.poses.back().t - est.poses.back().t).norm();
  return r;
}

/// Table with one row per sequence and a mean row over those that have
/// subsequences.
inline std::string format_summary(const std::vector<SequenceResult>& results) {
  std::string out = "sequence  t_rel(%)  r_rel(deg/100m)  subsequences  path_length(m)  endpoint_error(m)  endpoint_error(%)\n";
  char buf[256];
  double t = 0, r = 0;
  std::size_t n = 0;
  for (const auto& s : results) {
    const double ep = s.path_length > 0 ? 100.0 * s.endpoint_error / s.path_length : 0.0;
    std::snprintf(buf, sizeof(buf), "%-8s  %8.4f  %15.4f  %12zu  %14.4f  %17.6f  %17.4f\n", s.id.c_str(),
                  s.summary.t_rel_percent, s.summary.r_rel_deg_per_100m, s.summary.subsequences, s.path_length,
                  s.endpoint_error, ep);
    out += buf;
    if (s.summary.subsequences > 0) t += s.summary.t_rel_percent, r += s.summary.r_rel_deg_per_100m, ++n;
  }
  if (n > 0) {
    std::snprintf(buf, sizeof(buf), "%-8s  %8.4f  %15.4f\n", "mean", t / static_cast<double>(n),
                  r / static_cast<double>(n));
    out += buf;
  }
  return out;
}

}  // namespace rcnn_vo
