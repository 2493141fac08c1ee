// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file training.hpp
 * @brief Pose loss, Adagrad, the epoch loop with early stopping, loss curves.
 *
 * One optimization step processes one segment. Per epoch the training
 * segments are shuffled with a seeded stream, each is run forward with
 * dropout, its pose loss is back-propagated, gradients are clipped by global
 * norm and Adagrad updates the parameters. After the epoch both the training
 * and the validation loss are measured with dropout off, and the model with
 * the lowest validation loss so far is kept.
 */

#pragma once

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "rcnn_vo/geometry.hpp"
#include "rcnn_vo/kitti_io.hpp"
#include "rcnn_vo/network.hpp"
#include "rcnn_vo/ops.hpp"
#include "rcnn_vo/rng.hpp"
#include "rcnn_vo/svg.hpp"
#include "rcnn_vo/tensor.hpp"

namespace rcnn_vo {

/// Raised when a loss or gradient stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double kappa = 100.0;
  double learning_rate = 0.001;
  std::size_t max_epochs = 200;
  double dropout_rate = 0.5;
  double adagrad_epsilon = 1e-8;
  std::size_t early_stop_patience = 10;  // 0 disables early stopping
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables clipping

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(kappa, "kappa");
    positive(learning_rate, "learning_rate");
    positive(adagrad_epsilon, "adagrad_epsilon");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must be in [0, 1)");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw std::invalid_argument("validation_fraction must be in (0, 1)");
    }
    if (!std::isfinite(grad_clip)) throw std::invalid_argument("grad_clip must be finite");
  }
};

// ---------------------------------------------------------------------------
// Loss

/// Per-coordinate weights of a pose row: 1 for position, kappa for angles.
inline std::array<double, kPoseDim> pose_weights(double kappa) { return {1, 1, 1, kappa, kappa, kappa}; }

inline Tensor poses_tensor(std::span<const Pose6> poses) {
  std::vector<double> v;
  v.reserve(poses.size() * kPoseDim);
  for (const auto& q : poses) v.insert(v.end(), {q.p.x(), q.p.y(), q.p.z(), q.phi.x(), q.phi.y(), q.phi.z()});
  return Tensor::from({poses.size(), kPoseDim}, std::move(v));
}

/// Sum over steps of |p_hat - p|^2 + kappa |phi_hat - phi|^2 for one segment.
/// `estimates` is [T,6] (translation then Euler angles).
inline Tensor pose_loss(const Tensor& estimates, std::span<const Pose6> targets, double kappa) {
  if (estimates.rank() != 2 || estimates.dim(1) != kPoseDim) {
    throw std::invalid_argument("pose_loss: estimates must be [T,6], got " + shape_str(estimates.shape()));
  }
  if (targets.empty() || estimates.dim(0) != targets.size()) {
    throw std::invalid_argument("pose_loss: " + std::to_string(estimates.dim(0)) + " estimates for " +
                                std::to_string(targets.size()) + " targets");
  }
  const auto w = pose_weights(kappa);
  const auto x = estimates.data();
  std::vector<double> diff(x.size());
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const double y[kPoseDim] = {targets[t].p.x(),   targets[t].p.y(),   targets[t].p.z(),
                                targets[t].phi.x(), targets[t].phi.y(), targets[t].phi.z()};
    for (std::size_t j = 0; j < kPoseDim; ++j) {
      const double d = x[t * kPoseDim + j] - y[j];
      diff[t * kPoseDim + j] = d;
      loss += w[j] * d * d;
    }
  }
  return detail::make_result({1}, {loss}, {estimates.node_ptr()}, [diff = std::move(diff), w](detail::Node& self) {
    const double g = self.grad[0];
    auto gx = detail::grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < diff.size(); ++i) gx[i] += 2.0 * w[i % kPoseDim] * diff[i] * g;
  });
}

inline double pose_loss(std::span<const Pose6> estimates, std::span<const Pose6> targets, double kappa) {
  if (estimates.size() != targets.size()) {
    throw std::invalid_argument("pose_loss: " + std::to_string(estimates.size()) + " estimates for " +
                                std::to_string(targets.size()) + " targets");
  }
  return pose_loss(poses_tensor(estimates), targets, kappa).item();
}

/// Mean of the per-segment losses over a batch of N segments.
inline Tensor pose_loss_batch(std::span<const Tensor> estimates, std::span<const std::vector<Pose6>> targets,
                              double kappa) {
  if (estimates.empty() || estimates.size() != targets.size()) {
    throw std::invalid_argument("pose_loss_batch: " + std::to_string(estimates.size()) + " estimates for " +
                                std::to_string(targets.size()) + " target sequences");
  }
  Tensor total = pose_loss(estimates[0], targets[0], kappa);
  for (std::size_t i = 1; i < estimates.size(); ++i) total = add(total, pose_loss(estimates[i], targets[i], kappa));
  return scale(total, 1.0 / static_cast<double>(estimates.size()));
}

// ---------------------------------------------------------------------------
// Adagrad

struct AdagradState {
  std::vector<std::vector<double>> accum;  // one per parameter, same order
};

/// G += g*g; theta -= lr * g / (sqrt(G) + eps), elementwise, with g the
/// gradient times `grad_scale` (used to apply norm clipping in the same pass).
inline void adagrad_update(std::span<double> theta, std::span<const double> g, std::span<double> G, double lr,
                           double eps, double grad_scale = 1.0) {
  if (theta.size() != g.size() || theta.size() != G.size()) {
    throw std::invalid_argument("adagrad_update: sizes " + std::to_string(theta.size()) + ", " +
                                std::to_string(g.size()) + ", " + std::to_string(G.size()) + " differ");
  }
  const auto n = static_cast<Eigen::Index>(theta.size());
  Eigen::Map<Eigen::ArrayXd> th(theta.data(), n), acc(G.data(), n);
  const Eigen::Map<const Eigen::ArrayXd> raw(g.data(), n);
  if (grad_scale == 1.0) {
    acc += raw.square();
    th -= lr * raw / (acc.sqrt() + eps);
  } else {
    acc += (grad_scale * raw).square();
    th -= lr * (grad_scale * raw) / (acc.sqrt() + eps);
  }
}

/// Applies one Adagrad update to every parameter from its accumulated grad.
/// Parameters without a gradient count as g = 0.
inline void adagrad_step(std::span<Tensor> params, AdagradState& state, double lr, double eps,
                         double grad_scale = 1.0) {
  if (state.accum.empty()) {
    for (const auto& p : params) state.accum.emplace_back(p.numel(), 0.0);
  }
  if (state.accum.size() != params.size()) {
    throw std::invalid_argument("adagrad_step: state holds " + std::to_string(state.accum.size()) +
                                " accumulators for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.accum[k].size() != params[k].numel()) {
      throw std::invalid_argument("adagrad_step: accumulator " + std::to_string(k) + " has " +
                                  std::to_string(state.accum[k].size()) + " entries for parameter " +
                                  shape_str(params[k].shape()));
    }
    if (!params[k].has_grad()) continue;
    adagrad_update(params[k].mutable_data(), params[k].grad(), state.accum[k], lr, eps, grad_scale);
  }
}

inline double global_grad_norm(std::span<const Tensor> params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

/// Factor that brings a gradient of global L2 norm `norm` down to at most
/// `max_norm` (1 when no clipping is needed or max_norm <= 0).
inline double clip_factor(double norm, double max_norm) {
  return max_norm > 0.0 && norm > max_norm ? max_norm / norm : 1.0;
}

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // epoch with the minimum validation loss
  bool stopped_early = false;
};

struct TrainHooks {
  /// Replaces the measured validation loss, e.g. to inject a known curve.
  std::function<double(std::size_t epoch, double measured)> validation_probe;
  std::function<void(const EpochRecord&)> on_epoch_end;
};

struct TrainResult {
  VoModel best;  // parameters at best_epoch
  TrainLog log;
};

inline std::string segment_label(const SegmentSource& s) {
  return s.sequence_id + ":" + std::to_string(s.start) + "+" + std::to_string(s.length);
}

/// Holds the validation split off the end of the segment list (which is in
/// source order), so validation frames never interleave training frames.
/// n_val = round(fraction * N), at most N - 1. When that is zero the training
/// segments double as the validation set.
inline std::pair<std::vector<Segment>, std::vector<Segment>> split_validation(std::vector<Segment> segments,
                                                                              double fraction) {
  if (segments.empty()) throw std::invalid_argument("split_validation: no segments");
  const std::size_t n = segments.size();
  std::size_t n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  n_val = std::min(n_val, n - 1);
  std::vector<Segment> val(segments.end() - static_cast<std::ptrdiff_t>(n_val), segments.end());
  segments.resize(n - n_val);
  if (val.empty()) val = segments;
  return {std::move(segments), std::move(val)};
}

namespace detail {

struct PreparedSegment {
  Tensor pairs;              // [T,6,H,W]
  std::vector<Tensor> pair_list;  // the same pairs, shared between segments
  std::vector<Pose6> targets;
  SegmentSource source;
};

inline std::vector<PreparedSegment> prepare(const std::vector<Segment>& segments) {
  std::vector<PreparedSegment> out;
  for (const auto& s : segments) {
    if (s.pair_tensors.empty() || s.pair_tensors.size() != s.targets.size()) {
      throw std::invalid_argument("segment " + segment_label(s.source) + " has " +
                                  std::to_string(s.pair_tensors.size()) + " pairs for " +
                                  std::to_string(s.targets.size()) + " targets");
    }
    out.push_back({stack_pairs(s.pair_tensors), s.pair_tensors, s.targets, s.source});
  }
  return out;
}

inline double check_finite_loss(double loss, std::size_t epoch, const SegmentSource& src, const char* phase) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("non-finite ") + phase + " loss at epoch " + std::to_string(epoch) +
                       ", segment " + segment_label(src));
  }
  return loss;
}

}  // namespace detail

/// Mean per-segment pose loss with dropout off. Encoder features are
/// computed once per distinct pair, since overlapping segments share pairs.
inline double evaluate_loss(const VoModel& model, std::span<const detail::PreparedSegment> segments, double kappa) {
  NoGradGuard guard;
  std::unordered_map<const detail::Node*, std::size_t> index;
  std::vector<Tensor> unique;
  for (const auto& s : segments) {
    for (const auto& p : s.pair_list) {
      if (index.emplace(p.node_ptr().get(), unique.size()).second) unique.push_back(p);
    }
  }
  constexpr std::size_t kChunk = 16;
  const std::size_t F = model.feature_size();
  Buffer feats(unique.size() * F);
  for (std::size_t b = 0; b < unique.size(); b += kChunk) {
    const std::size_t n = std::min(kChunk, unique.size() - b);
    const Tensor f = cnn_forward(model, stack_pairs(std::span<const Tensor>(unique.data() + b, n)));
    std::copy(f.data().begin(), f.data().end(), feats.begin() + static_cast<std::ptrdiff_t>(b * F));
  }
  Rng unused(0);
  double total = 0.0;
  for (const auto& s : segments) {
    Buffer x;
    x.reserve(s.pair_list.size() * F);
    for (const auto& p : s.pair_list) {
      const auto at = feats.begin() + static_cast<std::ptrdiff_t>(index.at(p.node_ptr().get()) * F);
      x.insert(x.end(), at, at + static_cast<std::ptrdiff_t>(F));
    }
    const Tensor features = Tensor::from({s.pair_list.size(), F}, std::move(x));
    const auto out = rnn_forward(model, features, RnnState::zeros(model.hidden), 0.0, false, unused);
    total += pose_loss(out.poses, s.targets, kappa).item();
  }
  return total / static_cast<double>(segments.size());
}

inline double evaluate_loss(const VoModel& model, const std::vector<Segment>& segments, double kappa) {
  if (segments.empty()) throw std::invalid_argument("evaluate_loss: no segments");
  return evaluate_loss(model, detail::prepare(segments), kappa);
}

/// Trains a copy of `initial` and returns the parameters of the epoch with
/// the lowest validation loss together with the per-epoch log.
inline TrainResult train(const VoModel& initial, const std::vector<Segment>& train_segments,
                         const std::vector<Segment>& val_segments, const TrainConfig& config,
                         const TrainHooks& hooks = {}) {
  config.validate();
  if (train_segments.empty()) throw std::invalid_argument("train: empty training set");
  if (val_segments.empty()) throw std::invalid_argument("train: empty validation set");

  const auto train_set = detail::prepare(train_segments);
  const auto val_set = detail::prepare(val_segments);

  VoModel model = initial.clone();
  auto named = model.parameters();
  std::vector<Tensor> params;
  for (auto& [name, t] : named) params.push_back(t);

  const Rng root(config.seed);
  Rng shuffle_rng = root.split("shuffle");
  Rng dropout_rng = root.split("dropout");
  AdagradState adagrad;

  TrainResult result;
  result.best = model.clone();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    for (std::size_t idx : order) {
      const auto& seg = train_set[idx];
      model.zero_grad();
      ForwardOptions opts{config.dropout_rate, true, &dropout_rng};
      Tensor loss = pose_loss(model_forward(model, seg.pairs, opts), seg.targets, config.kappa);
      detail::check_finite_loss(loss.item(), epoch, seg.source, "training");
      backward(loss);
      const double norm = global_grad_norm(params);
      if (!std::isfinite(norm)) {
        throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + ", segment " +
                           segment_label(seg.source));
      }
      adagrad_step(params, adagrad, config.learning_rate, config.adagrad_epsilon,
                   clip_factor(norm, config.grad_clip));
    }
    model.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = evaluate_loss(model, train_set, config.kappa);
    detail::check_finite_loss(rec.train_loss, epoch, train_set.front().source, "training");
    rec.val_loss = evaluate_loss(model, val_set, config.kappa);
    if (hooks.validation_probe) rec.val_loss = hooks.validation_probe(epoch, rec.val_loss);
    detail::check_finite_loss(rec.val_loss, epoch, val_set.front().source, "validation");
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(rec);
    if (hooks.on_epoch_end) hooks.on_epoch_end(rec);

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.log.best_epoch = epoch;
      result.best = model.clone();
      since_best = 0;
    } else if (config.early_stop_patience > 0 && ++since_best >= config.early_stop_patience) {
      result.log.stopped_early = true;
      break;
    }
  }
  return result;
}

/// Splits `segments` per config.validation_fraction, then trains.
inline TrainResult train(const VoModel& initial, const std::vector<Segment>& segments, const TrainConfig& config,
                         const TrainHooks& hooks = {}) {
  config.validate();
  auto [tr, val] = split_validation(segments, config.validation_fraction);
  return train(initial, tr, val, config, hooks);
}

// ---------------------------------------------------------------------------
// Loss table and curves

inline constexpr const char* kLossTableHeader = "epoch,train_loss,val_loss,seconds";

inline std::string format_loss_table(const TrainLog& log) {
  std::string out = std::string(kLossTableHeader) + "\n";
  char buf[128];
  for (const auto& r : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss, r.seconds);
    out += buf;
  }
  return out;
}

inline TrainLog parse_loss_table(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kLossTableHeader) throw DataError("loss table: bad header");
  TrainLog log;
  double best = std::numeric_limits<double>::infinity();
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    EpochRecord r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf%c", &r.epoch, &r.train_loss, &r.val_loss, &r.seconds, &tail) != 4) {
      throw DataError("loss table line " + std::to_string(line_no) + ": malformed row");
    }
    if (r.val_loss < best) best = r.val_loss, log.best_epoch = r.epoch;
    log.epochs.push_back(r);
  }
  return log;
}

/// Writes `<path>` (the per-epoch table) and `<path>` with extension .svg
/// (training and validation curves on a log scale when all losses are
/// positive).
inline void emit_loss_curves(const TrainLog& log, const std::filesystem::path& path) {
  if (log.epochs.empty()) throw std::invalid_argument("emit_loss_curves: empty log");
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    os << format_loss_table(log);
    if (!os) throw DataError("failed writing " + path.string());
  }
  svg::Series tr{"training", {}}, val{"validation", {}};
  bool positive = true;
  for (const auto& r : log.epochs) {
    tr.points.emplace_back(static_cast<double>(r.epoch), r.train_loss);
    val.points.emplace_back(static_cast<double>(r.epoch), r.val_loss);
    positive = positive && r.train_loss > 0.0 && r.val_loss > 0.0;
  }
  svg::PlotOptions opt;
  opt.title = "Training and validation loss";
  opt.x_label = "epoch";
  opt.y_label = positive ? "loss (log10)" : "loss";
  opt.log_y = positive;
  auto svg_path = path;
  svg_path.replace_extension(".svg");
  std::ofstream os(svg_path, std::ios::binary);
  if (!os) throw DataError("cannot write " + svg_path.string());
  os << svg::render({tr, val}, opt);
  if (!os) throw DataError("failed writing " + svg_path.string());
}

}  // namespace rcnn_vo
