// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file cli.hpp
 * @brief The train, infer, eval and synth subcommands.
 *
 * Each subcommand writes into its own run directory
 * <output_dir>/<run_label>-<subcommand>-<config hash> and prints that path on
 * the first line of its standard output. Exit codes: 0 success, 1 usage or
 * configuration error, 2 data error, 3 numeric failure.
 */

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include "rcnn_vo/config.hpp"
#include "rcnn_vo/evaluation.hpp"
#include "rcnn_vo/kitti_io.hpp"
#include "rcnn_vo/network.hpp"
#include "rcnn_vo/synth.hpp"
#include "rcnn_vo/training.hpp"

namespace rcnn_vo::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

inline constexpr const char* kCheckpointName = "model.ckpt";
inline constexpr const char* kLossTableName = "loss.csv";

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::filesystem::path make_run_dir(const RunConfig& cfg, const std::string& sub, std::ostream& out) {
  const auto dir = run_directory(cfg, sub);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!std::filesystem::is_directory(dir)) throw DataError("cannot create run directory " + dir.string());
  write_text(dir / "config.txt", canonical_config(cfg));
  out << dir.string() << "\n";
  return dir;
}

inline SequenceDataset load_sequence(const RunConfig& cfg, const std::string& id, bool require_poses,
                                     std::ostream& err) {
  std::vector<std::string> warnings;
  auto ds = load_kitti_sequence(cfg.dataset_root, id, cfg.camera_dir, require_poses, &warnings,
                                cfg.layout == "flat" ? Layout::kFlat : Layout::kKitti);
  ds.frame_rate = cfg.frame_rate;
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  return ds;
}

inline std::filesystem::path ground_truth_path(const RunConfig& cfg, const std::string& id) {
  const std::filesystem::path dir =
      cfg.ground_truth_dir.empty() ? std::filesystem::path(cfg.dataset_root) / "poses" : std::filesystem::path(cfg.ground_truth_dir);
  return dir / (id + ".txt");
}

}  // namespace detail

inline void cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  validate_config(cfg);
  if (cfg.train_sequences.empty()) throw ConfigError("train_sequences is empty");
  std::vector<SequenceDataset> train_ds, val_ds;
  for (const auto& id : cfg.train_sequences) train_ds.push_back(detail::load_sequence(cfg, id, true, err));
  for (const auto& id : cfg.validation_sequences) val_ds.push_back(detail::load_sequence(cfg, id, true, err));

  const MeanRgb mean = compute_mean_rgb(std::span<const SequenceDataset>(train_ds));
  const Rng root(cfg.train.seed);
  VoModel model = build_model(cfg.image_height, cfg.image_width, cfg.hidden, root.split("init"),
                              cfg.init == "zero" ? InitScheme::kZero : InitScheme::kRandom);
  model.mean_rgb = mean;

  Rng seg_rng = root.split("segments");
  auto cut = [&](const std::vector<SequenceDataset>& sets) {
    std::vector<Segment> segs;
    for (const auto& ds : sets) {
      for (auto& s : segment_dataset(ds, cfg.segments, seg_rng, mean, cfg.image_height, cfg.image_width)) {
        segs.push_back(std::move(s));
      }
    }
    return segs;
  };
  std::vector<Segment> train_segs = cut(train_ds);
  std::vector<Segment> val_segs;
  if (train_segs.empty()) throw DataError("training sequences yield no segments");
  if (!cfg.validation_sequences.empty()) {
    val_segs = cut(val_ds);
    if (val_segs.empty()) throw DataError("validation sequences yield no segments");
  } else {
    std::tie(train_segs, val_segs) = split_validation(std::move(train_segs), cfg.train.validation_fraction);
  }

  const auto dir = detail::make_run_dir(cfg, "train", out);
  err << "training on " << train_segs.size() << " segments, validating on " << val_segs.size() << ", "
      << model.parameter_count() << " parameters\n";
  TrainHooks hooks;
  hooks.on_epoch_end = [&](const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "epoch %zu  train %.6g  val %.6g  %.2fs\n", r.epoch, r.train_loss, r.val_loss,
                  r.seconds);
    err << buf << std::flush;
  };
  TrainResult result = train(model, train_segs, val_segs, cfg.train, hooks);
  if (!cfg.log_wall_time) {
    for (auto& r : result.log.epochs) r.seconds = 0.0;
  }
  save_checkpoint(dir / kCheckpointName, result.best, {cfg.train.kappa, cfg.train.seed});
  if (result.log.epochs.empty()) {
    detail::write_text(dir / kLossTableName, format_loss_table(result.log));
  } else {
    emit_loss_curves(result.log, dir / kLossTableName);
  }
  err << "best epoch " << result.log.best_epoch << (result.log.stopped_early ? " (stopped early)" : "") << "\n";
}

inline void cmd_infer(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  validate_config(cfg);
  if (cfg.checkpoint.empty()) throw ConfigError("infer needs 'checkpoint'");
  if (cfg.targets().empty()) throw ConfigError("no sequences to infer (target_sequences / test_sequences)");
  const auto ckpt = load_checkpoint(cfg.checkpoint);
  if (ckpt.model.image_height != cfg.image_height || ckpt.model.image_width != cfg.image_width) {
    throw ConfigError("checkpoint expects " + std::to_string(ckpt.model.image_height) + "x" +
                      std::to_string(ckpt.model.image_width) + " images, config has " +
                      std::to_string(cfg.image_height) + "x" + std::to_string(cfg.image_width));
  }
  std::vector<SequenceDataset> seqs;
  for (const auto& id : cfg.targets()) seqs.push_back(detail::load_sequence(cfg, id, false, err));
  const auto dir = detail::make_run_dir(cfg, "infer", out);
  for (const auto& ds : seqs) {
    const Trajectory traj = infer_trajectory(ckpt.model, ds, cfg.infer_chunk);
    export_trajectory(traj, dir / (ds.id + ".txt"));
    err << "sequence " << ds.id << ": " << traj.size() << " poses\n";
  }
}

inline void cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  validate_config(cfg);
  if (cfg.estimates_dir.empty()) throw ConfigError("eval needs 'estimates_dir'");
  if (cfg.targets().empty()) throw ConfigError("no sequences to evaluate (target_sequences / test_sequences)");
  struct Loaded {
    std::string id;
    Trajectory gt, est;
  };
  std::vector<Loaded> loaded;
  for (const auto& id : cfg.targets()) {
    std::vector<std::string> warnings;
    Loaded l{id, {load_pose_file(detail::ground_truth_path(cfg, id), &warnings), cfg.frame_rate},
             {load_pose_file(std::filesystem::path(cfg.estimates_dir) / (id + ".txt"), &warnings), cfg.frame_rate}};
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    if (l.gt.size() != l.est.size()) {
      throw DataError("sequence " + id + ": estimate has " + std::to_string(l.est.size()) +
                      " poses, ground truth has " + std::to_string(l.gt.size()));
    }
    loaded.push_back(std::move(l));
  }

  const auto dir = detail::make_run_dir(cfg, "eval", out);
  std::vector<ErrorRow> pooled;
  std::vector<SequenceResult> results;
  for (const auto& l : loaded) {
    const auto rows = segment_errors(l.gt, l.est, cfg.eval_lengths, cfg.eval_start_stride);
    const EvalReport rep = aggregate(rows, cfg.speed_bin_width);
    detail::write_text(dir / (l.id + "_length.csv"), format_drift_table(rep.per_length, "length"));
    detail::write_text(dir / (l.id + "_speed.csv"), format_drift_table(rep.per_speed, "speed"));
    emit_trajectory_plot({{"ground truth", l.gt}, {"estimate", l.est}}, dir / (l.id + "_trajectory.svg"),
                         "Sequence " + l.id);
    results.push_back(summarize_sequence(l.id, l.gt, l.est, rep));
    pooled.insert(pooled.end(), rows.begin(), rows.end());
  }
  const EvalReport all = aggregate(pooled, cfg.speed_bin_width);
  detail::write_text(dir / "length.csv", format_drift_table(all.per_length, "length"));
  detail::write_text(dir / "speed.csv", format_drift_table(all.per_speed, "speed"));
  const std::string summary = format_summary(results);
  detail::write_text(dir / "summary.txt", summary);
  out << summary;
}

inline void cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  validate_config(cfg);
  if (cfg.synth_sequences.empty()) throw ConfigError("synth_sequences is empty");
  synth::SceneConfig scene;
  scene.height = cfg.image_height;
  scene.width = cfg.image_width;
  scene.texture_seed = cfg.synth_texture_seed;
  std::vector<std::pair<std::string, synth::MotionConfig>> plan;
  for (const auto& entry : cfg.synth_sequences) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos || colon == 0) {
      throw ConfigError("synth_sequences entry '" + entry + "' is not <id>:<profile>");
    }
    synth::MotionConfig m;
    try {
      m.profile = synth::parse_profile(entry.substr(colon + 1));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    m.frames = cfg.synth_frames;
    m.step = cfg.synth_step;
    m.yaw_rate = cfg.synth_yaw_rate;
    m.period = cfg.synth_period;
    plan.emplace_back(entry.substr(0, colon), m);
  }
  if (cfg.synth_frames < 2) throw ConfigError("synth_frames must be >= 2");
  const auto dir = detail::make_run_dir(cfg, "synth", out);
  for (const auto& [id, m] : plan) {
    synth::write_kitti_sequence(dir, synth::make_sequence(id, scene, m, cfg.frame_rate));
    err << "sequence " << id << ": " << m.frames << " frames, " << synth::profile_name(m.profile) << "\n";
  }
}

/// Runs one subcommand and maps failures to exit codes; messages go to `err`
/// as a single line.
inline int run(const std::string& subcommand, const std::filesystem::path& config_path,
               const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig cfg = load_config(config_path, overrides);
    if (subcommand == "train") cmd_train(cfg, out, err);
    else if (subcommand == "infer") cmd_infer(cfg, out, err);
    else if (subcommand == "eval") cmd_eval(cfg, out, err);
    else if (subcommand == "synth") cmd_synth(cfg, out, err);
    else throw ConfigError("unknown subcommand '" + subcommand + "'");
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace rcnn_vo::cli
