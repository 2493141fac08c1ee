// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file config.hpp
 * @brief Run configuration: `key = value` files, overrides, canonical text.
 *
 * Every key has a default; a file or `--set key=value` only changes the keys
 * it names. Unknown keys and repeated keys within one file are errors. Lists
 * are comma-separated. The canonical text (all keys, sorted, with normalized
 * values) identifies a run and names its output directory.
 */

#pragma once

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcnn_vo/evaluation.hpp"
#include "rcnn_vo/kitti_io.hpp"
#include "rcnn_vo/training.hpp"

namespace rcnn_vo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // Data
  std::string dataset_root = "data";
  std::string layout = "kitti";  // kitti | flat
  std::string camera_dir = "image_2";
  std::vector<std::string> train_sequences{"00", "02", "08", "09"};
  std::vector<std::string> validation_sequences;  // empty: split segments instead
  std::vector<std::string> test_sequences{"03", "04", "05", "06", "07", "10"};
  std::vector<std::string> target_sequences;  // infer/eval; empty: test_sequences
  double frame_rate = 10.0;
  std::size_t image_height = 384;
  std::size_t image_width = 1280;

  // Model
  std::size_t hidden = kDefaultHidden;
  std::string init = "random";  // random | zero

  // Training
  TrainConfig train;
  SegmentOptions segments;
  bool log_wall_time = false;

  // Inference and evaluation
  std::string checkpoint;
  std::size_t infer_chunk = 32;
  std::string estimates_dir;
  std::string ground_truth_dir;  // empty: <dataset_root>/poses
  std::vector<double> eval_lengths = default_eval_lengths();
  std::size_t eval_start_stride = 10;
  double speed_bin_width = 2.0;

  // Output
  std::string output_dir = "runs";
  std::string run_label = "run";

  const std::vector<std::string>& targets() const { return target_sequences.empty() ? test_sequences : target_sequences; }

  // Synthetic data: "<id>:<profile>" entries
  std::vector<std::string> synth_sequences{"00:straight", "01:turn"};
  std::size_t synth_frames = 24;
  double synth_step = 1.0;
  double synth_yaw_rate = 0.06;
  std::size_t synth_period = 12;
  std::uint64_t synth_texture_seed = 7;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto s = trim(text);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "' as a number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError("config key '" + key + "': value must be finite");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const auto s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

inline std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& v) { c.*member = parse_number<T>("", v); },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <typename T, typename S>
Field nested(S RunConfig::*outer, T S::*member) {
  return {[outer, member](RunConfig& c, const std::string& v) { (c.*outer).*member = parse_number<T>("", v); },
          [outer, member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double((c.*outer).*member);
            else return std::to_string((c.*outer).*member);
          }};
}

inline Field text(std::string RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& v) { c.*member = trim(v); },
          [member](const RunConfig& c) { return c.*member; }};
}

inline Field list(std::vector<std::string> RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& v) { c.*member = parse_list(v); },
          [member](const RunConfig& c) { return join(c.*member); }};
}

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = [] {
    std::map<std::string, Field> m;
    m["dataset_root"] = text(&RunConfig::dataset_root);
    m["layout"] = text(&RunConfig::layout);
    m["camera_dir"] = text(&RunConfig::camera_dir);
    m["train_sequences"] = list(&RunConfig::train_sequences);
    m["validation_sequences"] = list(&RunConfig::validation_sequences);
    m["test_sequences"] = list(&RunConfig::test_sequences);
    m["target_sequences"] = list(&RunConfig::target_sequences);
    m["frame_rate"] = number(&RunConfig::frame_rate);
    m["image_height"] = number(&RunConfig::image_height);
    m["image_width"] = number(&RunConfig::image_width);
    m["hidden"] = number(&RunConfig::hidden);
    m["init"] = text(&RunConfig::init);
    m["kappa"] = nested(&RunConfig::train, &TrainConfig::kappa);
    m["learning_rate"] = nested(&RunConfig::train, &TrainConfig::learning_rate);
    m["max_epochs"] = nested(&RunConfig::train, &TrainConfig::max_epochs);
    m["dropout_rate"] = nested(&RunConfig::train, &TrainConfig::dropout_rate);
    m["adagrad_epsilon"] = nested(&RunConfig::train, &TrainConfig::adagrad_epsilon);
    m["early_stop_patience"] = nested(&RunConfig::train, &TrainConfig::early_stop_patience);
    m["seed"] = nested(&RunConfig::train, &TrainConfig::seed);
    m["validation_fraction"] = nested(&RunConfig::train, &TrainConfig::validation_fraction);
    m["grad_clip"] = nested(&RunConfig::train, &TrainConfig::grad_clip);
    m["segment_min_len"] = nested(&RunConfig::segments, &SegmentOptions::min_len);
    m["segment_max_len"] = nested(&RunConfig::segments, &SegmentOptions::max_len);
    m["segment_stride"] = nested(&RunConfig::segments, &SegmentOptions::stride);
    m["log_wall_time"] = {[](RunConfig& c, const std::string& v) { c.log_wall_time = parse_bool("", v); },
                          [](const RunConfig& c) { return std::string(c.log_wall_time ? "true" : "false"); }};
    m["checkpoint"] = text(&RunConfig::checkpoint);
    m["infer_chunk"] = number(&RunConfig::infer_chunk);
    m["estimates_dir"] = text(&RunConfig::estimates_dir);
    m["ground_truth_dir"] = text(&RunConfig::ground_truth_dir);
    m["eval_lengths"] = {[](RunConfig& c, const std::string& v) {
                           c.eval_lengths.clear();
                           for (const auto& item : parse_list(v)) c.eval_lengths.push_back(parse_number<double>("", item));
                         },
                         [](const RunConfig& c) {
                           std::vector<std::string> s;
                           for (double L : c.eval_lengths) s.push_back(fmt_double(L));
                           return join(s);
                         }};
    m["eval_start_stride"] = number(&RunConfig::eval_start_stride);
    m["speed_bin_width"] = number(&RunConfig::speed_bin_width);
    m["output_dir"] = text(&RunConfig::output_dir);
    m["run_label"] = text(&RunConfig::run_label);
    m["synth_sequences"] = list(&RunConfig::synth_sequences);
    m["synth_frames"] = number(&RunConfig::synth_frames);
    m["synth_step"] = number(&RunConfig::synth_step);
    m["synth_yaw_rate"] = number(&RunConfig::synth_yaw_rate);
    m["synth_period"] = number(&RunConfig::synth_period);
    m["synth_texture_seed"] = number(&RunConfig::synth_texture_seed);
    return m;
  }();
  return f;
}

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : config_detail::fields()) keys.push_back(k);
  return keys;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& f = config_detail::fields();
  const auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  }
}

inline std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  const auto& f = config_detail::fields();
  const auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(cfg);
}

/// Applies `key = value` lines; '#' starts a comment.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = config_detail::trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  RunConfig cfg;
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, config_detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  return cfg;
}

/// Every key with its effective value, sorted by key.
inline std::string canonical_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : config_detail::fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// <output_dir>/<run_label>-<hash of subcommand and canonical config>.
inline std::filesystem::path run_directory(const RunConfig& cfg, const std::string& subcommand) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016" PRIx64, fnv1a64(subcommand + "\n" + canonical_config(cfg)));
  return std::filesystem::path(cfg.output_dir) / (cfg.run_label + "-" + subcommand + "-" + hex);
}

inline void validate_config(const RunConfig& cfg) {
  try {
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.layout != "kitti" && cfg.layout != "flat") throw ConfigError("layout must be kitti or flat");
  if (cfg.init != "random" && cfg.init != "zero") throw ConfigError("init must be random or zero");
  if (!is_multiple_of_64(cfg.image_height) || !is_multiple_of_64(cfg.image_width)) {
    throw ConfigError("image extents " + std::to_string(cfg.image_height) + "x" + std::to_string(cfg.image_width) +
                      " must be positive multiples of 64");
  }
  if (cfg.hidden == 0) throw ConfigError("hidden must be >= 1");
  if (cfg.segments.min_len < 1 || cfg.segments.min_len > cfg.segments.max_len || cfg.segments.stride < 1) {
    throw ConfigError("segments need 1 <= segment_min_len <= segment_max_len and segment_stride >= 1");
  }
  if (!(cfg.frame_rate > 0.0)) throw ConfigError("frame_rate must be positive");
  if (cfg.infer_chunk == 0) throw ConfigError("infer_chunk must be >= 1");
  if (cfg.eval_start_stride == 0) throw ConfigError("eval_start_stride must be >= 1");
  if (!(cfg.speed_bin_width > 0.0)) throw ConfigError("speed_bin_width must be positive");
  for (double L : cfg.eval_lengths) {
    if (!(L > 0.0)) throw ConfigError("eval_lengths must be positive");
  }
  std::set<std::string> train(cfg.train_sequences.begin(), cfg.train_sequences.end());
  train.insert(cfg.validation_sequences.begin(), cfg.validation_sequences.end());
  for (const auto& id : cfg.test_sequences) {
    if (train.count(id)) throw ConfigError("sequence " + id + " is in both the training and the test split");
  }
  if (cfg.run_label.empty() || cfg.run_label.find('/') != std::string::npos) {
    throw ConfigError("run_label must be a non-empty name without '/'");
  }
}

}  // namespace rcnn_vo
