// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "support/cli_runner.hpp"
#include "support/fixtures.hpp"

using namespace rcnn_vo;
using namespace rcnn_vo::testing;

namespace {

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  std::istringstream is(s);
  std::string line;
  while (std::getline(is, line)) n += !line.empty();
  return n;
}

// A workspace with a base config for 64x64 synthetic data.
struct Workspace {
  std::filesystem::path root, config;

  explicit Workspace(const std::string& name) : root(fresh_dir(name)), config(root / "base.cfg") {
    write_file(config,
               "# small synthetic setup\n"
               "image_height = 64\n"
               "image_width = 64\n"
               "hidden = 8\n"
               "output_dir = " + (root / "runs").string() + "\n"
               "train_sequences = 00, 01\n"
               "test_sequences = 02\n"
               "synth_sequences = 00:straight, 01:turn, 02:turn\n"
               "synth_frames = 9\n"
               "segment_min_len = 3\n"
               "segment_max_len = 4\n"
               "segment_stride = 2\n"
               "validation_fraction = 0.25\n");
  }

  std::filesystem::path synth() {
    const auto r = run_cli("synth", config);
    EXPECT_EQ(r.code, 0) << r.err;
    return r.run_dir;
  }
};

}  // namespace

TEST(Config, ParsesOverridesAndRejectsUnknownKeys) {
  const Workspace ws("cfg");
  const RunConfig cfg = load_config(ws.config, {"max_epochs=7", "kappa = 50", "train_sequences=04,05"});
  EXPECT_EQ(cfg.train.max_epochs, 7u);
  EXPECT_EQ(cfg.train.kappa, 50.0);
  EXPECT_EQ(cfg.train_sequences, (std::vector<std::string>{"04", "05"}));
  EXPECT_EQ(cfg.hidden, 8u);
  EXPECT_EQ(cfg.train.learning_rate, 0.001);

  EXPECT_THROW(load_config(ws.config, {"no_such_key=1"}), ConfigError);
  EXPECT_THROW(load_config(ws.config, {"max_epochs"}), ConfigError);
  EXPECT_THROW(load_config(ws.config, {"max_epochs=many"}), ConfigError);
  EXPECT_THROW(load_config(ws.root / "missing.cfg"), ConfigError);

  RunConfig c;
  try {
    apply_config_text(c, "kappa = 1\nbogus = 2\n", "f.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("f.cfg:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos) << e.what();
  }
  EXPECT_THROW(apply_config_text(c, "kappa = 1\nkappa = 2\n", "f"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "kappa\n", "f"), ConfigError);
}

TEST(Config, EveryKeyRoundTripsThroughCanonicalText) {
  RunConfig a;
  a.train.seed = 99;
  a.eval_lengths = {10, 20.5};
  a.validation_sequences = {"08"};
  RunConfig b;
  apply_config_text(b, canonical_config(a), "canon");
  EXPECT_EQ(canonical_config(b), canonical_config(a));
  for (const auto& k : config_keys()) EXPECT_EQ(get_config_value(b, k), get_config_value(a, k)) << k;
}

TEST(Config, RunDirectoryDependsOnConfigOnly) {
  RunConfig a, b;
  EXPECT_EQ(run_directory(a, "train"), run_directory(b, "train"));
  EXPECT_NE(run_directory(a, "train"), run_directory(a, "infer"));
  b.train.seed = 1;
  EXPECT_NE(run_directory(a, "train"), run_directory(b, "train"));
  EXPECT_EQ(run_directory(a, "eval").parent_path(), std::filesystem::path("runs"));
}

TEST(Config, ValidationErrors) {
  RunConfig c;
  c.image_height = 100;
  EXPECT_THROW(validate_config(c), ConfigError);
  c = RunConfig{};
  c.test_sequences = {"00"};
  EXPECT_THROW(validate_config(c), ConfigError);
  c = RunConfig{};
  c.train.dropout_rate = 1.0;
  EXPECT_THROW(validate_config(c), ConfigError);
  EXPECT_NO_THROW(validate_config(RunConfig{}));
}

TEST(Cli, UnknownSubcommandOrKeyIsUsageError) {
  Workspace ws("usage");
  EXPECT_EQ(run_cli("fly", ws.config).code, cli::kUsage);
  const auto r = run_cli("train", ws.config, {"wings=2"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("wings"), std::string::npos);
}

TEST(Cli, MissingPoseFileNamesPath) {
  Workspace ws("missingpose");
  const auto data = ws.synth();
  std::filesystem::remove(data / "poses" / "01.txt");
  const auto r = run_cli("train", ws.config, {"dataset_root=" + data.string(), "max_epochs=1"});
  EXPECT_EQ(r.code, cli::kData);
  EXPECT_NE(r.err.find((data / "poses" / "01.txt").string()), std::string::npos) << r.err;
}

TEST(Cli, TrainInferEvalLoop) {
  Workspace ws("loop");
  const auto data = ws.synth();
  ASSERT_TRUE(std::filesystem::exists(data / "sequences" / "02" / "image_2" / "000008.png"));
  const std::vector<std::string> base{"dataset_root=" + data.string(), "max_epochs=3", "early_stop_patience=0"};

  const auto t1 = run_cli("train", ws.config, base);
  ASSERT_EQ(t1.code, 0) << t1.err;
  const std::string table = read_file(t1.run_dir / "loss.csv");
  EXPECT_EQ(count_lines(table), 4u);  // header + 3 epochs
  EXPECT_EQ(parse_loss_table(table).epochs.size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(t1.run_dir / "loss.svg"));
  EXPECT_TRUE(std::filesystem::exists(t1.run_dir / "model.ckpt"));
  EXPECT_NE(t1.err.find("epoch 3"), std::string::npos);

  // Same config: same run directory, byte-identical outputs.
  std::filesystem::remove_all(t1.run_dir);
  const auto t2 = run_cli("train", ws.config, base);
  ASSERT_EQ(t2.code, 0) << t2.err;
  EXPECT_EQ(t2.run_dir, t1.run_dir);
  EXPECT_EQ(read_file(t2.run_dir / "loss.csv"), table);

  const std::string ckpt = (t2.run_dir / "model.ckpt").string();
  const auto inf = run_cli("infer", ws.config, {"dataset_root=" + data.string(), "checkpoint=" + ckpt});
  ASSERT_EQ(inf.code, 0) << inf.err;
  const auto est = load_pose_file(inf.run_dir / "02.txt");
  EXPECT_EQ(est.size(), 9u);
  EXPECT_LT(pose_distance(est.front(), PoseSE3::identity()), 1e-12);

  const auto ev = run_cli("eval", ws.config,
                          {"dataset_root=" + data.string(), "estimates_dir=" + inf.run_dir.string(), "eval_lengths=2,4"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_TRUE(std::filesystem::exists(ev.run_dir / "summary.txt"));
  EXPECT_TRUE(std::filesystem::exists(ev.run_dir / "02_length.csv"));
  EXPECT_TRUE(std::filesystem::exists(ev.run_dir / "02_trajectory.svg"));
  EXPECT_EQ(parse_drift_table(read_file(ev.run_dir / "length.csv"), "length").size(), 2u);
}

TEST(Cli, ZeroCheckpointInfersIdentityAndEvalOfTruthIsZero) {
  Workspace ws("zero");
  const auto data = ws.synth();
  Rng rng(50);
  const VoModel zero = build_model(64, 64, 8, rng, InitScheme::kZero);
  save_checkpoint(ws.root / "zero.ckpt", zero, {});
  const auto inf = run_cli("infer", ws.config,
                           {"dataset_root=" + data.string(), "checkpoint=" + (ws.root / "zero.ckpt").string(),
                            "target_sequences=00,01"});
  ASSERT_EQ(inf.code, 0) << inf.err;
  for (const auto* id : {"00", "01"}) {
    const auto est = load_pose_file(inf.run_dir / (std::string(id) + ".txt"));
    ASSERT_EQ(est.size(), 9u);
    for (const auto& p : est) EXPECT_EQ(pose_distance(p, PoseSE3::identity()), 0.0);
  }

  const auto ev = run_cli("eval", ws.config,
                          {"dataset_root=" + data.string(), "estimates_dir=" + (data / "poses").string(),
                           "target_sequences=00,01", "eval_lengths=1,2,3"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  for (const auto& [L, s] : parse_drift_table(read_file(ev.run_dir / "length.csv"), "length")) {
    EXPECT_EQ(s.t_rel, 0.0) << L;
    EXPECT_EQ(s.r_rel, 0.0) << L;
  }
}

TEST(Cli, ExtentMismatchNamesBoth) {
  Workspace ws("extent");
  const auto data = ws.synth();
  Rng rng(51);
  save_checkpoint(ws.root / "m.ckpt", build_model(64, 64, 4, rng), {});
  const auto r = run_cli("infer", ws.config,
                         {"dataset_root=" + data.string(), "checkpoint=" + (ws.root / "m.ckpt").string(),
                          "image_height=128", "image_width=192"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("64x64"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("128x192"), std::string::npos) << r.err;
}

TEST(Cli, EvalLengthMismatchNamesCounts) {
  Workspace ws("evalmismatch");
  const auto data = ws.synth();
  const auto est_dir = ws.root / "est";
  std::filesystem::create_directories(est_dir);
  write_pose_file(est_dir / "02.txt", std::vector<PoseSE3>(5));
  const auto r = run_cli("eval", ws.config, {"dataset_root=" + data.string(), "estimates_dir=" + est_dir.string()});
  EXPECT_EQ(r.code, cli::kData);
  EXPECT_NE(r.err.find("5 poses"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("9"), std::string::npos) << r.err;
}

TEST(Cli, SynthIsDeterministic) {
  Workspace ws("synthdet");
  const auto a = ws.synth();
  const std::string img = read_file(a / "sequences" / "01" / "image_2" / "000004.png");
  const std::string poses = read_file(a / "poses" / "01.txt");
  std::filesystem::remove_all(a);
  const auto b = ws.synth();
  EXPECT_EQ(a, b);
  EXPECT_EQ(read_file(b / "sequences" / "01" / "image_2" / "000004.png"), img);
  EXPECT_EQ(read_file(b / "poses" / "01.txt"), poses);
  EXPECT_EQ(run_cli("synth", ws.config, {"synth_sequences=00-straight"}).code, cli::kUsage);
}
