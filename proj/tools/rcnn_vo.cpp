// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

// rcnn-vo <train|infer|eval|synth> --config <file> [--set key=value ...]

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rcnn_vo/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Recurrent convolutional monocular visual odometry"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> overrides;
  for (const char* name : {"train", "infer", "eval", "synth"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "key = value configuration file")->required();
    sub->add_option("--set", overrides, "override one key, key=value (repeatable)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rcnn_vo::cli::kUsage;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  return rcnn_vo::cli::run(sub, config, overrides, std::cout, std::cerr);
}
