// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

// In-process driver for the subcommands.

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rcnn_vo/rcnn_vo.hpp"

namespace rcnn_vo::testing {

struct CliResult {
  int code = -1;
  std::string out, err;
  std::filesystem::path run_dir;  // first stdout line, when present
};

inline CliResult run_cli(const std::string& sub, const std::filesystem::path& config,
                         const std::vector<std::string>& overrides = {}) {
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(sub, config, overrides, out, err);
  r.out = out.str();
  r.err = err.str();
  const auto nl = r.out.find('\n');
  if (r.code == cli::kOk && nl != std::string::npos) r.run_dir = r.out.substr(0, nl);
  return r;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace rcnn_vo::testing
