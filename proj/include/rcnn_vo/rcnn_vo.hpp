// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#pragma once

#include "rcnn_vo/cli.hpp"
#include "rcnn_vo/config.hpp"
#include "rcnn_vo/evaluation.hpp"
#include "rcnn_vo/geometry.hpp"
#include "rcnn_vo/image.hpp"
#include "rcnn_vo/kitti_io.hpp"
#include "rcnn_vo/network.hpp"
#include "rcnn_vo/ops.hpp"
#include "rcnn_vo/rng.hpp"
#include "rcnn_vo/serialize.hpp"
#include "rcnn_vo/svg.hpp"
#include "rcnn_vo/synth.hpp"
#include "rcnn_vo/tensor.hpp"
#include "rcnn_vo/training.hpp"
