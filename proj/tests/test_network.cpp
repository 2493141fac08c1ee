// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "support/lstm_oracle.hpp"
#include "support/primitive_checks.hpp"

using namespace rcnn_vo;
using rcnn_vo::testing::random_tensor;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("rcnn_vo_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double d = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(Architecture, EncoderRowsMatchTheTable) {
  const auto& s = encoder_layer_specs();
  ASSERT_EQ(s.size(), 9u);
  const char* names[] = {"Conv1", "Conv2", "Conv3", "Conv3_1", "Conv4", "Conv4_1", "Conv5", "Conv5_1", "Conv6"};
  const std::size_t rf[] = {7, 5, 5, 3, 3, 3, 3, 3, 3};
  const std::size_t pad[] = {3, 2, 2, 1, 1, 1, 1, 1, 1};
  const std::size_t stride[] = {2, 2, 2, 1, 2, 1, 2, 1, 2};
  const std::size_t ch[] = {64, 128, 256, 256, 512, 512, 512, 512, 1024};
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(s[i].name, names[i]);
    EXPECT_EQ(s[i].receptive_field, rf[i]);
    EXPECT_EQ(s[i].padding, pad[i]);
    EXPECT_EQ(s[i].stride, stride[i]);
    EXPECT_EQ(s[i].out_channels, ch[i]);
    EXPECT_EQ(s[i].relu_after, i != 8);
  }
}

TEST(Architecture, BuiltModelFollowsSpecs) {
  const VoModel m = build_model(64, 64, 8, Rng(1));
  ASSERT_EQ(m.conv.size(), 9u);
  std::size_t in = kPairChannels;
  for (std::size_t i = 0; i < 9; ++i) {
    const auto& spec = encoder_layer_specs()[i];
    EXPECT_EQ(m.conv[i].spec, spec);
    EXPECT_EQ(m.conv[i].weight.shape(),
              (Shape{spec.out_channels, in, spec.receptive_field, spec.receptive_field}));
    EXPECT_EQ(m.conv[i].bias.shape(), (Shape{spec.out_channels}));
    in = spec.out_channels;
  }
  EXPECT_EQ(m.lstm1.input_size, 1024u);
  EXPECT_EQ(m.lstm2.input_size, 8u);
  EXPECT_EQ(m.head_w.shape(), (Shape{6, 8}));
}

TEST(Architecture, FeatureSizes) {
  EXPECT_EQ(build_model(384, 1280, 2, Rng(1)).feature_size(), 122880u);
  EXPECT_EQ(build_model(64, 64, 2, Rng(1)).feature_size(), 1024u);
}

TEST(Architecture, DefaultHiddenGateShapes) {
  const VoModel m = build_model(64, 64, kDefaultHidden, Rng(1));
  EXPECT_EQ(LstmParams::gate_block(m.lstm2.w_h, Gate::kInput).shape(), (Shape{1000, 1000}));
  EXPECT_EQ(LstmParams::gate_block(m.lstm1.w_x, Gate::kForget).shape(), (Shape{1000, 1024}));
  EXPECT_EQ(LstmParams::gate_block(m.lstm1.b, Gate::kOutput).shape(), (Shape{1000}));
}

TEST(Architecture, RejectsExtentsNotMultipleOf64) {
  EXPECT_THROW(build_model(100, 64, 4, Rng(1)), std::invalid_argument);
  EXPECT_THROW(build_model(64, 0, 4, Rng(1)), std::invalid_argument);
}

TEST(Architecture, IntermediateShapesHalveAtStridedLayers) {
  NoGradGuard guard;
  const VoModel m = build_model(128, 192, 2, Rng(1), InitScheme::kZero);
  Tensor x = Tensor::zeros({6, 128, 192});
  std::size_t h = 128, w = 192;
  for (const auto& layer : m.conv) {
    x = conv2d(x, layer.weight, layer.bias, layer.spec.stride, layer.spec.padding);
    if (layer.spec.stride == 2) h /= 2, w /= 2;
    EXPECT_EQ(x.shape(), (Shape{layer.spec.out_channels, h, w})) << layer.spec.name;
  }
  EXPECT_EQ(x.shape(), (Shape{1024, 2, 3}));
}

TEST(Initialization, ForgetBiasOneOthersZero) {
  const VoModel m = build_model(64, 64, 5, Rng(3));
  for (const auto* l : {&m.lstm1, &m.lstm2}) {
    for (std::size_t j = 0; j < 4 * 5; ++j) EXPECT_EQ(l->b[j], (j >= 5 && j < 10) ? 1.0 : 0.0);
  }
  for (const auto& c : m.conv) {
    for (double v : c.bias.data()) EXPECT_EQ(v, 0.0);
    const double bound = std::sqrt(3.0 / static_cast<double>(c.weight.numel() / c.weight.dim(0)));
    for (double v : c.weight.data()) EXPECT_LE(std::abs(v), bound);
  }
}

TEST(Initialization, EqualSeedsEqualParameters) {
  const VoModel a = build_model(64, 64, 6, Rng(12)), b = build_model(64, 64, 6, Rng(12));
  const VoModel c = build_model(64, 64, 6, Rng(13));
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(max_abs_diff(pa[i].second, pb[i].second), 0.0) << pa[i].first;
    any_diff = any_diff || max_abs_diff(pa[i].second, pc[i].second) > 0.0;
  }
  EXPECT_TRUE(any_diff);
}

TEST(CnnForward, Shapes) {
  NoGradGuard guard;
  const VoModel m = build_model(64, 64, 4, Rng(1));
  Rng rng(2);
  EXPECT_EQ(cnn_forward(m, random_tensor({6, 64, 64}, rng, false)).shape(), (Shape{1024}));
  EXPECT_EQ(cnn_forward(m, random_tensor({3, 6, 64, 64}, rng, false)).shape(), (Shape{3, 1024}));
}

TEST(CnnForward, ZeroInputZeroBiasGivesZero) {
  const VoModel m = build_model(64, 64, 4, Rng(1));
  const Tensor f = cnn_forward(m, Tensor::zeros({6, 64, 64}));
  for (double v : f.data()) EXPECT_EQ(v, 0.0);
}

TEST(CnnForward, RejectsWrongChannelCount) {
  const VoModel m = build_model(64, 64, 4, Rng(1));
  EXPECT_THROW(cnn_forward(m, Tensor::zeros({3, 64, 64})), std::invalid_argument);
  EXPECT_THROW(cnn_forward(m, Tensor::zeros({6, 128, 64})), std::invalid_argument);
}

TEST(Lstm, TaggedExamples) {
  using namespace rcnn_vo::testing;
  {
    ScalarLstmCase k = uniform_case(3, 2, 0.0, 0.0);
    k.x = {0.3, -1.0, 2.0};
    const auto [h, s] = lstm_step(to_params(k), Tensor::from({3}, k.x), LstmState::zeros(2));
    for (std::size_t r = 0; r < 2; ++r) {
      EXPECT_EQ(h[r], 0.0);
      EXPECT_EQ(s.c[r], 0.0);
    }
  }
  {
    ScalarLstmCase k = uniform_case(1, 1, 0.0, 0.0);
    const auto [h, s] = lstm_step(to_params(k), Tensor::from({1}, {0.0}),
                                  LstmState{Tensor::zeros({1}), Tensor::from({1}, {1.0})});
    EXPECT_NEAR(s.c[0], 0.5, 1e-12);
    EXPECT_NEAR(h[0], 0.5 * std::tanh(0.5), 1e-12);
    EXPECT_NEAR(h[0], 0.23105857, 1e-8);
  }
  {
    ScalarLstmCase k = uniform_case(1, 1, 1.0, 0.0);
    const auto [h, s] = lstm_step(to_params(k), Tensor::from({1}, {1.0}), LstmState::zeros(1));
    const double sig1 = 1.0 / (1.0 + std::exp(-1.0));
    const double c = sig1 * std::tanh(1.0);
    EXPECT_NEAR(s.c[0], c, 1e-12);
    EXPECT_NEAR(h[0], sig1 * std::tanh(c), 1e-12);
  }
}

TEST(Lstm, MatchesScalarOracleOnRandomCases) {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    const auto k = rcnn_vo::testing::random_case(rng);
    EXPECT_LT(rcnn_vo::testing::lstm_step_deviation(k), 1e-12) << "case " << i;
  }
}

TEST(Lstm, RejectsDimensionMismatch) {
  const LstmParams p = rcnn_vo::testing::to_params(rcnn_vo::testing::uniform_case(3, 2, 0.1, 0.0));
  EXPECT_THROW(lstm_step(p, Tensor::zeros({2}), LstmState::zeros(2)), std::invalid_argument);
  EXPECT_THROW(lstm_step(p, Tensor::zeros({3}), LstmState::zeros(3)), std::invalid_argument);
}

TEST(Lstm, LayerForwardEqualsStepwise) {
  Rng rng(5);
  const VoModel m = build_model(64, 64, 7, Rng(8));
  const Tensor inputs = random_tensor({4, 1024}, rng, false);
  LstmState s = LstmState::zeros(7);
  const Tensor seq = lstm_layer_forward(m.lstm1, inputs, s);
  LstmState t = LstmState::zeros(7);
  for (std::size_t k = 0; k < 4; ++k) {
    auto [h, next] = lstm_step(m.lstm1, row(inputs, k), t);
    t = next;
    for (std::size_t j = 0; j < 7; ++j) EXPECT_NEAR(seq[k * 7 + j], h[j], 1e-12);
  }
  EXPECT_LT(max_abs_diff(s.h, t.h), 1e-12);
  EXPECT_LT(max_abs_diff(s.c, t.c), 1e-12);
}

TEST(RnnForward, ZeroModelOutputsHeadBias) {
  const VoModel m = build_model(64, 64, 6, Rng(1), InitScheme::kZero);
  Rng rng(1);
  const auto out = rnn_forward(m, random_tensor({1, 1024}, rng, false), RnnState::zeros(6), 0.0, false, rng);
  EXPECT_EQ(out.poses.shape(), (Shape{1, 6}));
  for (double v : out.poses.data()) EXPECT_EQ(v, 0.0);
}

TEST(RnnForward, DeterministicWithDropout) {
  const VoModel m = build_model(64, 64, 6, Rng(1));
  Rng data(2);
  const Tensor f = random_tensor({3, 1024}, data, false);
  Rng a(10), b(10);
  const auto ya = rnn_forward(m, f, RnnState::zeros(6), 0.5, true, a);
  const auto yb = rnn_forward(m, f, RnnState::zeros(6), 0.5, true, b);
  EXPECT_EQ(max_abs_diff(ya.poses, yb.poses), 0.0);
}

TEST(RnnForward, SplitSequenceMatchesSingleCall) {
  const VoModel m = build_model(64, 64, 6, Rng(1));
  Rng data(2), unused(0);
  const Tensor f = random_tensor({4, 1024}, data, false);
  const auto whole = rnn_forward(m, f, RnnState::zeros(6), 0.5, false, unused);
  std::vector<double> a(f.data().begin(), f.data().begin() + 2048), b(f.data().begin() + 2048, f.data().end());
  const auto first = rnn_forward(m, Tensor::from({2, 1024}, a), RnnState::zeros(6), 0.5, false, unused);
  const auto second = rnn_forward(m, Tensor::from({2, 1024}, b), first.state, 0.5, false, unused);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_NEAR(whole.poses[i], first.poses[i], 1e-12);
    EXPECT_NEAR(whole.poses[12 + i], second.poses[i], 1e-12);
  }
}

TEST(ModelForward, ZeroModelSingleStep) {
  const VoModel m = build_model(64, 64, 5, Rng(1), InitScheme::kZero);
  Rng rng(4);
  const Tensor y = model_forward(m, random_tensor({1, 6, 64, 64}, rng, false));
  EXPECT_EQ(y.shape(), (Shape{1, 6}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ModelForward, OneEstimatePerPair) {
  const VoModel m = build_model(64, 64, 5, Rng(1));
  Rng rng(4);
  EXPECT_EQ(model_forward(m, random_tensor({5, 6, 64, 64}, rng, false)).shape(), (Shape{5, 6}));
}

TEST(ModelForward, InferenceIsPure) {
  const VoModel m = build_model(64, 64, 5, Rng(1));
  Rng rng(4);
  const Tensor x = random_tensor({2, 6, 64, 64}, rng, false, -50, 50);
  EXPECT_EQ(max_abs_diff(model_forward(m, x), model_forward(m, x)), 0.0);
}

TEST(ModelForward, EveryParameterGetsAFiniteGradient) {
  const VoModel m = build_model(64, 64, 8, Rng(1));
  Rng rng(4);
  const Tensor x = random_tensor({2, 6, 64, 64}, rng, false, -50, 50);
  std::vector<Pose6> targets(2);
  backward(pose_loss(model_forward(m, x), targets, 100.0));
  for (const auto& [name, p] : m.parameters()) {
    ASSERT_TRUE(p.has_grad()) << name;
    double norm = 0.0;
    for (double g : p.grad()) {
      ASSERT_TRUE(std::isfinite(g)) << name;
      norm += g * g;
    }
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(ModelForward, EndToEndGradientMatchesFiniteDifferencesSmallHidden) {
  const auto r = rcnn_vo::testing::end_to_end_check(16, 2, 10, 77);
  EXPECT_GE(r.coordinates, 200u);
  EXPECT_LE(r.kinks, r.coordinates / 20) << r.kinks << " coordinates straddle a kink";
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto dir = temp_dir("ckpt");
  VoModel m = build_model(64, 128, 6, Rng(5));
  m.mean_rgb.mean = {101.25, 99.0, 87.125};
  save_checkpoint(dir / "m.ckpt", m, {100.0, 42});
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(loaded.model.image_height, 64u);
  EXPECT_EQ(loaded.model.image_width, 128u);
  EXPECT_EQ(loaded.model.hidden, 6u);
  EXPECT_EQ(loaded.model.mean_rgb.mean, m.mean_rgb.mean);
  EXPECT_EQ(loaded.info.seed, 42u);
  EXPECT_EQ(loaded.manifest.at("layers"), layers_manifest());
  const auto a = m.parameters(), b = loaded.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(max_abs_diff(a[i].second, b[i].second), 0.0) << a[i].first;
  }
}

TEST(Checkpoint, ManifestListsTheEncoder) {
  EXPECT_EQ(layers_manifest(),
            "Conv1:7:3:2:64:relu,Conv2:5:2:2:128:relu,Conv3:5:2:2:256:relu,Conv3_1:3:1:1:256:relu,"
            "Conv4:3:1:2:512:relu,Conv4_1:3:1:1:512:relu,Conv5:3:1:2:512:relu,Conv5_1:3:1:1:512:relu,"
            "Conv6:3:1:2:1024:linear");
}

TEST(Checkpoint, TruncatedFileRejected) {
  const auto dir = temp_dir("ckpt_trunc");
  save_checkpoint(dir / "m.ckpt", build_model(64, 64, 3, Rng(5)), {});
  const auto size = std::filesystem::file_size(dir / "m.ckpt");
  std::filesystem::resize_file(dir / "m.ckpt", size - 100);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt"), DataError);
}
