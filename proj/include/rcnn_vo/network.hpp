// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file network.hpp
 * @brief Recurrent convolutional pose regressor.
 *
 * A stacked image pair [6,H,W] goes through nine convolutions (ReLU after all
 * but the last), the flattened Conv6 map feeds two stacked LSTM layers, and an
 * affine head maps the top hidden state to a 6-vector (translation, then Euler
 * angles) per time step. One time step corresponds to one image pair.
 *
 * LSTM weights are stored gate-stacked in the order (i, f, g, o): w_x is
 * [4H, in], w_h is [4H, H] and b is [4H]. The per-gate matrices W_x*, W_h* and
 * b_* are the corresponding row blocks (see LstmParams::gate_block).
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rcnn_vo/geometry.hpp"
#include "rcnn_vo/image.hpp"
#include "rcnn_vo/ops.hpp"
#include "rcnn_vo/rng.hpp"
#include "rcnn_vo/serialize.hpp"
#include "rcnn_vo/tensor.hpp"

namespace rcnn_vo {

struct ConvLayerSpec {
  std::string name;
  std::size_t receptive_field;
  std::size_t padding;
  std::size_t stride;
  std::size_t out_channels;
  bool relu_after;

  bool operator==(const ConvLayerSpec&) const = default;
};

/// The encoder configuration, in order.
inline const std::vector<ConvLayerSpec>& encoder_layer_specs() {
  static const std::vector<ConvLayerSpec> specs{
      {"Conv1", 7, 3, 2, 64, true},    {"Conv2", 5, 2, 2, 128, true},   {"Conv3", 5, 2, 2, 256, true},
      {"Conv3_1", 3, 1, 1, 256, true}, {"Conv4", 3, 1, 2, 512, true},   {"Conv4_1", 3, 1, 1, 512, true},
      {"Conv5", 3, 1, 2, 512, true},   {"Conv5_1", 3, 1, 1, 512, true}, {"Conv6", 3, 1, 2, 1024, false},
  };
  return specs;
}

inline constexpr std::size_t kPairChannels = 6;
inline constexpr std::size_t kPoseDim = 6;
inline constexpr std::size_t kDefaultHidden = 1000;

enum class Gate : std::size_t { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };

struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden = 0;
  Tensor w_x;  // [4H, input]
  Tensor w_h;  // [4H, H]
  Tensor b;    // [4H]

  /// Copy of one gate's row block of w_x, w_h or b.
  static Tensor gate_block(const Tensor& stacked, Gate gate) {
    const std::size_t H = stacked.dim(0) / 4;
    const std::size_t cols = stacked.rank() == 2 ? stacked.dim(1) : 1;
    const auto d = stacked.data();
    const auto begin = d.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(gate) * H * cols);
    Buffer v(begin, begin + static_cast<std::ptrdiff_t>(H * cols));
    return stacked.rank() == 2 ? Tensor::from({H, cols}, std::move(v)) : Tensor::from({H}, std::move(v));
  }
};

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t hidden) { return {Tensor::zeros({hidden}), Tensor::zeros({hidden})}; }
};

struct ConvLayer {
  ConvLayerSpec spec;
  Tensor weight;  // [Cout, Cin, k, k]
  Tensor bias;    // [Cout]
};

enum class InitScheme { kRandom, kZero };

struct VoModel {
  std::size_t image_height = 0;
  std::size_t image_width = 0;
  std::size_t hidden = kDefaultHidden;
  MeanRgb mean_rgb;
  std::vector<ConvLayer> conv;
  LstmParams lstm1;
  LstmParams lstm2;
  Tensor head_w;  // [6, H]
  Tensor head_b;  // [6]

  std::size_t feature_size() const { return (image_height / 64) * (image_width / 64) * 1024; }

  /// Named handles to every trainable tensor, in checkpoint order.
  std::vector<std::pair<std::string, Tensor>> parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& layer : conv) {
      out.emplace_back(layer.spec.name + ".weight", layer.weight);
      out.emplace_back(layer.spec.name + ".bias", layer.bias);
    }
    for (const auto* l : {&lstm1, &lstm2}) {
      const std::string prefix = l == &lstm1 ? "lstm1" : "lstm2";
      out.emplace_back(prefix + ".w_x", l->w_x);
      out.emplace_back(prefix + ".w_h", l->w_h);
      out.emplace_back(prefix + ".b", l->b);
    }
    out.emplace_back("head.weight", head_w);
    out.emplace_back("head.bias", head_b);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.numel();
    return n;
  }

  /// Deep copy; Tensor handles are shared otherwise.
  VoModel clone() const {
    VoModel m = *this;
    for (auto& layer : m.conv) {
      layer.weight = layer.weight.clone();
      layer.bias = layer.bias.clone();
    }
    for (auto* l : {&m.lstm1, &m.lstm2}) {
      l->w_x = l->w_x.clone();
      l->w_h = l->w_h.clone();
      l->b = l->b.clone();
    }
    m.head_w = head_w.clone();
    m.head_b = head_b.clone();
    return m;
  }

  void zero_grad() const {
    for (auto [name, t] : parameters()) t.zero_grad();
  }
};

namespace detail {

inline Tensor uniform_param(Shape shape, double bound, Rng rng, InitScheme init) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  if (init == InitScheme::kRandom) {
    for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  }
  return t;
}

inline LstmParams make_lstm(std::size_t input, std::size_t hidden, const Rng& rng, InitScheme init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmParams p;
  p.input_size = input;
  p.hidden = hidden;
  p.w_x = uniform_param({4 * hidden, input}, bound, rng.split("w_x"), init);
  p.w_h = uniform_param({4 * hidden, hidden}, bound, rng.split("w_h"), init);
  p.b = Tensor::zeros({4 * hidden}, true);
  if (init == InitScheme::kRandom) {
    auto b = p.b.mutable_data();
    for (std::size_t j = 0; j < hidden; ++j) b[hidden + j] = 1.0;  // forget gate
  }
  return p;
}

}  // namespace detail

/// Builds the network for the given input extents (positive multiples of 64).
///
/// Random initialization: conv weights U(-sqrt(3/fan_in), sqrt(3/fan_in)),
/// LSTM and head weights U(-1/sqrt(H), 1/sqrt(H)), forget-gate bias 1, all
/// other biases 0. kZero leaves every parameter at zero.
inline VoModel build_model(std::size_t image_height, std::size_t image_width, std::size_t hidden, const Rng& rng,
                           InitScheme init = InitScheme::kRandom) {
  if (!is_multiple_of_64(image_height) || !is_multiple_of_64(image_width)) {
    throw std::invalid_argument("build_model: image extents " + std::to_string(image_height) + "x" +
                                std::to_string(image_width) + " are not positive multiples of 64");
  }
  if (hidden == 0) throw std::invalid_argument("build_model: hidden size must be positive");
  VoModel m;
  m.image_height = image_height;
  m.image_width = image_width;
  m.hidden = hidden;
  std::size_t in_channels = kPairChannels;
  for (const auto& spec : encoder_layer_specs()) {
    const std::size_t k = spec.receptive_field;
    const double bound = std::sqrt(3.0 / static_cast<double>(in_channels * k * k));
    ConvLayer layer{spec,
                    detail::uniform_param({spec.out_channels, in_channels, k, k}, bound, rng.split(spec.name), init),
                    Tensor::zeros({spec.out_channels}, true)};
    m.conv.push_back(std::move(layer));
    in_channels = spec.out_channels;
  }
  m.lstm1 = detail::make_lstm(m.feature_size(), hidden, rng.split("lstm1"), init);
  m.lstm2 = detail::make_lstm(hidden, hidden, rng.split("lstm2"), init);
  m.head_w = detail::uniform_param({kPoseDim, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)),
                                   rng.split("head"), init);
  m.head_b = Tensor::zeros({kPoseDim}, true);
  return m;
}

/// Encoder over one pair [6,H,W] (returns [F]) or a batch [T,6,H,W] (returns [T,F]).
inline Tensor cnn_forward(const VoModel& model, const Tensor& pairs) {
  const bool batched = pairs.rank() == 4;
  if (pairs.rank() != 3 && !batched) {
    throw std::invalid_argument("cnn_forward: expected [6,H,W] or [T,6,H,W], got " + shape_str(pairs.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  if (pairs.shape()[off] != kPairChannels) {
    throw std::invalid_argument("cnn_forward: expected 6 channels (two stacked RGB frames), got shape " +
                                shape_str(pairs.shape()));
  }
  if (pairs.shape()[off + 1] != model.image_height || pairs.shape()[off + 2] != model.image_width) {
    throw std::invalid_argument("cnn_forward: input " + shape_str(pairs.shape()) + " does not match model extents " +
                                std::to_string(model.image_height) + "x" + std::to_string(model.image_width));
  }
  Tensor x = pairs;
  for (const auto& layer : model.conv) {
    x = conv2d(x, layer.weight, layer.bias, layer.spec.stride, layer.spec.padding);
    if (layer.spec.relu_after) x = relu(x);
  }
  return batched ? reshape(x, {pairs.dim(0), x.numel() / pairs.dim(0)}) : flatten(x);
}

namespace detail {

// Gate nonlinearities and state update given the input-side pre-activation
// (W_x x + b, all four gates stacked).
inline std::pair<Tensor, LstmState> lstm_cell(const LstmParams& p, const Tensor& x_pre, const LstmState& state) {
  const std::size_t H = p.hidden;
  const Tensor pre = add(x_pre, matmul(p.w_h, state.h));
  const Tensor i = sigmoid(slice(pre, 0, H));
  const Tensor f = sigmoid(slice(pre, H, H));
  const Tensor g = tanh(slice(pre, 2 * H, H));
  const Tensor o = sigmoid(slice(pre, 3 * H, H));
  const Tensor c = add(mul(f, state.c), mul(i, g));
  const Tensor h = mul(o, tanh(c));
  return {h, LstmState{h, c}};
}

inline void check_state(const LstmParams& p, const LstmState& s) {
  if (s.h.shape() != Shape{p.hidden} || s.c.shape() != Shape{p.hidden}) {
    throw std::invalid_argument("lstm: state shapes h" + shape_str(s.h.shape()) + " c" + shape_str(s.c.shape()) +
                                " do not match hidden size " + std::to_string(p.hidden));
  }
}

}  // namespace detail

/// One LSTM update:
///   i = s(Wxi x + Whi h + bi), f = s(Wxf x + Whf h + bf), g = tanh(Wxg x + Whg h + bg),
///   c' = f*c + i*g, o = s(Wxo x + Who h + bo), h' = o*tanh(c').
/// Returns the output h' and the new state (h', c').
inline std::pair<Tensor, LstmState> lstm_step(const LstmParams& p, const Tensor& x, const LstmState& state) {
  if (x.rank() != 1 || x.dim(0) != p.input_size) {
    throw std::invalid_argument("lstm_step: input " + shape_str(x.shape()) + " does not match input size " +
                                std::to_string(p.input_size));
  }
  detail::check_state(p, state);
  return detail::lstm_cell(p, linear(x, p.w_x, p.b), state);
}

/// The recurrent part of an LSTM layer as one primitive. Given the input-side
/// pre-activations proj [T,4H] (W_x x_t + b per row), the recurrent weights
/// w_h [4H,H] and the initial state, returns a flat [2*T*H] tensor: h_1..h_T
/// followed by c_1..c_T. The update per step is the same as lstm_step; the
/// backward pass runs through time explicitly so the w_h gradient is a single
/// product over all steps.
inline Tensor lstm_recurrence(const Tensor& proj, const Tensor& w_h, const Tensor& h0, const Tensor& c0) {
  if (w_h.rank() != 2 || w_h.dim(0) != 4 * w_h.dim(1)) {
    throw std::invalid_argument("lstm_recurrence: w_h must be [4H,H], got " + shape_str(w_h.shape()));
  }
  const std::size_t H = w_h.dim(1);
  if (proj.rank() != 2 || proj.dim(1) != 4 * H || h0.shape() != Shape{H} || c0.shape() != Shape{H}) {
    throw std::invalid_argument("lstm_recurrence: non-conforming shapes proj" + shape_str(proj.shape()) + " w_h" +
                                shape_str(w_h.shape()) + " h0" + shape_str(h0.shape()) + " c0" +
                                shape_str(c0.shape()));
  }
  const std::size_t T = proj.dim(0);
  using Vec = Eigen::Map<Eigen::VectorXd>;
  using CVec = Eigen::Map<const Eigen::VectorXd>;
  const auto Eh = static_cast<Eigen::Index>(H);
  Buffer out(2 * T * H);
  Buffer gates(T * 4 * H);  // activated i, f, g, o per step
  const auto Wh = detail::as_cmat(w_h.data(), 4 * H, H);
  Eigen::VectorXd pre(4 * Eh);
  for (std::size_t t = 0; t < T; ++t) {
    const double* h_prev = t == 0 ? h0.data().data() : out.data() + (t - 1) * H;
    const double* c_prev = t == 0 ? c0.data().data() : out.data() + (T + t - 1) * H;
    pre.noalias() = Wh * CVec(h_prev, Eh);
    pre += CVec(proj.data().data() + t * 4 * H, 4 * Eh);
    double* a = gates.data() + t * 4 * H;
    double* h = out.data() + t * H;
    double* c = out.data() + (T + t) * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double i = sigmoid_value(pre[static_cast<Eigen::Index>(j)]);
      const double f = sigmoid_value(pre[static_cast<Eigen::Index>(H + j)]);
      const double g = std::tanh(pre[static_cast<Eigen::Index>(2 * H + j)]);
      const double o = sigmoid_value(pre[static_cast<Eigen::Index>(3 * H + j)]);
      a[j] = i, a[H + j] = f, a[2 * H + j] = g, a[3 * H + j] = o;
      c[j] = f * c_prev[j] + i * g;
      h[j] = o * std::tanh(c[j]);
    }
  }
  return detail::make_result(
      {2 * T * H}, std::move(out), {proj.node_ptr(), w_h.node_ptr(), h0.node_ptr(), c0.node_ptr()},
      [T, H, Eh, gates = std::move(gates)](detail::Node& self) {
        const auto& proj_n = self.inputs[0];
        const auto& wh_n = self.inputs[1];
        const auto& h0_n = self.inputs[2];
        const auto& c0_n = self.inputs[3];
        const double* val = self.value.data();
        const double* gout = self.grad.data();
        Buffer dpre(T * 4 * H);
        Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(Eh), dc_next = Eigen::VectorXd::Zero(Eh);
        const auto Wh = detail::as_cmat(wh_n->value, 4 * H, H);
        for (std::size_t t = T; t-- > 0;) {
          const double* a = gates.data() + t * 4 * H;
          const double* c = val + (T + t) * H;
          const double* c_prev = t == 0 ? c0_n->value.data() : val + (T + t - 1) * H;
          double* dp = dpre.data() + t * 4 * H;
          for (std::size_t j = 0; j < H; ++j) {
            const auto J = static_cast<Eigen::Index>(j);
            const double i = a[j], f = a[H + j], g = a[2 * H + j], o = a[3 * H + j];
            const double tc = std::tanh(c[j]);
            const double dh = gout[t * H + j] + dh_next[J];
            const double dc = gout[(T + t) * H + j] + dc_next[J] + dh * o * (1.0 - tc * tc);
            dp[j] = dc * g * i * (1.0 - i);
            dp[H + j] = dc * c_prev[j] * f * (1.0 - f);
            dp[2 * H + j] = dc * i * (1.0 - g * g);
            dp[3 * H + j] = dh * tc * o * (1.0 - o);
            dc_next[J] = dc * f;
          }
          dh_next.noalias() = Wh.transpose() * CVec(dp, 4 * Eh);
        }
        const auto dP = detail::as_cmat(dpre, T, 4 * H);
        if (auto g = detail::grad_of(proj_n); !g.empty()) detail::as_mat(g, T, 4 * H) += dP;
        if (auto g = detail::grad_of(wh_n); !g.empty()) {
          // Previous hidden states h_0..h_{T-1} as rows.
          detail::RowMat Hprev(static_cast<Eigen::Index>(T), Eh);
          Hprev.row(0) = CVec(h0_n->value.data(), Eh).transpose();
          if (T > 1) Hprev.bottomRows(static_cast<Eigen::Index>(T - 1)) = detail::as_cmat({val, (T - 1) * H}, T - 1, H);
          detail::as_mat(g, 4 * H, H).noalias() += dP.transpose() * Hprev;
        }
        if (auto g = detail::grad_of(h0_n); !g.empty()) Vec(g.data(), Eh) += dh_next;
        if (auto g = detail::grad_of(c0_n); !g.empty()) Vec(g.data(), Eh) += dc_next;
      });
}

/// Runs one LSTM layer over a whole sequence [T, in] and returns [T, H].
/// The input projection of all steps is a single product; the recurrence is
/// one lstm_recurrence node.
inline Tensor lstm_layer_forward(const LstmParams& p, const Tensor& inputs, LstmState& state) {
  if (inputs.rank() != 2 || inputs.dim(1) != p.input_size) {
    throw std::invalid_argument("lstm_layer_forward: inputs " + shape_str(inputs.shape()) +
                                " do not match input size " + std::to_string(p.input_size));
  }
  detail::check_state(p, state);
  const std::size_t T = inputs.dim(0), H = p.hidden;
  const Tensor seq = lstm_recurrence(linear(inputs, p.w_x, p.b), p.w_h, state.h, state.c);
  state = LstmState{slice(seq, (T - 1) * H, H), slice(seq, (2 * T - 1) * H, H)};
  return reshape(slice(seq, 0, T * H), {T, H});
}

struct RnnState {
  LstmState layer1;
  LstmState layer2;

  static RnnState zeros(std::size_t hidden) { return {LstmState::zeros(hidden), LstmState::zeros(hidden)}; }
};

struct RnnOutput {
  Tensor poses;  // [T, 6]: p_x, p_y, p_z, phi_x, phi_y, phi_z
  RnnState state;
};

/// lstm1 -> dropout -> lstm2 -> dropout -> head, for every step of
/// `features` [T, F]. Dropout masks are drawn from `rng` only in training mode.
inline RnnOutput rnn_forward(const VoModel& model, const Tensor& features, RnnState state, double dropout_rate,
                             bool training, Rng& rng) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw std::invalid_argument("rnn_forward: expected non-empty [T,F] features, got " + shape_str(features.shape()));
  }
  Tensor h1 = lstm_layer_forward(model.lstm1, features, state.layer1);
  h1 = dropout(h1, dropout_rate, training, rng);
  Tensor h2 = lstm_layer_forward(model.lstm2, h1, state.layer2);
  h2 = dropout(h2, dropout_rate, training, rng);
  return {linear(h2, model.head_w, model.head_b), std::move(state)};
}

struct ForwardOptions {
  double dropout_rate = 0.0;
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

/// Encoder then recurrence over a stacked pair sequence [T,6,H,W], starting
/// from `state`. Returns per-step poses [T,6] and the final state.
inline RnnOutput model_forward(const VoModel& model, const Tensor& pair_sequence, const RnnState& state,
                               const ForwardOptions& opts = {}) {
  if (pair_sequence.rank() != 4) {
    throw std::invalid_argument("model_forward: expected [T,6,H,W], got " + shape_str(pair_sequence.shape()));
  }
  Rng fallback(0);
  Rng& rng = opts.rng ? *opts.rng : fallback;
  if (opts.training && opts.dropout_rate > 0.0 && !opts.rng) {
    throw std::invalid_argument("model_forward: training with dropout requires an Rng");
  }
  const Tensor features = cnn_forward(model, pair_sequence);
  return rnn_forward(model, features, state, opts.dropout_rate, opts.training, rng);
}

/// Zero-initialized recurrent state.
inline Tensor model_forward(const VoModel& model, const Tensor& pair_sequence, const ForwardOptions& opts = {}) {
  return model_forward(model, pair_sequence, RnnState::zeros(model.hidden), opts).poses;
}

/// Stacks [6,H,W] pairs into one [T,6,H,W] tensor (no gradient).
inline Tensor stack_pairs(std::span<const Tensor> pairs) {
  NoGradGuard guard;
  return stack(pairs).detach();
}

inline std::vector<Pose6> to_poses(const Tensor& poses) {
  if (poses.rank() != 2 || poses.dim(1) != kPoseDim) {
    throw std::invalid_argument("to_poses: expected [T,6], got " + shape_str(poses.shape()));
  }
  std::vector<Pose6> out(poses.dim(0));
  const auto d = poses.data();
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t].p = {d[t * 6 + 0], d[t * 6 + 1], d[t * 6 + 2]};
    out[t].phi = {d[t * 6 + 3], d[t * 6 + 4], d[t * 6 + 5]};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// A checkpoint file is a plain-text manifest of `key = value` lines,
// terminated by a line `end`, followed by one RVT1 record per parameter in
// the order listed under `parameters`.

struct CheckpointInfo {
  double kappa = 100.0;
  std::uint64_t seed = 0;
};

inline std::string layers_manifest() {
  std::ostringstream os;
  bool first = true;
  for (const auto& s : encoder_layer_specs()) {
    os << (first ? "" : ",") << s.name << ':' << s.receptive_field << ':' << s.padding << ':' << s.stride << ':'
       << s.out_channels << ':' << (s.relu_after ? "relu" : "linear");
    first = false;
  }
  return os.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const VoModel& model, const CheckpointInfo& info) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  std::ostringstream m;
  m.precision(17);
  m << "format = rcnn-vo-checkpoint-1\n";
  m << "image_height = " << model.image_height << "\n";
  m << "image_width = " << model.image_width << "\n";
  m << "hidden = " << model.hidden << "\n";
  m << "mean_rgb = " << model.mean_rgb.mean[0] << "," << model.mean_rgb.mean[1] << "," << model.mean_rgb.mean[2]
    << "\n";
  m << "kappa = " << info.kappa << "\n";
  m << "seed = " << info.seed << "\n";
  m << "layers = " << layers_manifest() << "\n";
  m << "parameters = ";
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) m << (i ? "," : "") << params[i].first;
  m << "\nend\n";
  os << m.str();
  for (const auto& [name, t] : params) write_tensor(os, t);
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

struct LoadedCheckpoint {
  VoModel model;
  CheckpointInfo info;
  std::map<std::string, std::string> manifest;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  bool ended = false;
  while (std::getline(is, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw DataError("checkpoint " + path.string() + ": malformed manifest line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint " + path.string() + ": manifest lacks '" + key + "'");
    return it->second;
  };
  if (!ended || need("format") != "rcnn-vo-checkpoint-1") throw DataError("checkpoint " + path.string() + ": bad header");
  if (need("layers") != layers_manifest()) {
    throw DataError("checkpoint " + path.string() + ": encoder layer list does not match this build");
  }
  LoadedCheckpoint out;
  try {
    out.model = build_model(std::stoul(need("image_height")), std::stoul(need("image_width")),
                            std::stoul(need("hidden")), Rng(0), InitScheme::kZero);
    std::istringstream mean(need("mean_rgb"));
    std::string field;
    for (double& v : out.model.mean_rgb.mean) {
      std::getline(mean, field, ',');
      v = std::stod(field);
    }
    out.info.kappa = std::stod(need("kappa"));
    out.info.seed = std::stoull(need("seed"));
  } catch (const std::logic_error& e) {
    throw DataError("checkpoint " + path.string() + ": bad manifest value (" + e.what() + ")");
  }
  std::string expected;
  for (const auto& [name, t] : out.model.parameters()) expected += (expected.empty() ? "" : ",") + name;
  if (need("parameters") != expected) throw DataError("checkpoint " + path.string() + ": parameter list mismatch");
  for (auto [name, t] : out.model.parameters()) {
    Tensor loaded;
    try {
      loaded = read_tensor(is);
    } catch (const std::exception& e) {
      throw DataError("checkpoint " + path.string() + ": parameter " + name + ": " + e.what());
    }
    if (loaded.shape() != t.shape()) {
      throw DataError("checkpoint " + path.string() + ": parameter " + name + " has shape " +
                      shape_str(loaded.shape()) + ", expected " + shape_str(t.shape()));
    }
    std::copy(loaded.data().begin(), loaded.data().end(), t.mutable_data().begin());
  }
  out.manifest = std::move(kv);
  return out;
}

}  // namespace rcnn_vo
