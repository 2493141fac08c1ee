// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file ops.hpp
 * @brief Differentiable primitives over rcnn_vo::Tensor.
 *
 * Every primitive validates shapes up front and throws std::invalid_argument
 * naming the offending shapes. Dense products go through Eigen's
 * single-threaded GEMM, which has a fixed reduction order, so repeated runs are
 * bit-identical on the same machine.
 */

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcnn_vo/rng.hpp"
#include "rcnn_vo/tensor.hpp"

namespace rcnn_vo {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline MapMat as_mat(std::span<double> s, std::size_t rows, std::size_t cols) {
  return MapMat(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline CMapMat as_cmat(std::span<const double> s, std::size_t rows, std::size_t cols) {
  return CMapMat(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// Gradient buffer of an input, or an empty span when it needs none.
inline std::span<double> grad_of(const std::shared_ptr<Node>& n) {
  return n->requires_grad ? n->grad_buffer() : std::span<double>{};
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  Buffer out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), {x.node_ptr()}, [deriv](Node& self) {
    auto& src = self.inputs[0];
    auto gx = grad_of(src);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * deriv(src->value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](detail::Node& self) {
    for (auto& in : self.inputs) {
      auto g = detail::grad_of(in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](detail::Node& self) {
    auto ga = detail::grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    auto gb = detail::grad_of(self.inputs[1]);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
  });
}

/// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result(a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](detail::Node& self) {
    const auto& va = self.inputs[0]->value;
    const auto& vb = self.inputs[1]->value;
    auto ga = detail::grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * vb[i];
    auto gb = detail::grad_of(self.inputs[1]);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * va[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor relu(const Tensor& x) {
  // Subgradient at exactly 0 is taken as 0.
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return sigmoid_value(v); }, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

/// Sum of all entries, shape [1].
inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result({1}, {s}, {x.node_ptr()}, [](detail::Node& self) {
    auto g = detail::grad_of(self.inputs[0]);
    for (double& v : g) v += self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Buffer out(x.data().begin(), x.data().end());
  return detail::make_result(std::move(shape), std::move(out), {x.node_ptr()}, [](detail::Node& self) {
    auto g = detail::grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

inline Tensor flatten(const Tensor& x) { return reshape(x, {x.numel()}); }

/// Contiguous range [offset, offset + length) of a rank-1 tensor.
inline Tensor slice(const Tensor& x, std::size_t offset, std::size_t length) {
  if (x.rank() != 1 || length == 0 || offset + length > x.numel()) {
    throw std::invalid_argument("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                                ") invalid for shape " + shape_str(x.shape()));
  }
  Buffer out(x.data().begin() + static_cast<std::ptrdiff_t>(offset),
                          x.data().begin() + static_cast<std::ptrdiff_t>(offset + length));
  return detail::make_result({length}, std::move(out), {x.node_ptr()}, [offset](detail::Node& self) {
    auto g = detail::grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

/// Row i of a rank-2 tensor as a rank-1 tensor.
inline Tensor row(const Tensor& x, std::size_t i) {
  if (x.rank() != 2 || i >= x.dim(0)) {
    throw std::invalid_argument("row: index " + std::to_string(i) + " invalid for shape " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  Buffer out(x.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                          x.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return detail::make_result({n}, std::move(out), {x.node_ptr()}, [i, n](detail::Node& self) {
    auto g = detail::grad_of(self.inputs[0]);
    for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j];
  });
}

/// Stacks equally shaped tensors along a new leading axis.
inline Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("stack: no inputs");
  const Shape& inner = parts[0].shape();
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  const std::size_t n = parts[0].numel();
  Buffer out;
  out.reserve(parts.size() * n);
  std::vector<std::shared_ptr<detail::Node>> inputs;
  for (const auto& p : parts) {
    if (p.shape() != inner) {
      throw std::invalid_argument("stack: shape mismatch " + shape_str(inner) + " vs " + shape_str(p.shape()));
    }
    out.insert(out.end(), p.data().begin(), p.data().end());
    inputs.push_back(p.node_ptr());
  }
  return detail::make_result(std::move(shape), std::move(out), std::move(inputs), [n](detail::Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto g = detail::grad_of(self.inputs[k]);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += self.grad[k * n + j];
    }
  });
}

inline Tensor stack(const std::vector<Tensor>& parts) { return stack(std::span<const Tensor>(parts)); }

// ---------------------------------------------------------------------------
// Dense products

/// a[m,n] x b[n,p] -> [m,p]; a rank-1 b[n] is treated as a column and gives [m].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool vec = b.rank() == 1;
  if (a.rank() != 2 || (b.rank() != 2 && !vec) || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: non-conforming shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1), p = vec ? 1 : b.dim(1);
  Buffer out(m * p);
  detail::as_mat(out, m, p).noalias() = detail::as_cmat(a.data(), m, n) * detail::as_cmat(b.data(), n, p);
  Shape shape = vec ? Shape{m} : Shape{m, p};
  return detail::make_result(std::move(shape), std::move(out), {a.node_ptr(), b.node_ptr()},
                             [m, n, p](detail::Node& self) {
                               const auto G = detail::as_cmat(self.grad, m, p);
                               if (auto ga = detail::grad_of(self.inputs[0]); !ga.empty()) {
                                 detail::as_mat(ga, m, n).noalias() +=
                                     G * detail::as_cmat(self.inputs[1]->value, n, p).transpose();
                               }
                               if (auto gb = detail::grad_of(self.inputs[1]); !gb.empty()) {
                                 detail::as_mat(gb, n, p).noalias() +=
                                     detail::as_cmat(self.inputs[0]->value, m, n).transpose() * G;
                               }
                             });
}

/// Affine map y = x W^T + b for x[T,in] (or x[in]), W[out,in], b[out].
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const bool vec = x.rank() == 1;
  if ((x.rank() != 2 && !vec) || weight.rank() != 2 || bias.rank() != 1 ||
      x.shape().back() != weight.dim(1) || bias.dim(0) != weight.dim(0)) {
    throw std::invalid_argument("linear: non-conforming shapes x" + shape_str(x.shape()) + " W" +
                                shape_str(weight.shape()) + " b" + shape_str(bias.shape()));
  }
  const std::size_t rows = vec ? 1 : x.dim(0), in = weight.dim(1), outn = weight.dim(0);
  Buffer out(rows * outn);
  auto Y = detail::as_mat(out, rows, outn);
  Y.noalias() = detail::as_cmat(x.data(), rows, in) * detail::as_cmat(weight.data(), outn, in).transpose();
  const auto bvec = detail::as_cmat(bias.data(), 1, outn);
  Y.rowwise() += bvec.row(0);
  Shape shape = vec ? Shape{outn} : Shape{rows, outn};
  return detail::make_result(
      std::move(shape), std::move(out), {x.node_ptr(), weight.node_ptr(), bias.node_ptr()},
      [rows, in, outn](detail::Node& self) {
        const auto G = detail::as_cmat(self.grad, rows, outn);
        if (auto gx = detail::grad_of(self.inputs[0]); !gx.empty()) {
          detail::as_mat(gx, rows, in).noalias() += G * detail::as_cmat(self.inputs[1]->value, outn, in);
        }
        if (auto gw = detail::grad_of(self.inputs[1]); !gw.empty()) {
          detail::as_mat(gw, outn, in).noalias() += G.transpose() * detail::as_cmat(self.inputs[0]->value, rows, in);
        }
        if (auto gb = detail::grad_of(self.inputs[2]); !gb.empty()) {
          detail::as_mat(gb, 1, outn) += G.colwise().sum();
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution

/// Output extent of a strided, zero-padded convolution along one axis.
inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

/// 2-D cross-correlation with square odd kernels.
///
/// input is [C,H,W] (result [Cout,H',W']) or batched [N,C,H,W] (result
/// [N,Cout,H',W']); weight is [Cout,C,k,k], bias [Cout]. Implemented as
/// im2col followed by one GEMM over the whole batch.
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                     std::size_t padding) {
  const bool batched = input.rank() == 4;
  if (input.rank() != 3 && !batched) {
    throw std::invalid_argument("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0) {
    throw std::invalid_argument("conv2d: weight must be [Cout,Cin,k,k] with odd k, got " +
                                shape_str(weight.shape()));
  }
  const std::size_t N = batched ? input.dim(0) : 1;
  const std::size_t C = input.shape()[batched ? 1 : 0];
  const std::size_t H = input.shape()[batched ? 2 : 1];
  const std::size_t W = input.shape()[batched ? 3 : 2];
  const std::size_t Cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != C) {
    throw std::invalid_argument("conv2d: input channels of " + shape_str(input.shape()) +
                                " do not match weight " + shape_str(weight.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != Cout) {
    throw std::invalid_argument("conv2d: bias " + shape_str(bias.shape()) + " does not match weight " +
                                shape_str(weight.shape()));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (H + 2 * padding < k || W + 2 * padding < k) {
    throw std::invalid_argument("conv2d: padded input " + shape_str(input.shape()) + " smaller than kernel " +
                                std::to_string(k));
  }
  const std::size_t Ho = conv_out_extent(H, k, stride, padding);
  const std::size_t Wo = conv_out_extent(W, k, stride, padding);
  const std::size_t P = Ho * Wo, K = C * k * k, NP = N * P;
  const auto pad = static_cast<std::ptrdiff_t>(padding);

  // cols[K, N*P]
  auto cols = std::make_shared<Buffer>(K * NP, 0.0);
  const auto x = input.data();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* dst = cols->data() + ((c * k + ki) * k + kj) * NP;
        for (std::size_t n = 0; n < N; ++n) {
          const double* src = x.data() + (n * C + c) * H * W;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - pad;
            double* d = dst + n * P + oy * Wo;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            const double* srow = src + static_cast<std::size_t>(iy) * W;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - pad;
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) d[ox] = srow[ix];
            }
          }
        }
      }
    }
  }

  Buffer out(N * Cout * P);
  {
    detail::RowMat prod(static_cast<Eigen::Index>(Cout), static_cast<Eigen::Index>(NP));
    prod.noalias() = detail::as_cmat(weight.data(), Cout, K) * detail::as_cmat(*cols, K, NP);
    const auto b = bias.data();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t co = 0; co < Cout; ++co) {
        const double* s = prod.data() + co * NP + n * P;
        double* d = out.data() + (n * Cout + co) * P;
        for (std::size_t p = 0; p < P; ++p) d[p] = s[p] + b[co];
      }
    }
  }

  Shape shape = batched ? Shape{N, Cout, Ho, Wo} : Shape{Cout, Ho, Wo};
  return detail::make_result(
      std::move(shape), std::move(out), {input.node_ptr(), weight.node_ptr(), bias.node_ptr()},
      [=](detail::Node& self) {
        detail::RowMat g(static_cast<Eigen::Index>(Cout), static_cast<Eigen::Index>(NP));
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t co = 0; co < Cout; ++co) {
            const double* s = self.grad.data() + (n * Cout + co) * P;
            std::copy(s, s + P, g.data() + co * NP + n * P);
          }
        }
        if (auto gb = detail::grad_of(self.inputs[2]); !gb.empty()) {
          for (std::size_t co = 0; co < Cout; ++co) gb[co] += g.row(static_cast<Eigen::Index>(co)).sum();
        }
        if (auto gw = detail::grad_of(self.inputs[1]); !gw.empty()) {
          detail::as_mat(gw, Cout, K).noalias() += g * detail::as_cmat(*cols, K, NP).transpose();
        }
        if (auto gx = detail::grad_of(self.inputs[0]); !gx.empty()) {
          detail::RowMat dcols(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(NP));
          dcols.noalias() = detail::as_cmat(self.inputs[1]->value, Cout, K).transpose() * g;
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t ki = 0; ki < k; ++ki) {
              for (std::size_t kj = 0; kj < k; ++kj) {
                const double* src = dcols.data() + ((c * k + ki) * k + kj) * NP;
                for (std::size_t n = 0; n < N; ++n) {
                  double* dst = gx.data() + (n * C + c) * H * W;
                  for (std::size_t oy = 0; oy < Ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    const double* s = src + n * P + oy * Wo;
                    double* drow = dst + static_cast<std::size_t>(iy) * W;
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kj) - pad;
                      if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) drow[ix] += s[ox];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Regularization

/// Inverted dropout: in training mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); otherwise the input is
/// returned unchanged. The mask consumes one draw per element from `rng`.
inline Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<Buffer>(x.numel());
  Buffer out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = x[i] * (*mask)[i];
  }
  return detail::make_result(x.shape(), std::move(out), {x.node_ptr()}, [mask](detail::Node& self) {
    auto g = detail::grad_of(self.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

}  // namespace rcnn_vo
