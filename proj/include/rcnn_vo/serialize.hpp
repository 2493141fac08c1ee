// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file serialize.hpp
 * @brief "RVT1" binary tensor container.
 *
 * Layout of one record, all integers and floats little-endian:
 *
 *   bytes 0..3    ASCII "RVT1"
 *   u64           rank r
 *   u64 x r       extents
 *   f64 x prod    values, row-major
 *
 * Records may be concatenated; checkpoints store one record per parameter.
 */

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcnn_vo/tensor.hpp"

namespace rcnn_vo {

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFFU);
  os.write(b.data(), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw std::runtime_error("RVT1: truncated stream");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

}  // namespace detail

inline constexpr std::array<char, 4> kRvtMagic{'R', 'V', 'T', '1'};

inline void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kRvtMagic.data(), 4);
  detail::put_u64(os, t.rank());
  for (auto e : t.shape()) detail::put_u64(os, e);
  for (double v : t.data()) detail::put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw std::runtime_error("RVT1: write failed");
}

inline Tensor read_tensor(std::istream& is, bool requires_grad = false) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4)) throw std::runtime_error("RVT1: truncated stream");
  if (magic != kRvtMagic) throw std::runtime_error("RVT1: bad magic bytes");
  const std::uint64_t rank = detail::get_u64(is);
  if (rank == 0 || rank > 8) throw std::runtime_error("RVT1: unsupported rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& e : shape) {
    e = detail::get_u64(is);
    if (e == 0 || e > (std::uint64_t{1} << 32)) throw std::runtime_error("RVT1: bad extent");
    count *= e;
    if (count > (std::uint64_t{1} << 34)) throw std::runtime_error("RVT1: tensor too large");
  }
  std::vector<double> values(count);
  for (auto& v : values) v = std::bit_cast<double>(detail::get_u64(is));
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

}  // namespace rcnn_vo
