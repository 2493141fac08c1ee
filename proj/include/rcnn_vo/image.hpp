// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

/**
 * @file image.hpp
 * @brief Image decoding and the input preprocessing chain.
 *
 * Images are plain Tensors of shape [3,H,W] holding intensities on the 0-255
 * scale. Preprocessing resizes bilinearly to the network extents and then
 * subtracts the training-set mean colour; two consecutive frames are stacked
 * channel-wise into the [6,H,W] network input.
 */

#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "rcnn_vo/tensor.hpp"

namespace rcnn_vo {

/// Thrown for unreadable or malformed input data (images, pose files, datasets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MeanRgb {
  std::array<double, 3> mean{0.0, 0.0, 0.0};

  bool valid() const {
    return std::all_of(mean.begin(), mean.end(), [](double m) { return m >= 0.0 && m <= 255.0; });
  }
};

inline bool is_multiple_of_64(std::size_t v) { return v > 0 && v % 64 == 0; }

/// Decodes an 8- or 16-bit PNG. Grayscale is replicated into three channels.
inline Tensor load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw DataError("cannot read image " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode image " + path.string() + ": " + image.message);
  }
  const std::size_t h = image.height, w = image.width;
  std::vector<double> chw(3 * h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) chw[(c * h + y) * w + x] = buffer[(y * w + x) * 3 + c];
    }
  }
  return Tensor::from({3, h, w}, std::move(chw));
}

/// Encodes a [3,H,W] image as 8-bit RGB PNG, rounding and clamping to 0-255.
inline void save_png(const std::filesystem::path& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw std::invalid_argument("save_png: expected [3,H,W], got " + shape_str(img.shape()));
  }
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::vector<png_byte> buffer(3 * h * w);
  const auto d = img.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        buffer[(y * w + x) * 3 + c] =
            static_cast<png_byte>(std::clamp(std::lround(d[(c * h + y) * w + x]), 0L, 255L));
      }
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw DataError("cannot write image " + path.string() + ": " + image.message);
  }
}

/// Bilinear resampling with half-pixel centres and edge clamping. The target
/// extents are unconstrained; equal extents return an exact copy.
inline Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
  if (img.rank() != 3) throw std::invalid_argument("resize_bilinear: expected [C,H,W], got " + shape_str(img.shape()));
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (out_h == H && out_w == W) return img.detach();
  std::vector<double> out(C * out_h * out_w);
  const auto src = img.data();
  auto axis = [](std::size_t o, std::size_t in, std::size_t out_n) {
    const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
    const double clamped = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(clamped));
    const std::size_t hi = std::min(lo + 1, in - 1);
    return std::tuple{lo, hi, clamped - static_cast<double>(lo)};
  };
  for (std::size_t y = 0; y < out_h; ++y) {
    const auto [y0, y1, fy] = axis(y, H, out_h);
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [x0, x1, fx] = axis(x, W, out_w);
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = src.data() + c * H * W;
        const double top = p[y0 * W + x0] * (1.0 - fx) + p[y0 * W + x1] * fx;
        const double bot = p[y1 * W + x0] * (1.0 - fx) + p[y1 * W + x1] * fx;
        out[(c * out_h + y) * out_w + x] = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return Tensor::from({C, out_h, out_w}, std::move(out));
}

/// Resize to (out_h, out_w), both positive multiples of 64, then subtract the
/// per-channel mean.
inline Tensor preprocess_image(const Tensor& img, const MeanRgb& mean, std::size_t out_h, std::size_t out_w) {
  if (!is_multiple_of_64(out_h) || !is_multiple_of_64(out_w)) {
    throw std::invalid_argument("preprocess_image: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                                " is not a multiple of 64");
  }
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw std::invalid_argument("preprocess_image: expected [3,H,W], got " + shape_str(img.shape()));
  }
  Tensor resized = resize_bilinear(img, out_h, out_w);
  std::vector<double> out(resized.data().begin(), resized.data().end());
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] -= mean.mean[c];
  }
  return Tensor::from({3, out_h, out_w}, std::move(out));
}

/// Channel concatenation: prev occupies channels 0-2, next channels 3-5.
inline Tensor make_pair(const Tensor& prev, const Tensor& next) {
  if (prev.rank() != 3 || prev.dim(0) != 3 || prev.shape() != next.shape()) {
    throw std::invalid_argument("make_pair: frames must be equal [3,H,W], got " + shape_str(prev.shape()) + " and " +
                                shape_str(next.shape()));
  }
  std::vector<double> out;
  out.reserve(2 * prev.numel());
  out.insert(out.end(), prev.data().begin(), prev.data().end());
  out.insert(out.end(), next.data().begin(), next.data().end());
  return Tensor::from({6, prev.dim(1), prev.dim(2)}, std::move(out));
}

inline std::pair<Tensor, Tensor> split_pair(const Tensor& pair) {
  if (pair.rank() != 3 || pair.dim(0) != 6) throw std::invalid_argument("split_pair: expected [6,H,W], got " + shape_str(pair.shape()));
  const std::size_t half = pair.numel() / 2;
  const auto d = pair.data();
  return {Tensor::from({3, pair.dim(1), pair.dim(2)}, Buffer(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(half))),
          Tensor::from({3, pair.dim(1), pair.dim(2)}, Buffer(d.begin() + static_cast<std::ptrdiff_t>(half), d.end()))};
}

/// Streaming per-channel mean over any number of [3,H,W] images.
class MeanRgbAccumulator {
 public:
  void add(const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 3) throw std::invalid_argument("MeanRgbAccumulator: expected [3,H,W]");
    const std::size_t plane = img.dim(1) * img.dim(2);
    const auto d = img.data();
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += d[c * plane + i];
      sums_[c] += s;
    }
    pixels_ += plane;
  }

  std::size_t pixel_count() const { return pixels_; }

  MeanRgb result() const {
    if (pixels_ == 0) throw std::invalid_argument("compute_mean_rgb: no images");
    MeanRgb m;
    for (std::size_t c = 0; c < 3; ++c) m.mean[c] = sums_[c] / static_cast<double>(pixels_);
    return m;
  }

 private:
  std::array<double, 3> sums_{0.0, 0.0, 0.0};
  std::size_t pixels_ = 0;
};

inline MeanRgb compute_mean_rgb(std::span<const Tensor> images) {
  MeanRgbAccumulator acc;
  for (const auto& img : images) acc.add(img);
  return acc.result();
}

}  // namespace rcnn_vo
