// Copyright 2026 The rcnn-vo Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace rcnn_vo::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;  // data coordinates
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;        // plot log10(y); requires y > 0
  bool equal_aspect = false;  // same scale on both axes (trajectory plots)
  double width = 640.0;
  double height = 480.0;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return palette[i % 7];
}

}  // namespace detail

/// Renders 2-D polylines with axes, tick labels and a legend. Output depends
/// only on the input, so identical data gives identical bytes.
inline std::string render(const std::vector<Series>& series, const PlotOptions& opt) {
  constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  auto ty = [&](double y) { return opt.log_y ? std::log10(y) : y; };

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, ty(y));
      ymax = std::max(ymax, ty(y));
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;

  const double pw = opt.width - kLeft - kRight, ph = opt.height - kTop - kBottom;
  double sx = pw / (xmax - xmin), sy = ph / (ymax - ymin);
  if (opt.equal_aspect) {
    const double s = std::min(sx, sy);
    // Centre the tighter axis.
    const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
    sx = sy = s;
    xmin = cx - 0.5 * pw / s, xmax = cx + 0.5 * pw / s;
    ymin = cy - 0.5 * ph / s, ymax = cy + 0.5 * ph / s;
  }
  auto px = [&](double x) { return kLeft + (x - xmin) * sx; };
  auto py = [&](double y) { return kTop + ph - (ty(y) - ymin) * sy; };
  auto py_raw = [&](double v) { return kTop + ph - (v - ymin) * sy; };

  using detail::fmt;
  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(opt.width) + "\" height=\"" + fmt(opt.height) +
       "\" viewBox=\"0 0 " + fmt(opt.width) + " " + fmt(opt.height) + "\">\n";
  o += "<rect x=\"0\" y=\"0\" width=\"" + fmt(opt.width) + "\" height=\"" + fmt(opt.height) + "\" fill=\"white\"/>\n";
  o += "<text x=\"" + fmt(opt.width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
       detail::escape(opt.title) + "</text>\n";
  o += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    o += "<text x=\"" + fmt(px(xv)) + "\" y=\"" + fmt(kTop + ph + 16) + "\" text-anchor=\"middle\" font-size=\"11\">" +
         detail::escape(fmt(xv)) + "</text>\n";
    const std::string ylabel = opt.log_y ? "1e" + fmt(yv) : fmt(yv);
    o += "<text x=\"" + fmt(kLeft - 6) + "\" y=\"" + fmt(py_raw(yv) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
         detail::escape(ylabel) + "</text>\n";
  }
  o += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(opt.height - 12) +
       "\" text-anchor=\"middle\" font-size=\"13\">" + detail::escape(opt.x_label) + "</text>\n";
  o += "<text x=\"16\" y=\"" + fmt(kTop + ph / 2) + "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
       fmt(kTop + ph / 2) + ")\">" + detail::escape(opt.y_label) + "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    o += "<polyline data-label=\"" + detail::escape(s.label) + "\" fill=\"none\" stroke=\"" + detail::color(i) +
         "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.points.size(); ++k) {
      o += (k ? " " : "") + fmt(px(s.points[k].first)) + "," + fmt(py(s.points[k].second));
    }
    o += "\"/>\n";
    const double ly = kTop + 14 + 16.0 * static_cast<double>(i);
    o += "<line x1=\"" + fmt(kLeft + pw - 130) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(kLeft + pw - 110) +
         "\" y2=\"" + fmt(ly) + "\" stroke=\"" + detail::color(i) + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + fmt(kLeft + pw - 104) + "\" y=\"" + fmt(ly + 4) + "\" font-size=\"12\">" +
         detail::escape(s.label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

/// Parses the vertex list of the polyline with the given data-label.
inline std::vector<std::pair<double, double>> polyline_points(const std::string& svg_text, const std::string& label) {
  const std::string key = "<polyline data-label=\"" + detail::escape(label) + "\"";
  const auto at = svg_text.find(key);
  if (at == std::string::npos) return {};
  const auto p0 = svg_text.find("points=\"", at) + 8;
  const auto p1 = svg_text.find('"', p0);
  std::vector<std::pair<double, double>> out;
  std::size_t pos = p0;
  while (pos < p1) {
    const auto comma = svg_text.find(',', pos);
    auto end = svg_text.find(' ', comma);
    if (end > p1) end = p1;
    out.emplace_back(std::stod(svg_text.substr(pos, comma - pos)), std::stod(svg_text.substr(comma + 1, end - comma - 1)));
    pos = end + 1;
  }
  return out;
}

}  // namespace rcnn_vo::svg
