/* Copyright 2026 The embcodec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "embcodec/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

namespace embcodec {
namespace {

constexpr double kWidth = 720, kHeight = 460;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
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

}  // namespace

std::string rd_plot_svg(std::span<const RDPoint> points, const std::string& title) {
  const std::vector<RDSummary> cells = summarize(points);
  std::map<std::string, std::vector<const RDSummary*>> series;
  double xmin = INFINITY, xmax = -INFINITY, ymin = 1.0;
  for (const auto& c : cells) {
    if (!(c.bits_per_sample > 0.0)) continue;
    series[c.method].push_back(&c);
    xmin = std::min(xmin, c.bits_per_sample);
    xmax = std::max(xmax, c.bits_per_sample);
    ymin = std::min(ymin, c.accuracy_min);
  }
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{3}</text>\n",
      kWidth, kHeight, (kLeft + kWidth - kRight) / 2, escape(title));
  if (series.empty()) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no data</text>\n</svg>\n", kWidth / 2,
                       kHeight / 2);
    return svg;
  }
  const double lx0 = std::floor(std::log10(xmin)), lx1 = std::max(lx0 + 1, std::ceil(std::log10(xmax)));
  const double y0 = std::max(0.0, std::floor(ymin * 10 - 0.5) / 10), y1 = 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double bits) { return kLeft + (std::log10(bits) - lx0) / (lx1 - lx0) * pw; };
  auto py = [&](double acc) { return kTop + (y1 - acc) / (y1 - y0) * ph; };

  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                     kTop, pw, ph);
  for (int e = static_cast<int>(lx0); e <= static_cast<int>(lx1); ++e) {
    const double x = px(std::pow(10.0, e));
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1}\" x2=\"{0:.1f}\" y2=\"{2}\" stroke=\"#ddd\"/>\n", x, kTop,
                       kTop + ph);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">1e{}</text>\n", x, kTop + ph + 18, e);
  }
  for (double a = y0; a <= y1 + 1e-9; a += 0.1) {
    const double y = py(a);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1:.1f}\" x2=\"{2}\" y2=\"{1:.1f}\" stroke=\"#ddd\"/>\n", kLeft, y,
                       kLeft + pw);
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.1f}</text>\n", kLeft - 6, y + 4, a);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">bits per sample (log scale)</text>\n",
                     kLeft + pw / 2, kHeight - 14);
  svg += fmt::format(
      "<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">probe accuracy</text>\n",
      kTop + ph / 2);

  std::size_t k = 0;
  for (const auto& [method, cellsof] : series) {
    const char* colour = kPalette[k % std::size(kPalette)];
    std::string path;
    for (const RDSummary* c : cellsof) {
      path += fmt::format("{}{:.1f},{:.1f}", path.empty() ? "" : " ", px(c->bits_per_sample), py(c->accuracy));
    }
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", path, colour);
    for (const RDSummary* c : cellsof) {
      const double x = px(c->bits_per_sample);
      svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"{3}\"/>\n", x,
                         py(c->accuracy_min), py(c->accuracy_max), colour);
      svg += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"><title>{} {}: {:.1f} bits, "
                         "acc {:.3f}</title></circle>\n",
                         x, py(c->accuracy), colour, escape(method), escape(c->setting), c->bits_per_sample,
                         c->accuracy);
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                       kLeft + pw + 12, ly, kLeft + pw + 32, colour);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kLeft + pw + 38, ly + 4, escape(method));
    ++k;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace embcodec
