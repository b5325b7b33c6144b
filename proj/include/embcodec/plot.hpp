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

#ifndef EMBCODEC_PLOT_HPP_
#define EMBCODEC_PLOT_HPP_

#include <span>
#include <string>

#include "embcodec/bench_pipeline.hpp"

namespace embcodec {

/// Standalone SVG of probe accuracy against bits per sample on a log-x
/// axis: one polyline per method through its seed-averaged points, with
/// vertical bars spanning the min and max accuracy over seeds. Failed rows
/// are left out.
std::string rd_plot_svg(std::span<const RDPoint> points, const std::string& title);

}  // namespace embcodec

#endif  // EMBCODEC_PLOT_HPP_
