#pragma once

#include <string>
#include <vector>

#include "kpshift/arese.hpp"

namespace kpshift {

struct VizOptions {
    std::vector<std::size_t> channels{0};
    double cell = 20.0;  // pixels per feature-map cell
};

// One panel per frame: region boundary lines from the adaptive partition,
// crosses at the key points (colored by region), and an arrow per key
// point from its location to location-plus-shift on every adjacent-frame
// step. Zero-length shifts render as dots. All coordinates print with two
// decimals, so equal inputs produce byte-identical text.
std::string render_svg(const Tensor& f, const SeparationNet& net, const AreseConfig& cfg,
                       const VizOptions& opt);

}  // namespace kpshift
