#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "kpshift/tensor.hpp"

namespace kpshift {

// One frame's k×k region grid. Interior lines are zero-based row/col
// indices where the next band starts; lines are strictly increasing and
// every band keeps at least one cell.
struct GridPartition {
    std::size_t k = 1;
    std::size_t rows = 0, cols = 0;
    std::vector<std::size_t> row_lines;  // k-1 entries
    std::vector<std::size_t> col_lines;  // k-1 entries

    std::size_t region_count() const { return k * k; }
    // Regions enumerate row-major over the k×k grid.
    RegionBounds region(std::size_t index) const;
};

// Two-layer perceptron producing the partition's adaptive offset from a
// frame's per-channel spatial means. tanh bounds the output to
// (-H/(2k), H/(2k)) × (-W/(2k), W/(2k)) so no band can collapse.
struct SeparationNet {
    std::size_t k = 2;
    Tensor w1;  // hidden×C, hidden = max(1, C/4)
    Tensor b1;  // hidden
    Tensor w2;  // 2×hidden
    Tensor b2;  // 2
};

SeparationNet make_separation_net(std::size_t channels, std::size_t k);

// (Δrow, Δcol) for one C×H×W frame. Continuous in the frame values.
std::pair<double, double> compute_adaptive_bias(const Tensor& frame,
                                                const SeparationNet& net);

// Baseline interior lines at rounded j·H/k and j·W/k, every line shifted
// by the rounded bias, then the shared shift is clamped so the first and
// last bands keep at least one cell. k = 1 is the single full frame.
GridPartition build_partition(std::size_t rows, std::size_t cols, std::size_t k,
                              std::pair<double, double> bias);

}  // namespace kpshift
