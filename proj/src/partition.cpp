#include "kpshift/partition.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace kpshift {

RegionBounds GridPartition::region(std::size_t index) const {
    if (index >= k * k) throw ShapeError("region index out of range");
    const std::size_t gr = index / k, gc = index % k;
    RegionBounds b;
    b.row_lo = gr == 0 ? 0 : row_lines[gr - 1];
    b.row_hi = gr == k - 1 ? rows : row_lines[gr];
    b.col_lo = gc == 0 ? 0 : col_lines[gc - 1];
    b.col_hi = gc == k - 1 ? cols : col_lines[gc];
    return b;
}

SeparationNet make_separation_net(std::size_t channels, std::size_t k) {
    if (channels == 0) throw ShapeError("separation net needs at least one channel");
    const std::size_t hidden = std::max<std::size_t>(1, channels / 4);
    SeparationNet net;
    net.k = k;
    net.w1 = Tensor::zeros({hidden, channels});
    net.b1 = Tensor::zeros({hidden});
    net.w2 = Tensor::zeros({2, hidden});
    net.b2 = Tensor::zeros({2});
    return net;
}

std::pair<double, double> compute_adaptive_bias(const Tensor& frame,
                                                const SeparationNet& net) {
    if (frame.rank() != 3) throw ShapeError("compute_adaptive_bias: frame must be C×H×W");
    const std::size_t c = frame.extent(0), h = frame.extent(1), w = frame.extent(2);
    if (net.w1.extent(1) != c) {
        throw ShapeError("compute_adaptive_bias: net expects " +
                         std::to_string(net.w1.extent(1)) + " channels, frame has " +
                         std::to_string(c));
    }
    Tensor gap({c});
    const double* p = frame.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t i = 0; i < h * w; ++i) sum += p[ch * h * w + i];
        gap[ch] = sum / static_cast<double>(h * w);
    }
    Tensor hid = linear_forward(gap, net.w1, net.b1);
    for (std::size_t i = 0; i < hid.size(); ++i) hid[i] = relu(hid[i]);
    Tensor out = linear_forward(hid, net.w2, net.b2);
    const double s_row = static_cast<double>(h) / (2.0 * static_cast<double>(net.k));
    const double s_col = static_cast<double>(w) / (2.0 * static_cast<double>(net.k));
    return {s_row * std::tanh(out[0]), s_col * std::tanh(out[1])};
}

namespace {

std::vector<std::size_t> shifted_lines(std::size_t extent, std::size_t k, double delta) {
    std::vector<long> base(k - 1);
    for (std::size_t j = 1; j < k; ++j) {
        base[j - 1] = std::lround(static_cast<double>(j * extent) / static_cast<double>(k));
    }
    long shift = std::lround(delta);
    // One shared shift keeps interior gaps intact; only the outer bands
    // can collapse, so clamp against the first and last baselines.
    const long lo = 1 - base.front();
    const long hi = static_cast<long>(extent) - 1 - base.back();
    shift = std::clamp(shift, lo, hi);
    std::vector<std::size_t> lines(k - 1);
    for (std::size_t j = 0; j + 1 < k; ++j) {
        lines[j] = static_cast<std::size_t>(base[j] + shift);
    }
    return lines;
}

}  // namespace

GridPartition build_partition(std::size_t rows, std::size_t cols, std::size_t k,
                              std::pair<double, double> bias) {
    if (k < 1 || k > 4) throw ShapeError("partition side count must be 1..4");
    if (rows < k || cols < k) {
        throw ShapeError("frame " + std::to_string(rows) + "×" + std::to_string(cols) +
                         " too small for a " + std::to_string(k) + "×" +
                         std::to_string(k) + " partition");
    }
    GridPartition p;
    p.k = k;
    p.rows = rows;
    p.cols = cols;
    if (k > 1) {
        p.row_lines = shifted_lines(rows, k, bias.first);
        p.col_lines = shifted_lines(cols, k, bias.second);
    }
    return p;
}

}  // namespace kpshift
