#pragma once

#include <cstddef>
#include <vector>

#include "kpshift/arese.hpp"
#include "kpshift/head.hpp"
#include "kpshift/partition.hpp"
#include "kpshift/tensor.hpp"

// Serial reference implementations, written as the plainest loops that
// satisfy each contract. Tests compare the parallel kernels against these;
// the benchmark times one against the other. Nothing here shares code with
// kpshift_core beyond the Tensor container.
namespace kpshift::ref {

Tensor softmax_axis(const Tensor& t, std::size_t axis);
MaxPoint region_reduce_max(const Tensor& frame, const RegionBounds& bounds);
double region_reduce_mean(const Tensor& frame, const RegionBounds& bounds);
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor conv_1x3_halve(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Five nested loops over (region, channel, frame, row, col).
KeyPointField extract_key_points(const Tensor& f,
                                 const std::vector<GridPartition>& partitions);

// The whole extractor set as one self-contained naive pass: its own bias
// MLP evaluation, partition arithmetic, extraction, softmaxes and
// reductions, sharing nothing with the kernel path.
Tensor arese_forward(const Tensor& f, const SeparationNet& net, const AreseConfig& cfg);

// Naive reshape → per-set linear → sum → conv chain → mean → flatten,
// built on the naive primitives above.
Tensor kpsem_forward(const Tensor& f, const KpsemParams& params, const KpsemConfig& cfg);

}  // namespace kpshift::ref
