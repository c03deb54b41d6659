#pragma once

#include <cstddef>
#include <vector>

#include "kpshift/partition.hpp"
#include "kpshift/tensor.hpp"

namespace kpshift {

// One extractor set. k is the partition side count, so K = k² regions.
// epsilon is the affinity stabilizer in the shift-weight reciprocal.
// normalize_shifts divides shift components by (H-1, W-1).
struct AreseConfig {
    std::size_t k = 2;
    double epsilon = 0.1;
    bool normalize_shifts = false;
};

// Per-region per-channel per-frame maxima. coords is K×C×T×2 holding
// exact integer (row, col) in full-frame space; values is K×C×T and
// values[k,c,t] equals the feature at coords[k,c,t].
struct KeyPointField {
    Tensor coords;
    Tensor values;

    std::size_t regions() const { return values.extent(0); }
    std::size_t channels() const { return values.extent(1); }
    std::size_t frames() const { return values.extent(2); }
};

// Every intermediate of one extractor set, kept for tests, gradients and
// visualization.
struct AreseStages {
    std::vector<GridPartition> partitions;  // one per frame
    KeyPointField keypoints;
    Tensor deltas;            // K_r×K_n×C×(T-1)×2
    Tensor shift_weights;     // K_r×K_n×C×(T-1)
    Tensor shifts;            // K×C×(T-1)×2 (normalized when configured)
    Tensor region_means;      // K×C×T
    Tensor pair_means;        // K×C×(T-1)
    Tensor regional_weights;  // K×C×(T-1)
    Tensor rkps;              // K×C×(T-1)×2
};

// One partition per frame of a C×T×H×W clip, each from the frame's own
// adaptive bias.
std::vector<GridPartition> partitions_for_clip(const Tensor& f,
                                               const SeparationNet& net,
                                               std::size_t k);

KeyPointField extract_key_points(const Tensor& f,
                                 const std::vector<GridPartition>& partitions);

// deltas[α,β,c,i] = coords[β,c,i+1] − coords[α,c,i], componentwise.
Tensor location_differences(const KeyPointField& kp);

// softmax over the next-frame region axis of 1/(|V[α,c,i] − V[β,c,i+1]| + ε).
Tensor shift_weights(const KeyPointField& kp, double epsilon);

// S[α,c,i] = Σ_β W[α,β,c,i] · Δ[α,β,c,i], fixed β order.
Tensor key_point_shifts(const Tensor& deltas, const Tensor& weights);

// means[k,c,t] = mean of frame (c,t) over region k of frame t's partition.
Tensor region_frame_means(const Tensor& f,
                          const std::vector<GridPartition>& partitions);

// out[k,c,i] = (means[k,c,i] + means[k,c,i+1]) / 2.
Tensor pair_average(const Tensor& means);

// softmax over the region axis of pair-averaged region means.
Tensor regional_weights_from_means(const Tensor& pair_means);
Tensor regional_weights(const Tensor& f, const std::vector<GridPartition>& partitions);

// rkps[k,c,i,·] = W_R[k,c,i] · S[k,c,i,·].
Tensor compose_rkps(const Tensor& shifts, const Tensor& regional);

AreseStages arese_run(const Tensor& f, const std::vector<GridPartition>& partitions,
                      const AreseConfig& cfg);
AreseStages arese_run(const Tensor& f, const SeparationNet& net, const AreseConfig& cfg);
Tensor arese_forward(const Tensor& f, const SeparationNet& net, const AreseConfig& cfg);

}  // namespace kpshift
