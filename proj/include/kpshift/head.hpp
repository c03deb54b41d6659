#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kpshift/arese.hpp"
#include "kpshift/partition.hpp"
#include "kpshift/tensor.hpp"

namespace kpshift {

struct LinearLayer {
    Tensor weight;  // D_out×D_in
    Tensor bias;    // D_out
};

// Full module configuration: sets is G, embed_dim is d_e (divisible by 4
// so two stride-2 halvings land on d_e/4). reduction_relu toggles the
// nonlinearity between the reduction convs.
struct KpsemConfig {
    std::size_t k = 2;
    std::size_t sets = 4;
    std::size_t embed_dim = 8;
    double epsilon = 0.1;
    bool normalize_shifts = false;
    bool reduction_relu = true;

    AreseConfig arese() const { return AreseConfig{k, epsilon, normalize_shifts}; }
};

// One separation net and one embedding per set, plus the shared reduction
// convs. channels (C) must be divisible by 4.
struct KpsemParams {
    std::vector<SeparationNet> nets;
    std::vector<LinearLayer> embeddings;  // weight d_e×(K·2)
    Tensor conv1_w, conv1_b;              // (C/2)×C×1×3, C/2
    Tensor conv2_w, conv2_b;              // (C/4)×(C/2)×1×3, C/4

    std::size_t channels() const { return conv1_w.extent(1); }
    std::size_t param_count() const;
};

// Uniform ±1/sqrt(fan_in) for every layer, drawn in a fixed documented
// order, so one seed pins every parameter.
KpsemParams init_kpsem_params(std::size_t channels, const KpsemConfig& cfg,
                              std::uint64_t seed);

// K×C×(T-1)×2 → C×(T-1)×(K·2), region-major then (row, col).
Tensor reshape_rkps(const Tensor& rkps);

// Each set's RKPS through its own linear layer, summed over sets.
Tensor multiset_embed(const std::vector<Tensor>& rkps_list, const KpsemParams& params);

// e as C channels over the (T-1)×d_e plane: conv halve ×2 (relu after
// each when enabled), mean over the embedding axis, flatten to
// (C/4)·(T-1) channel-major.
Tensor reduce_dimensions(const Tensor& e, const KpsemParams& params, bool use_relu = true);

Tensor kpsem_forward(const Tensor& f, const KpsemParams& params, const KpsemConfig& cfg);

// Concatenation, spatial block first.
Tensor fuse_features(const Tensor& spatial, const Tensor& temporal);

}  // namespace kpshift
