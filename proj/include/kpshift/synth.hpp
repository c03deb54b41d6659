#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kpshift/rng.hpp"
#include "kpshift/tensor.hpp"

namespace kpshift {

// Four motion classes over a single Gaussian blob. The blob travels along
// one axis at a fixed speed; the other coordinate is static per video but
// drawn from the same start-plus-step mixture the moving axis sweeps out,
// so the position density pooled over frames is identical for all four
// classes. Only the motion carries label information.
inline constexpr std::array<const char*, 4> kClassNames{"up", "down", "left", "right"};

struct SyntheticSpec {
    std::size_t frames = 8;
    std::size_t size = 32;
    double sigma = 2.0;
    double peak = 1.0;
    double speed = 2.0;
    double noise = 0.05;  // additive, uniform in [-noise, noise]
    std::size_t margin = 2;
};

struct VideoSample {
    Tensor clip;  // 1×T×size×size
    int label = 0;
};

using Dataset = std::vector<VideoSample>;

struct SyntheticSplits {
    Dataset train;
    Dataset test;
};

VideoSample synth_sample(const SyntheticSpec& spec, int label, Rng& rng);

// Labels cycle 0..3, so any multiple of 4 is exactly balanced.
Dataset generate_dataset(const SyntheticSpec& spec, std::size_t count, std::uint64_t seed);

// Train stream seeds at 2*seed, test at 2*seed+1: disjoint for every seed.
SyntheticSplits generate_splits(const SyntheticSpec& spec, std::size_t n_train,
                                std::size_t n_test, std::uint64_t seed);

// Mean over all frames and `count` fresh samples of one class.
Tensor pooled_mean_image(const SyntheticSpec& spec, int label, std::size_t count,
                         std::uint64_t seed);

struct ConvLayer {
    Tensor weight;  // C_out×C_in×3×3
    Tensor bias;
};

// Two 3×3 stride-2 pad-1 relu stages, 1→8→16 channels, applied per frame.
struct TinyBackbone {
    ConvLayer stage1;
    ConvLayer stage2;
    std::size_t param_count() const;
};

TinyBackbone init_backbone(std::uint64_t seed);

std::size_t conv3x3_out_extent(std::size_t in);
Tensor conv3x3_s2(const Tensor& x, const ConvLayer& layer);
// Accumulates into dlayer (and dx when given).
void conv3x3_s2_backward(const Tensor& x, const ConvLayer& layer, const Tensor& dy,
                         Tensor* dx, ConvLayer& dlayer);

struct BackboneTape {
    std::vector<Tensor> h1pre;  // per frame, 8×16×16
    std::vector<Tensor> h2pre;  // per frame, 16×8×8
};

// clip 1×T×S×S → stage-2 feature volume 16×T×(S/4)×(S/4). When stage1_out
// is given it receives the post-relu stage-1 volume 8×T×(S/2)×(S/2).
Tensor backbone_forward(const TinyBackbone& bb, const Tensor& clip, BackboneTape* tape,
                        Tensor* stage1_out = nullptr);

// df2 is the stage-2 adjoint; df1_extra, when given, is added to the
// stage-1 (post-relu) adjoint before stage 1 runs backward.
void backbone_backward(const TinyBackbone& bb, const Tensor& clip, const BackboneTape& tape,
                       const Tensor& df2, const Tensor* df1_extra, TinyBackbone& grads);

}  // namespace kpshift
