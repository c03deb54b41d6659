#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kpshift/grad.hpp"
#include "kpshift/head.hpp"
#include "kpshift/synth.hpp"

namespace kpshift {

struct TrainConfig {
    double lr = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch = 32;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    Mode mode = Mode::Hard;
    bool use_kpsem = true;
    std::size_t k = 2;          // partition lines per axis, regions = k*k
    std::size_t sets = 4;
    std::size_t embed_dim = 8;
    std::size_t kpsem_stage = 2;  // backbone stage whose maps feed the shifts
    double epsilon = 0.1;
    SoftConfig soft;
};

// Fused feature: per-channel global mean of the stage-2 volume, then the
// shift embedding when enabled. A single linear layer maps it to 4 logits.
struct Model {
    TinyBackbone backbone;
    bool use_kpsem = true;
    std::size_t kpsem_stage = 2;
    KpsemConfig kcfg;
    KpsemParams kpsem;
    LinearLayer classifier;
    std::size_t spatial_dim() const;
    std::size_t temporal_dim() const;
    std::size_t feature_dim() const;
    std::size_t param_count() const;
};

Model init_model(const TrainConfig& cfg, std::size_t clip_frames);

// Inference path: shifts always come from the argmax extractor, regardless
// of which mode trained the model.
Tensor model_features(const Model& m, const Tensor& clip);
Tensor model_logits(const Model& m, const Tensor& clip);

struct EvalResult {
    double accuracy = 0.0;
    std::array<double, 4> per_class{};
    std::array<std::array<std::size_t, 4>, 4> confusion{};  // [label][prediction]
    std::size_t total = 0;
};

EvalResult tally(const std::vector<int>& labels, const std::vector<int>& predictions);
EvalResult evaluate(const Model& m, const Dataset& ds);

struct SampleGrads {
    TinyBackbone backbone;
    KpsemGrads kpsem;  // input field unused by the optimizer
    LinearLayer classifier;
};

SampleGrads zero_sample_grads(const Model& m, const Tensor& clip);

// Cross-entropy of one sample through the training path (tape forward),
// accumulating into g. sample_loss evaluates the same path without grads.
double sample_loss_and_grads(const Model& m, Mode mode, const SoftConfig& soft,
                             const VideoSample& s, SampleGrads& g);
double sample_loss(const Model& m, Mode mode, const SoftConfig& soft, const VideoSample& s);

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double test_acc = 0.0;
    std::array<double, 4> per_class{};
};

struct TrainResult {
    Model model;
    std::vector<EpochMetrics> trace;
};

// Minibatch SGD with momentum and weight decay over the cross-entropy of
// the fused features. Gradients accumulate in a fixed sample order, so the
// run is bit-reproducible for a given seed on one thread. In hard mode the
// separation nets stay at their initial values.
TrainResult train(const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg);

std::string metrics_csv(const std::vector<EpochMetrics>& trace);

}  // namespace kpshift
