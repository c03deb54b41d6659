#pragma once

#include <cstdint>
#include <string>

#include "kpshift/head.hpp"
#include "kpshift/train.hpp"

namespace kpshift {

// Flat key=value surface shared by every command. K counts regions per
// frame, so the grid side is its square root.
struct RunConfig {
    std::size_t K = 4;
    std::size_t G = 4;
    std::size_t embed_dim = 8;
    double epsilon = 0.1;
    double soft_tau_point = 0.5;
    double soft_tau_region = 0.5;
    bool normalize_shifts = false;
    std::uint64_t seed = 1;

    // training-only knobs
    double lr = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch = 32;
    std::size_t epochs = 30;
    std::string mode = "hard";
    bool use_kpsem = true;
    std::size_t position = 2;
    std::size_t train_samples = 2000;
    std::size_t test_samples = 400;
    double noise = 0.05;
};

std::size_t k_from_regions(std::size_t K);

// '#' starts a comment, blank lines are skipped, unknown keys and bad
// values raise ConfigError naming the offending line.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

void validate_run_config(const RunConfig& cfg);

// Canonical text that parses back to the same config.
std::string echo_run_config(const RunConfig& cfg);

KpsemConfig kpsem_config(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
SoftConfig soft_config(const RunConfig& cfg);

}  // namespace kpshift
