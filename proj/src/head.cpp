#include "kpshift/head.hpp"

#include <cmath>
#include <string>

#include "kpshift/rng.hpp"

namespace kpshift {

std::size_t KpsemParams::param_count() const {
    std::size_t n = 0;
    for (const SeparationNet& net : nets) {
        n += net.w1.size() + net.b1.size() + net.w2.size() + net.b2.size();
    }
    for (const LinearLayer& e : embeddings) n += e.weight.size() + e.bias.size();
    return n + conv1_w.size() + conv1_b.size() + conv2_w.size() + conv2_b.size();
}

namespace {

void fill_uniform(Tensor& t, double bound, Rng& rng) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
}

}  // namespace

KpsemParams init_kpsem_params(std::size_t channels, const KpsemConfig& cfg,
                              std::uint64_t seed) {
    if (channels % 4 != 0) {
        throw ConfigError("channel count must be divisible by 4, got " +
                          std::to_string(channels));
    }
    if (cfg.embed_dim % 4 != 0 || cfg.embed_dim == 0) {
        throw ConfigError("embedding width must be a positive multiple of 4, got " +
                          std::to_string(cfg.embed_dim));
    }
    if (cfg.sets == 0) throw ConfigError("need at least one extractor set");
    if (cfg.k < 1 || cfg.k > 4) {
        throw ConfigError("partition side count must be 1..4, got " +
                          std::to_string(cfg.k));
    }

    Rng rng(seed);
    KpsemParams p;
    const std::size_t k2 = cfg.k * cfg.k;
    for (std::size_t g = 0; g < cfg.sets; ++g) {
        SeparationNet net = make_separation_net(channels, cfg.k);
        fill_uniform(net.w1, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
        fill_uniform(net.b1, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
        fill_uniform(net.w2, 1.0 / std::sqrt(static_cast<double>(net.w1.extent(0))), rng);
        fill_uniform(net.b2, 1.0 / std::sqrt(static_cast<double>(net.w1.extent(0))), rng);
        p.nets.push_back(std::move(net));
    }
    for (std::size_t g = 0; g < cfg.sets; ++g) {
        LinearLayer e;
        e.weight = Tensor({cfg.embed_dim, k2 * 2});
        e.bias = Tensor({cfg.embed_dim});
        const double bound = 1.0 / std::sqrt(static_cast<double>(k2 * 2));
        fill_uniform(e.weight, bound, rng);
        fill_uniform(e.bias, bound, rng);
        p.embeddings.push_back(std::move(e));
    }
    p.conv1_w = Tensor({channels / 2, channels, 1, 3});
    p.conv1_b = Tensor({channels / 2});
    const double b1 = 1.0 / std::sqrt(static_cast<double>(channels * 3));
    fill_uniform(p.conv1_w, b1, rng);
    fill_uniform(p.conv1_b, b1, rng);
    p.conv2_w = Tensor({channels / 4, channels / 2, 1, 3});
    p.conv2_b = Tensor({channels / 4});
    const double b2 = 1.0 / std::sqrt(static_cast<double>(channels / 2 * 3));
    fill_uniform(p.conv2_w, b2, rng);
    fill_uniform(p.conv2_b, b2, rng);
    return p;
}

Tensor reshape_rkps(const Tensor& rkps) {
    if (rkps.rank() != 4 || rkps.extent(3) != 2) {
        throw ShapeError("reshape_rkps: input must be K×C×(T-1)×2");
    }
    const std::size_t k = rkps.extent(0), c = rkps.extent(1), steps = rkps.extent(2);
    Tensor out({c, steps, k * 2});
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < steps; ++i) {
                const std::size_t src = ((r * c + ch) * steps + i) * 2;
                const std::size_t dst = (ch * steps + i) * (k * 2) + r * 2;
                out[dst + 0] = rkps[src + 0];
                out[dst + 1] = rkps[src + 1];
            }
        }
    }
    return out;
}

Tensor multiset_embed(const std::vector<Tensor>& rkps_list, const KpsemParams& params) {
    if (rkps_list.empty()) throw ShapeError("multiset_embed: empty set list");
    if (rkps_list.size() != params.embeddings.size()) {
        throw ShapeError("multiset_embed: " + std::to_string(rkps_list.size()) +
                         " tensors for " + std::to_string(params.embeddings.size()) +
                         " embeddings");
    }
    Tensor sum;
    for (std::size_t g = 0; g < rkps_list.size(); ++g) {
        if (!rkps_list[g].same_shape(rkps_list.front())) {
            throw ShapeError("multiset_embed: set " + std::to_string(g) +
                             " has mismatched extents");
        }
        Tensor e = linear_forward(reshape_rkps(rkps_list[g]),
                                  params.embeddings[g].weight, params.embeddings[g].bias);
        if (g == 0) {
            sum = std::move(e);
        } else {
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e[i];
        }
    }
    return sum;
}

Tensor reduce_dimensions(const Tensor& e, const KpsemParams& params, bool use_relu) {
    if (e.rank() != 3) throw ShapeError("reduce_dimensions: input must be C×(T-1)×d_e");
    const std::size_t c = e.extent(0), steps = e.extent(1), d = e.extent(2);
    if (c % 4 != 0) {
        throw ConfigError("reduce_dimensions: channels must be divisible by 4, got " +
                          std::to_string(c));
    }
    if (d % 4 != 0) {
        throw ConfigError("reduce_dimensions: embedding width must be divisible by 4, got " +
                          std::to_string(d));
    }
    Tensor h = conv_1x3_halve(e, params.conv1_w, params.conv1_b);
    if (use_relu) {
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = relu(h[i]);
    }
    Tensor h2 = conv_1x3_halve(h, params.conv2_w, params.conv2_b);
    if (use_relu) {
        for (std::size_t i = 0; i < h2.size(); ++i) h2[i] = relu(h2[i]);
    }
    const std::size_t c4 = h2.extent(0), d4 = h2.extent(2);
    Tensor out({c4 * steps});
    for (std::size_t ch = 0; ch < c4; ++ch) {
        for (std::size_t i = 0; i < steps; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d4; ++j) acc += h2[(ch * steps + i) * d4 + j];
            out[ch * steps + i] = acc / static_cast<double>(d4);
        }
    }
    return out;
}

Tensor kpsem_forward(const Tensor& f, const KpsemParams& params, const KpsemConfig& cfg) {
    if (f.rank() != 4) throw ShapeError("kpsem_forward: input must be C×T×H×W");
    if (params.nets.size() != cfg.sets || params.embeddings.size() != cfg.sets) {
        throw ShapeError("kpsem_forward: params hold " + std::to_string(params.nets.size()) +
                         " sets, config wants " + std::to_string(cfg.sets));
    }
    std::vector<Tensor> rkps(cfg.sets);
    const AreseConfig acfg = cfg.arese();
    for (std::size_t g = 0; g < cfg.sets; ++g) {
        rkps[g] = arese_forward(f, params.nets[g], acfg);
    }
    return reduce_dimensions(multiset_embed(rkps, params), params, cfg.reduction_relu);
}

Tensor fuse_features(const Tensor& spatial, const Tensor& temporal) {
    if (spatial.rank() != 1 || spatial.size() == 0) {
        throw ConfigError("fuse_features: spatial block must be a non-empty vector");
    }
    if (temporal.rank() != 1 || temporal.size() == 0) {
        throw ConfigError("fuse_features: temporal block must be a non-empty vector");
    }
    Tensor out({spatial.size() + temporal.size()});
    for (std::size_t i = 0; i < spatial.size(); ++i) out[i] = spatial[i];
    for (std::size_t i = 0; i < temporal.size(); ++i) out[spatial.size() + i] = temporal[i];
    return out;
}

}  // namespace kpshift
