#include "kpshift/synth.hpp"

#include <cmath>
#include <cstring>

#include "kpshift/errors.hpp"

namespace kpshift {

namespace {

struct MotionSpec {
    bool on_rows;    // true: row coordinate moves
    double step;     // signed displacement per frame
};

MotionSpec motion_for_label(int label) {
    switch (label) {
        case 0: return {true, -1.0};   // up
        case 1: return {true, +1.0};   // down
        case 2: return {false, -1.0};  // left
        case 3: return {false, +1.0};  // right
        default: throw ConfigError("label must be in [0, 3]");
    }
}

void validate_spec(const SyntheticSpec& spec) {
    if (spec.frames == 0) throw ConfigError("frames must be positive");
    if (spec.size < 2 * spec.margin + 2) throw ConfigError("frame size too small for margin");
    if (spec.sigma <= 0.0) throw ConfigError("sigma must be positive");
    if (spec.speed <= 0.0) throw ConfigError("speed must be positive");
    if (spec.noise < 0.0) throw ConfigError("noise amplitude must be non-negative");
    const double traversal = spec.speed * static_cast<double>(spec.frames - 1);
    const double lo = static_cast<double>(spec.margin);
    const double hi = static_cast<double>(spec.size - 1 - spec.margin);
    if (hi - traversal < lo) throw ConfigError("motion does not fit inside the margins");
}

}  // namespace

VideoSample synth_sample(const SyntheticSpec& spec, int label, Rng& rng) {
    validate_spec(spec);
    const MotionSpec motion = motion_for_label(label);
    const std::size_t side = spec.size;
    const std::size_t frames = spec.frames;
    const double traversal = spec.speed * static_cast<double>(frames - 1);
    const double lo = static_cast<double>(spec.margin);
    const double hi = static_cast<double>(side - 1 - spec.margin);

    // Moving coordinate starts so the whole sweep stays inside the margins;
    // the static coordinate gets an equally distributed start plus a random
    // number of speed-sized steps, matching the pooled sweep density.
    const double start_lo = motion.step > 0.0 ? lo : lo + traversal;
    const double start_hi = motion.step > 0.0 ? hi - traversal : hi;
    const double moving0 = rng.uniform(start_lo, start_hi);
    const double static0 = rng.uniform(lo, hi - traversal);
    const double fixed = static0 + spec.speed * static_cast<double>(rng.below(frames));

    VideoSample out;
    out.label = label;
    out.clip = Tensor::zeros({1, frames, side, side});
    std::vector<double> erow(side), ecol(side);
    const double inv2s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
    double* data = out.clip.data();
    for (std::size_t t = 0; t < frames; ++t) {
        const double shift = motion.step * spec.speed * static_cast<double>(t);
        const double r = motion.on_rows ? moving0 + shift : fixed;
        const double c = motion.on_rows ? fixed : moving0 + shift;
        for (std::size_t y = 0; y < side; ++y) {
            const double dy = static_cast<double>(y) - r;
            erow[y] = std::exp(-dy * dy * inv2s2);
        }
        for (std::size_t x = 0; x < side; ++x) {
            const double dx = static_cast<double>(x) - c;
            ecol[x] = std::exp(-dx * dx * inv2s2);
        }
        double* frame = data + t * side * side;
        if (spec.noise > 0.0) {
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x)
                    frame[y * side + x] =
                        spec.peak * erow[y] * ecol[x] + rng.uniform(-spec.noise, spec.noise);
        } else {
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x)
                    frame[y * side + x] = spec.peak * erow[y] * ecol[x];
        }
    }
    return out;
}

Dataset generate_dataset(const SyntheticSpec& spec, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    Dataset out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(synth_sample(spec, static_cast<int>(i % 4), rng));
    return out;
}

SyntheticSplits generate_splits(const SyntheticSpec& spec, std::size_t n_train,
                                std::size_t n_test, std::uint64_t seed) {
    SyntheticSplits splits;
    splits.train = generate_dataset(spec, n_train, 2 * seed);
    splits.test = generate_dataset(spec, n_test, 2 * seed + 1);
    return splits;
}

Tensor pooled_mean_image(const SyntheticSpec& spec, int label, std::size_t count,
                         std::uint64_t seed) {
    if (count == 0) throw ConfigError("mean image needs at least one sample");
    Rng rng(seed);
    Tensor acc = Tensor::zeros({spec.size, spec.size});
    for (std::size_t i = 0; i < count; ++i) {
        const VideoSample sample = synth_sample(spec, label, rng);
        const double* src = sample.clip.data();
        const std::size_t plane = spec.size * spec.size;
        for (std::size_t t = 0; t < spec.frames; ++t)
            for (std::size_t p = 0; p < plane; ++p) acc.data()[p] += src[t * plane + p];
    }
    const double scale = 1.0 / (static_cast<double>(count) * static_cast<double>(spec.frames));
    for (std::size_t p = 0; p < acc.size(); ++p) acc.data()[p] *= scale;
    return acc;
}

std::size_t TinyBackbone::param_count() const {
    return stage1.weight.size() + stage1.bias.size() + stage2.weight.size() +
           stage2.bias.size();
}

namespace {

ConvLayer init_conv(std::size_t c_out, std::size_t c_in, Rng& rng) {
    ConvLayer layer;
    layer.weight = Tensor::zeros({c_out, c_in, 3, 3});
    layer.bias = Tensor::zeros({c_out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * 9.0);
    for (std::size_t i = 0; i < layer.weight.size(); ++i)
        layer.weight.data()[i] = rng.uniform(-bound, bound);
    for (std::size_t i = 0; i < layer.bias.size(); ++i)
        layer.bias.data()[i] = rng.uniform(-bound, bound);
    return layer;
}

}  // namespace

TinyBackbone init_backbone(std::uint64_t seed) {
    Rng rng(seed);
    TinyBackbone bb;
    bb.stage1 = init_conv(8, 1, rng);
    bb.stage2 = init_conv(16, 8, rng);
    return bb;
}

std::size_t conv3x3_out_extent(std::size_t in) { return (in - 1) / 2 + 1; }

Tensor conv3x3_s2(const Tensor& x, const ConvLayer& layer) {
    if (x.rank() != 3) throw ShapeError("conv input must be rank 3");
    const std::size_t c_out = layer.weight.extent(0);
    const std::size_t c_in = layer.weight.extent(1);
    if (x.extent(0) != c_in) throw ShapeError("conv input channels mismatch");
    const std::size_t h = x.extent(1), w = x.extent(2);
    const std::size_t oh = conv3x3_out_extent(h), ow = conv3x3_out_extent(w);
    Tensor out = Tensor::zeros({c_out, oh, ow});
    const double* xd = x.data();
    const double* wd = layer.weight.data();
    double* od = out.data();
    for (std::size_t co = 0; co < c_out; ++co) {
        const double bias = layer.bias.data()[co];
        for (std::size_t j = 0; j < oh; ++j) {
            for (std::size_t i = 0; i < ow; ++i) {
                double acc = bias;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const double* plane = xd + ci * h * w;
                    const double* ker = wd + (co * c_in + ci) * 9;
                    for (std::size_t ty = 0; ty < 3; ++ty) {
                        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(2 * j + ty) - 1;
                        if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
                        const double* row = plane + static_cast<std::size_t>(y) * w;
                        for (std::size_t tx = 0; tx < 3; ++tx) {
                            const std::ptrdiff_t xx =
                                static_cast<std::ptrdiff_t>(2 * i + tx) - 1;
                            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
                            acc += ker[ty * 3 + tx] * row[xx];
                        }
                    }
                }
                od[(co * oh + j) * ow + i] = acc;
            }
        }
    }
    return out;
}

void conv3x3_s2_backward(const Tensor& x, const ConvLayer& layer, const Tensor& dy,
                         Tensor* dx, ConvLayer& dlayer) {
    const std::size_t c_out = layer.weight.extent(0);
    const std::size_t c_in = layer.weight.extent(1);
    const std::size_t h = x.extent(1), w = x.extent(2);
    const std::size_t oh = conv3x3_out_extent(h), ow = conv3x3_out_extent(w);
    if (dy.rank() != 3 || dy.extent(0) != c_out || dy.extent(1) != oh || dy.extent(2) != ow)
        throw ShapeError("conv upstream gradient shape mismatch");
    const double* xd = x.data();
    const double* wd = layer.weight.data();
    const double* gd = dy.data();
    double* dwd = dlayer.weight.data();
    double* dxd = dx ? dx->data() : nullptr;
    for (std::size_t co = 0; co < c_out; ++co) {
        for (std::size_t j = 0; j < oh; ++j) {
            for (std::size_t i = 0; i < ow; ++i) {
                const double g = gd[(co * oh + j) * ow + i];
                if (g == 0.0) continue;
                dlayer.bias.data()[co] += g;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const std::size_t plane = ci * h * w;
                    const std::size_t ker = (co * c_in + ci) * 9;
                    for (std::size_t ty = 0; ty < 3; ++ty) {
                        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(2 * j + ty) - 1;
                        if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
                        const std::size_t row = plane + static_cast<std::size_t>(y) * w;
                        for (std::size_t tx = 0; tx < 3; ++tx) {
                            const std::ptrdiff_t xx =
                                static_cast<std::ptrdiff_t>(2 * i + tx) - 1;
                            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
                            const std::size_t at = row + static_cast<std::size_t>(xx);
                            dwd[ker + ty * 3 + tx] += g * xd[at];
                            if (dxd) dxd[at] += g * wd[ker + ty * 3 + tx];
                        }
                    }
                }
            }
        }
    }
}

namespace {

Tensor clip_frame(const Tensor& clip, std::size_t t) {
    const std::size_t c = clip.extent(0), h = clip.extent(2), w = clip.extent(3);
    Tensor frame = Tensor::zeros({c, h, w});
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) frame.at({ci, y, x}) = clip.at({ci, t, y, x});
    return frame;
}

Tensor relu_copy(const Tensor& t) {
    Tensor out = t;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out.data()[i] < 0.0) out.data()[i] = 0.0;
    return out;
}

}  // namespace

Tensor backbone_forward(const TinyBackbone& bb, const Tensor& clip, BackboneTape* tape,
                        Tensor* stage1_out) {
    if (clip.rank() != 4) throw ShapeError("clip must be rank 4");
    if (clip.extent(0) != bb.stage1.weight.extent(1))
        throw ShapeError("clip channels do not match the backbone");
    const std::size_t frames = clip.extent(1);
    const std::size_t h1 = conv3x3_out_extent(clip.extent(2));
    const std::size_t w1 = conv3x3_out_extent(clip.extent(3));
    const std::size_t h2 = conv3x3_out_extent(h1), w2 = conv3x3_out_extent(w1);
    const std::size_t c1 = bb.stage1.weight.extent(0);
    const std::size_t c2 = bb.stage2.weight.extent(0);
    Tensor out = Tensor::zeros({c2, frames, h2, w2});
    if (stage1_out) *stage1_out = Tensor::zeros({c1, frames, h1, w1});
    if (tape) {
        tape->h1pre.assign(frames, Tensor());
        tape->h2pre.assign(frames, Tensor());
    }
    for (std::size_t t = 0; t < frames; ++t) {
        const Tensor frame = clip_frame(clip, t);
        Tensor pre1 = conv3x3_s2(frame, bb.stage1);
        Tensor act1 = relu_copy(pre1);
        Tensor pre2 = conv3x3_s2(act1, bb.stage2);
        if (stage1_out)
            for (std::size_t c = 0; c < c1; ++c)
                for (std::size_t y = 0; y < h1; ++y)
                    for (std::size_t x = 0; x < w1; ++x)
                        stage1_out->at({c, t, y, x}) = act1.at({c, y, x});
        for (std::size_t c = 0; c < c2; ++c)
            for (std::size_t y = 0; y < h2; ++y)
                for (std::size_t x = 0; x < w2; ++x) {
                    const double v = pre2.at({c, y, x});
                    out.at({c, t, y, x}) = v > 0.0 ? v : 0.0;
                }
        if (tape) {
            tape->h1pre[t] = std::move(pre1);
            tape->h2pre[t] = std::move(pre2);
        }
    }
    return out;
}

void backbone_backward(const TinyBackbone& bb, const Tensor& clip, const BackboneTape& tape,
                       const Tensor& df2, const Tensor* df1_extra, TinyBackbone& grads) {
    const std::size_t frames = clip.extent(1);
    if (tape.h1pre.size() != frames || tape.h2pre.size() != frames)
        throw ShapeError("backbone tape does not match the clip");
    for (std::size_t t = 0; t < frames; ++t) {
        const Tensor& pre1 = tape.h1pre[t];
        const Tensor& pre2 = tape.h2pre[t];
        const std::size_t c1 = pre1.extent(0), ha = pre1.extent(1), wa = pre1.extent(2);
        const std::size_t c2 = pre2.extent(0), hb = pre2.extent(1), wb = pre2.extent(2);
        Tensor dpre2 = Tensor::zeros({c2, hb, wb});
        for (std::size_t c = 0; c < c2; ++c)
            for (std::size_t y = 0; y < hb; ++y)
                for (std::size_t x = 0; x < wb; ++x)
                    if (pre2.at({c, y, x}) > 0.0) dpre2.at({c, y, x}) = df2.at({c, t, y, x});
        const Tensor act1 = relu_copy(pre1);
        Tensor dact1 = Tensor::zeros({c1, ha, wa});
        conv3x3_s2_backward(act1, bb.stage2, dpre2, &dact1, grads.stage2);
        if (df1_extra)
            for (std::size_t c = 0; c < c1; ++c)
                for (std::size_t y = 0; y < ha; ++y)
                    for (std::size_t x = 0; x < wa; ++x)
                        dact1.at({c, y, x}) += df1_extra->at({c, t, y, x});
        for (std::size_t i = 0; i < dact1.size(); ++i)
            if (pre1.data()[i] <= 0.0) dact1.data()[i] = 0.0;
        const Tensor frame = clip_frame(clip, t);
        conv3x3_s2_backward(frame, bb.stage1, dact1, nullptr, grads.stage1);
    }
}

}  // namespace kpshift
