#include "kpshift/grad.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "kpshift/arese.hpp"

namespace kpshift {

void linear_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx,
                     Tensor& dweight, Tensor& dbias) {
    if (weight.rank() != 2) throw ShapeError("linear_backward: weight must be rank 2");
    const std::size_t d_in = weight.extent(1), d_out = weight.extent(0);
    if (x.rank() < 1 || x.extent(x.rank() - 1) != d_in) {
        throw ShapeError("linear_backward: input trailing extent mismatch");
    }
    if (dy.rank() != x.rank() || dy.extent(dy.rank() - 1) != d_out ||
        dy.size() / d_out != x.size() / d_in) {
        throw ShapeError("linear_backward: output adjoint extents mismatch");
    }
    if (!dweight.same_shape(weight) || dbias.size() != d_out) {
        throw ShapeError("linear_backward: gradient buffers have wrong extents");
    }
    const std::size_t rows = x.size() / d_in;
    const double* xp = x.data();
    const double* wp = weight.data();
    const double* gp = dy.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xp + r * d_in;
        const double* gr = gp + r * d_out;
        for (std::size_t j = 0; j < d_out; ++j) {
            const double g = gr[j];
            if (g == 0.0) continue;
            dbias[j] += g;
            double* dwr = dweight.data() + j * d_in;
            for (std::size_t i = 0; i < d_in; ++i) dwr[i] += g * xr[i];
            if (dx) {
                const double* wr = wp + j * d_in;
                double* dxr = dx->data() + r * d_in;
                for (std::size_t i = 0; i < d_in; ++i) dxr[i] += g * wr[i];
            }
        }
    }
}

void conv_1x3_halve_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                             Tensor* dx, Tensor& dweight, Tensor& dbias) {
    if (x.rank() != 3 || dy.rank() != 3) {
        throw ShapeError("conv_1x3_halve_backward: tensors must be rank 3");
    }
    const std::size_t c_in = x.extent(0), a = x.extent(1), b = x.extent(2);
    const std::size_t c_out = c_in / 2;
    const std::size_t b_out = conv_1x3_out_extent(b);
    if (dy.extent(0) != c_out || dy.extent(1) != a || dy.extent(2) != b_out) {
        throw ShapeError("conv_1x3_halve_backward: output adjoint extents mismatch");
    }
    if (!dweight.same_shape(weight) || dbias.size() != c_out) {
        throw ShapeError("conv_1x3_halve_backward: gradient buffers have wrong extents");
    }
    const double* xp = x.data();
    const double* wp = weight.data();
    const double* gp = dy.data();
    for (std::size_t co = 0; co < c_out; ++co) {
        for (std::size_t r = 0; r < a; ++r) {
            for (std::size_t j = 0; j < b_out; ++j) {
                const double g = gp[(co * a + r) * b_out + j];
                if (g == 0.0) continue;
                dbias[co] += g;
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const double* row = xp + (ci * a + r) * b;
                    const double* w3 = wp + (co * c_in + ci) * 3;
                    double* dw3 = dweight.data() + (co * c_in + ci) * 3;
                    for (std::size_t tap = 0; tap < 3; ++tap) {
                        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(2 * j + tap) - 1;
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(b)) continue;
                        dw3[tap] += g * row[src];
                        if (dx) dx->data()[(ci * a + r) * b + src] += g * w3[tap];
                    }
                }
            }
        }
    }
}

Tensor softmax_backward_axis(const Tensor& s, const Tensor& ds, std::size_t axis) {
    if (!s.same_shape(ds)) throw ShapeError("softmax_backward_axis: extents mismatch");
    if (axis >= s.rank()) throw ShapeError("softmax_backward_axis: axis out of range");
    const std::size_t n = s.extent(axis);
    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < s.rank(); ++a) inner *= s.extent(a);
    const std::size_t slices = s.size() / n;
    Tensor out(s.dims());
    const double* sp = s.data();
    const double* dp = ds.data();
    double* op = out.data();
    for (std::size_t sl = 0; sl < slices; ++sl) {
        const std::size_t o = sl / inner, i = sl % inner;
        const std::size_t base = o * n * inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += sp[base + j * inner] * dp[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
            op[base + j * inner] = sp[base + j * inner] * (dp[base + j * inner] - dot);
        }
    }
    return out;
}

KpsemGrads zero_grads_like(const KpsemParams& params, const Tensor& input_shape) {
    KpsemGrads g;
    for (const SeparationNet& net : params.nets) {
        SeparationNet z;
        z.k = net.k;
        z.w1 = Tensor(net.w1.dims());
        z.b1 = Tensor(net.b1.dims());
        z.w2 = Tensor(net.w2.dims());
        z.b2 = Tensor(net.b2.dims());
        g.nets.push_back(std::move(z));
    }
    for (const LinearLayer& e : params.embeddings) {
        LinearLayer z;
        z.weight = Tensor(e.weight.dims());
        z.bias = Tensor(e.bias.dims());
        g.embeddings.push_back(std::move(z));
    }
    g.conv1_w = Tensor(params.conv1_w.dims());
    g.conv1_b = Tensor(params.conv1_b.dims());
    g.conv2_w = Tensor(params.conv2_w.dims());
    g.conv2_b = Tensor(params.conv2_b.dims());
    g.input = Tensor(input_shape.dims());
    return g;
}

namespace {

// Builds every stage after the key-point field; the field and the region
// means must already sit in the tape. Mirrors the inference path op for op
// so the hard tape reproduces it bit for bit.
void downstream_forward(const Tensor& f, const AreseConfig& acfg, SetTape& st) {
    KeyPointField kp;
    kp.coords = st.coords;
    kp.values = st.values;
    st.deltas = location_differences(kp);
    st.shift_weights = shift_weights(kp, acfg.epsilon);
    st.shifts_raw = key_point_shifts(st.deltas, st.shift_weights);
    st.shifts = st.shifts_raw;
    if (acfg.normalize_shifts) {
        const double dr = static_cast<double>(std::max<std::size_t>(1, f.extent(2) - 1));
        const double dc = static_cast<double>(std::max<std::size_t>(1, f.extent(3) - 1));
        for (std::size_t i = 0; i < st.shifts.size(); i += 2) {
            st.shifts[i] /= dr;
            st.shifts[i + 1] /= dc;
        }
    }
    st.pair_means = pair_average(st.region_means);
    st.regional_weights = regional_weights_from_means(st.pair_means);
    st.rkps = compose_rkps(st.shifts, st.regional_weights);
}

void hard_set_forward(const Tensor& f, const SeparationNet& net, const AreseConfig& acfg,
                      SetTape& st) {
    st.partitions = partitions_for_clip(f, net, acfg.k);
    KeyPointField kp = extract_key_points(f, st.partitions);
    st.coords = std::move(kp.coords);
    st.values = std::move(kp.values);
    st.region_means = region_frame_means(f, st.partitions);
    downstream_forward(f, acfg, st);
}

// Adjoints of the downstream stages, stopping at the key-point field and
// the region means. Works for both modes; the caller routes the three
// outputs back to the input (and, in soft mode, the separation net).
void downstream_backward(const SetTape& st, const AreseConfig& acfg, std::size_t height,
                         std::size_t width, const Tensor& drkps, Tensor& dcoords,
                         Tensor& dvalues, Tensor& dmeans) {
    const std::size_t k = st.rkps.extent(0), c = st.rkps.extent(1);
    const std::size_t steps = st.rkps.extent(2);
    const std::size_t t_len = steps + 1;

    Tensor dregional({k, c, steps});
    Tensor dshifts({k, c, steps, 2});
    for (std::size_t i = 0; i < dregional.size(); ++i) {
        dregional[i] = drkps[i * 2 + 0] * st.shifts[i * 2 + 0] +
                       drkps[i * 2 + 1] * st.shifts[i * 2 + 1];
        dshifts[i * 2 + 0] = st.regional_weights[i] * drkps[i * 2 + 0];
        dshifts[i * 2 + 1] = st.regional_weights[i] * drkps[i * 2 + 1];
    }
    if (acfg.normalize_shifts) {
        const double dr = static_cast<double>(std::max<std::size_t>(1, height - 1));
        const double dc = static_cast<double>(std::max<std::size_t>(1, width - 1));
        for (std::size_t i = 0; i < dshifts.size(); i += 2) {
            dshifts[i] /= dr;
            dshifts[i + 1] /= dc;
        }
    }

    Tensor dpair = softmax_backward_axis(st.regional_weights, dregional, 0);
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t t = 0; t < t_len; ++t) {
                double acc = 0.0;
                if (t < steps) acc += 0.5 * dpair[(r * c + ch) * steps + t];
                if (t >= 1) acc += 0.5 * dpair[(r * c + ch) * steps + t - 1];
                dmeans[(r * c + ch) * t_len + t] += acc;
            }
        }
    }

    Tensor dmix({k, k, c, steps});
    Tensor ddeltas({k, k, c, steps, 2});
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < steps; ++i) {
                    const std::size_t w_at = ((a * k + b) * c + ch) * steps + i;
                    const std::size_t s_at = ((a * c + ch) * steps + i) * 2;
                    dmix[w_at] = dshifts[s_at + 0] * st.deltas[w_at * 2 + 0] +
                                 dshifts[s_at + 1] * st.deltas[w_at * 2 + 1];
                    ddeltas[w_at * 2 + 0] = st.shift_weights[w_at] * dshifts[s_at + 0];
                    ddeltas[w_at * 2 + 1] = st.shift_weights[w_at] * dshifts[s_at + 1];
                }
            }
        }
    }

    Tensor daff = softmax_backward_axis(st.shift_weights, dmix, 1);
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < steps; ++i) {
                    const double va = st.values[(a * c + ch) * t_len + i];
                    const double vb = st.values[(b * c + ch) * t_len + i + 1];
                    const double inv = 1.0 / (std::abs(va - vb) + acfg.epsilon);
                    const double sgn = va > vb ? 1.0 : (va < vb ? -1.0 : 0.0);
                    const double q =
                        daff[((a * k + b) * c + ch) * steps + i] * inv * inv * sgn;
                    dvalues[(a * c + ch) * t_len + i] -= q;
                    dvalues[(b * c + ch) * t_len + i + 1] += q;
                }
            }
        }
    }

    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < steps; ++i) {
                    const std::size_t d_at = (((a * k + b) * c + ch) * steps + i) * 2;
                    for (std::size_t comp = 0; comp < 2; ++comp) {
                        const double dd = ddeltas[d_at + comp];
                        dcoords[((b * c + ch) * t_len + i + 1) * 2 + comp] += dd;
                        dcoords[((a * c + ch) * t_len + i) * 2 + comp] -= dd;
                    }
                }
            }
        }
    }
}

// Argmax subgradient: the value adjoint lands on the winning cell, the
// mean adjoint spreads uniformly over the region, coordinates get nothing.
void hard_set_backward(const SetTape& st, const Tensor& dvalues, const Tensor& dmeans,
                       Tensor& dinput) {
    const std::size_t k = st.values.extent(0), c = st.values.extent(1);
    const std::size_t t_len = st.values.extent(2);
    const std::size_t h = dinput.extent(2), w = dinput.extent(3);
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t t = 0; t < t_len; ++t) {
                const std::size_t at = (r * c + ch) * t_len + t;
                double* plane = dinput.data() + (ch * t_len + t) * h * w;
                const std::size_t y = static_cast<std::size_t>(st.coords[at * 2 + 0]);
                const std::size_t x = static_cast<std::size_t>(st.coords[at * 2 + 1]);
                plane[y * w + x] += dvalues[at];
                const double dm = dmeans[at];
                if (dm != 0.0) {
                    const RegionBounds b = st.partitions[t].region(r);
                    const double per = dm / static_cast<double>(b.rows() * b.cols());
                    for (std::size_t yy = b.row_lo; yy < b.row_hi; ++yy) {
                        for (std::size_t xx = b.col_lo; xx < b.col_hi; ++xx) {
                            plane[yy * w + xx] += per;
                        }
                    }
                }
            }
        }
    }
}

void head_forward(const std::vector<Tensor>& rkps_list, const KpsemParams& params,
                  const KpsemConfig& cfg, HeadTape& ht, Tensor& out) {
    ht.reshaped.clear();
    Tensor sum;
    for (std::size_t g = 0; g < rkps_list.size(); ++g) {
        ht.reshaped.push_back(reshape_rkps(rkps_list[g]));
        Tensor e = linear_forward(ht.reshaped.back(), params.embeddings[g].weight,
                                  params.embeddings[g].bias);
        if (g == 0) {
            sum = std::move(e);
        } else {
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e[i];
        }
    }
    ht.embedded = std::move(sum);
    const std::size_t c = ht.embedded.extent(0), steps = ht.embedded.extent(1);
    const std::size_t d = ht.embedded.extent(2);
    if (c % 4 != 0) {
        throw ConfigError("reduce_dimensions: channels must be divisible by 4, got " +
                          std::to_string(c));
    }
    if (d % 4 != 0) {
        throw ConfigError("reduce_dimensions: embedding width must be divisible by 4, got " +
                          std::to_string(d));
    }
    ht.h1pre = conv_1x3_halve(ht.embedded, params.conv1_w, params.conv1_b);
    ht.h1 = ht.h1pre;
    if (cfg.reduction_relu) {
        for (std::size_t i = 0; i < ht.h1.size(); ++i) ht.h1[i] = relu(ht.h1[i]);
    }
    ht.h2pre = conv_1x3_halve(ht.h1, params.conv2_w, params.conv2_b);
    ht.h2 = ht.h2pre;
    if (cfg.reduction_relu) {
        for (std::size_t i = 0; i < ht.h2.size(); ++i) ht.h2[i] = relu(ht.h2[i]);
    }
    const std::size_t c4 = ht.h2.extent(0), d4 = ht.h2.extent(2);
    out = Tensor({c4 * steps});
    for (std::size_t ch = 0; ch < c4; ++ch) {
        for (std::size_t i = 0; i < steps; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d4; ++j) acc += ht.h2[(ch * steps + i) * d4 + j];
            out[ch * steps + i] = acc / static_cast<double>(d4);
        }
    }
}

}  // namespace

Tensor kpsem_forward_tape(const Tensor& f, const KpsemParams& params, const KpsemConfig& cfg,
                          Mode mode, const SoftConfig& soft, KpsemTape& tape) {
    if (f.rank() != 4) throw ShapeError("kpsem_forward: input must be C×T×H×W");
    if (params.nets.size() != cfg.sets || params.embeddings.size() != cfg.sets) {
        throw ShapeError("kpsem_forward: params hold " + std::to_string(params.nets.size()) +
                         " sets, config wants " + std::to_string(cfg.sets));
    }
    if (mode == Mode::Soft && (soft.tau_point <= 0.0 || soft.tau_region <= 0.0)) {
        throw ConfigError("soft temperatures must be positive");
    }
    tape = KpsemTape{};
    tape.mode = mode;
    tape.cfg = cfg;
    tape.soft = soft;
    tape.input = f;
    tape.sets.resize(cfg.sets);
    const AreseConfig acfg = cfg.arese();
    std::vector<Tensor> rkps(cfg.sets);
    for (std::size_t g = 0; g < cfg.sets; ++g) {
        if (mode == Mode::Hard) {
            hard_set_forward(f, params.nets[g], acfg, tape.sets[g]);
        } else {
            detail::soft_set_forward(f, params.nets[g], cfg, soft, tape.sets[g]);
            downstream_forward(f, acfg, tape.sets[g]);
        }
        rkps[g] = tape.sets[g].rkps;
    }
    head_forward(rkps, params, cfg, tape.head, tape.output);
    return tape.output;
}

KpsemGrads kpsem_backward(const KpsemTape& tape, const KpsemParams& params,
                          const Tensor& upstream) {
    if (upstream.rank() != 1 || upstream.size() != tape.output.size()) {
        throw ShapeError("kpsem_backward: upstream adjoint must match the output vector");
    }
    KpsemGrads g = zero_grads_like(params, tape.input);
    const HeadTape& ht = tape.head;
    const std::size_t c4 = ht.h2.extent(0), steps = ht.h2.extent(1), d4 = ht.h2.extent(2);

    Tensor dh2({c4, steps, d4});
    for (std::size_t ch = 0; ch < c4; ++ch) {
        for (std::size_t i = 0; i < steps; ++i) {
            const double per = upstream[ch * steps + i] / static_cast<double>(d4);
            for (std::size_t j = 0; j < d4; ++j) dh2[(ch * steps + i) * d4 + j] = per;
        }
    }
    if (tape.cfg.reduction_relu) {
        for (std::size_t i = 0; i < dh2.size(); ++i) {
            if (ht.h2pre[i] <= 0.0) dh2[i] = 0.0;
        }
    }
    Tensor dh1(ht.h1.dims());
    conv_1x3_halve_backward(ht.h1, params.conv2_w, dh2, &dh1, g.conv2_w, g.conv2_b);
    if (tape.cfg.reduction_relu) {
        for (std::size_t i = 0; i < dh1.size(); ++i) {
            if (ht.h1pre[i] <= 0.0) dh1[i] = 0.0;
        }
    }
    Tensor de(ht.embedded.dims());
    conv_1x3_halve_backward(ht.embedded, params.conv1_w, dh1, &de, g.conv1_w, g.conv1_b);

    const AreseConfig acfg = tape.cfg.arese();
    const std::size_t height = tape.input.extent(2), width = tape.input.extent(3);
    for (std::size_t set = 0; set < tape.sets.size(); ++set) {
        const SetTape& st = tape.sets[set];
        Tensor dresh(ht.reshaped[set].dims());
        linear_backward(ht.reshaped[set], params.embeddings[set].weight, de, &dresh,
                        g.embeddings[set].weight, g.embeddings[set].bias);

        const std::size_t k = st.rkps.extent(0), c = st.rkps.extent(1);
        const std::size_t t_len = st.values.extent(2);
        Tensor drkps({k, c, steps, 2});
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < steps; ++i) {
                    const std::size_t src = (ch * steps + i) * (k * 2) + r * 2;
                    const std::size_t dst = ((r * c + ch) * steps + i) * 2;
                    drkps[dst + 0] = dresh[src + 0];
                    drkps[dst + 1] = dresh[src + 1];
                }
            }
        }

        Tensor dcoords({k, c, t_len, 2});
        Tensor dvalues({k, c, t_len});
        Tensor dmeans({k, c, t_len});
        downstream_backward(st, acfg, height, width, drkps, dcoords, dvalues, dmeans);
        if (tape.mode == Mode::Hard) {
            hard_set_backward(st, dvalues, dmeans, g.input);
        } else {
            detail::soft_set_backward(tape.input, params.nets[set], tape.cfg, tape.soft, st,
                                      dcoords, dvalues, dmeans, g.nets[set], g.input);
        }
    }
    return g;
}

}  // namespace kpshift
