#include "ref/reference.hpp"

#include <algorithm>
#include <cmath>

namespace kpshift::ref {

namespace {

std::vector<std::size_t> unravel(std::size_t flat, const std::vector<std::size_t>& dims) {
    std::vector<std::size_t> idx(dims.size());
    for (std::size_t a = dims.size(); a-- > 0;) {
        idx[a] = flat % dims[a];
        flat /= dims[a];
    }
    return idx;
}

std::size_t ravel(const std::vector<std::size_t>& idx, const std::vector<std::size_t>& dims) {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < dims.size(); ++a) flat = flat * dims[a] + idx[a];
    return flat;
}

}  // namespace

Tensor softmax_axis(const Tensor& t, std::size_t axis) {
    Tensor out(t.dims(), t.dtype());
    const std::size_t n = t.extent(axis);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        std::vector<std::size_t> idx = unravel(flat, t.dims());
        if (idx[axis] != 0) continue;
        long double mx = t[flat];
        for (std::size_t j = 1; j < n; ++j) {
            idx[axis] = j;
            mx = std::max<long double>(mx, t[ravel(idx, t.dims())]);
        }
        long double sum = 0.0L;
        for (std::size_t j = 0; j < n; ++j) {
            idx[axis] = j;
            sum += std::exp(static_cast<long double>(t[ravel(idx, t.dims())]) - mx);
        }
        for (std::size_t j = 0; j < n; ++j) {
            idx[axis] = j;
            const std::size_t p = ravel(idx, t.dims());
            out[p] = static_cast<double>(std::exp(static_cast<long double>(t[p]) - mx) / sum);
        }
    }
    out.quantize();
    return out;
}

MaxPoint region_reduce_max(const Tensor& frame, const RegionBounds& b) {
    MaxPoint best{b.row_lo, b.col_lo, frame.at({b.row_lo, b.col_lo})};
    for (std::size_t r = b.row_lo; r < b.row_hi; ++r) {
        for (std::size_t c = b.col_lo; c < b.col_hi; ++c) {
            if (frame.at({r, c}) > best.value) best = MaxPoint{r, c, frame.at({r, c})};
        }
    }
    return best;
}

double region_reduce_mean(const Tensor& frame, const RegionBounds& b) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t r = b.row_lo; r < b.row_hi; ++r) {
        for (std::size_t c = b.col_lo; c < b.col_hi; ++c) {
            sum += frame.at({r, c});
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const std::size_t d_in = x.extent(x.rank() - 1);
    const std::size_t d_out = weight.extent(0);
    std::vector<std::size_t> out_dims(x.dims());
    out_dims.back() = d_out;
    Tensor out(out_dims, x.dtype());
    const std::size_t rows = x.size() / d_in;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < d_out; ++j) {
            double acc = bias[j];
            for (std::size_t i = 0; i < d_in; ++i) {
                acc += weight.at({j, i}) * x[r * d_in + i];
            }
            out[r * d_out + j] = acc;
        }
    }
    out.quantize();
    return out;
}

Tensor conv_1x3_halve(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const std::size_t c_in = x.extent(0), a = x.extent(1), b = x.extent(2);
    const std::size_t c_out = c_in / 2;
    const std::size_t b_out = (b + 2 - 3) / 2 + 1;
    Tensor out({c_out, a, b_out}, x.dtype());
    for (std::size_t co = 0; co < c_out; ++co) {
        for (std::size_t r = 0; r < a; ++r) {
            for (std::size_t j = 0; j < b_out; ++j) {
                double acc = bias[co];
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    for (std::size_t tap = 0; tap < 3; ++tap) {
                        const long long src = 2LL * static_cast<long long>(j) +
                                              static_cast<long long>(tap) - 1;
                        if (src < 0 || src >= static_cast<long long>(b)) continue;
                        acc += weight.at({co, ci, 0, tap}) *
                               x.at({ci, r, static_cast<std::size_t>(src)});
                    }
                }
                out.at({co, r, j}) = acc;
            }
        }
    }
    out.quantize();
    return out;
}

KeyPointField extract_key_points(const Tensor& f,
                                 const std::vector<GridPartition>& partitions) {
    const std::size_t c = f.extent(0), t_len = f.extent(1);
    const std::size_t regions = partitions.front().region_count();
    KeyPointField kp;
    kp.coords = Tensor({regions, c, t_len, 2});
    kp.values = Tensor({regions, c, t_len});
    for (std::size_t r = 0; r < regions; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t t = 0; t < t_len; ++t) {
                const RegionBounds b = partitions[t].region(r);
                std::size_t br = b.row_lo, bc = b.col_lo;
                double bv = f.at({ch, t, br, bc});
                for (std::size_t y = b.row_lo; y < b.row_hi; ++y) {
                    for (std::size_t x = b.col_lo; x < b.col_hi; ++x) {
                        if (f.at({ch, t, y, x}) > bv) {
                            bv = f.at({ch, t, y, x});
                            br = y;
                            bc = x;
                        }
                    }
                }
                kp.coords.at({r, ch, t, 0}) = static_cast<double>(br);
                kp.coords.at({r, ch, t, 1}) = static_cast<double>(bc);
                kp.values.at({r, ch, t}) = bv;
            }
        }
    }
    return kp;
}

namespace {

// Interior lines for one axis: rounded uniform baselines plus a shared
// rounded offset, offset clamped so the outer bands keep a cell.
std::vector<std::size_t> naive_lines(std::size_t extent, std::size_t k, double delta) {
    std::vector<std::size_t> lines;
    if (k < 2) return lines;
    std::vector<long> base;
    for (std::size_t j = 1; j < k; ++j) {
        base.push_back(std::lround(static_cast<double>(j) * static_cast<double>(extent) /
                                   static_cast<double>(k)));
    }
    long d = std::lround(delta);
    if (d < 1 - base.front()) d = 1 - base.front();
    if (d > static_cast<long>(extent) - 1 - base.back()) {
        d = static_cast<long>(extent) - 1 - base.back();
    }
    for (long b : base) lines.push_back(static_cast<std::size_t>(b + d));
    return lines;
}

}  // namespace

Tensor arese_forward(const Tensor& f, const SeparationNet& net, const AreseConfig& cfg) {
    const std::size_t c = f.extent(0), t_len = f.extent(1);
    const std::size_t h = f.extent(2), w = f.extent(3);
    const std::size_t k = cfg.k, regions = k * k;
    const std::size_t steps = t_len - 1;
    const std::size_t hidden = net.w1.extent(0);

    // per-frame partitions from a naive MLP evaluation
    std::vector<std::vector<std::size_t>> row_lines(t_len), col_lines(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        std::vector<double> gap(c, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) gap[ch] += f.at({ch, t, y, x});
            }
            gap[ch] /= static_cast<double>(h * w);
        }
        std::vector<double> hid(hidden, 0.0);
        for (std::size_t j = 0; j < hidden; ++j) {
            double acc = net.b1[j];
            for (std::size_t i = 0; i < c; ++i) acc += net.w1.at({j, i}) * gap[i];
            hid[j] = acc > 0.0 ? acc : 0.0;
        }
        double out2[2];
        for (std::size_t j = 0; j < 2; ++j) {
            double acc = net.b2[j];
            for (std::size_t i = 0; i < hidden; ++i) acc += net.w2.at({j, i}) * hid[i];
            out2[j] = acc;
        }
        const double dr = static_cast<double>(h) / (2.0 * static_cast<double>(k)) *
                          std::tanh(out2[0]);
        const double dc = static_cast<double>(w) / (2.0 * static_cast<double>(k)) *
                          std::tanh(out2[1]);
        row_lines[t] = naive_lines(h, k, dr);
        col_lines[t] = naive_lines(w, k, dc);
    }

    auto region_of = [&](std::size_t t, std::size_t r) {
        const std::size_t gr = r / k, gc = r % k;
        RegionBounds b;
        b.row_lo = gr == 0 ? 0 : row_lines[t][gr - 1];
        b.row_hi = gr == k - 1 ? h : row_lines[t][gr];
        b.col_lo = gc == 0 ? 0 : col_lines[t][gc - 1];
        b.col_hi = gc == k - 1 ? w : col_lines[t][gc];
        return b;
    };

    // key points
    std::vector<double> irow(regions * c * t_len), icol(regions * c * t_len);
    std::vector<double> val(regions * c * t_len);
    for (std::size_t r = 0; r < regions; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t t = 0; t < t_len; ++t) {
                const RegionBounds b = region_of(t, r);
                std::size_t br = b.row_lo, bc = b.col_lo;
                double bv = f.at({ch, t, br, bc});
                for (std::size_t y = b.row_lo; y < b.row_hi; ++y) {
                    for (std::size_t x = b.col_lo; x < b.col_hi; ++x) {
                        if (f.at({ch, t, y, x}) > bv) {
                            bv = f.at({ch, t, y, x});
                            br = y;
                            bc = x;
                        }
                    }
                }
                const std::size_t at = (r * c + ch) * t_len + t;
                irow[at] = static_cast<double>(br);
                icol[at] = static_cast<double>(bc);
                val[at] = bv;
            }
        }
    }

    // region means and their temporal pair averages
    std::vector<double> pair_mean(regions * c * steps);
    for (std::size_t r = 0; r < regions; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            std::vector<double> mean(t_len);
            for (std::size_t t = 0; t < t_len; ++t) {
                const RegionBounds b = region_of(t, r);
                double sum = 0.0;
                for (std::size_t y = b.row_lo; y < b.row_hi; ++y) {
                    for (std::size_t x = b.col_lo; x < b.col_hi; ++x) {
                        sum += f.at({ch, t, y, x});
                    }
                }
                mean[t] = sum / static_cast<double>(b.rows() * b.cols());
            }
            for (std::size_t i = 0; i < steps; ++i) {
                pair_mean[(r * c + ch) * steps + i] = 0.5 * (mean[i] + mean[i + 1]);
            }
        }
    }

    Tensor rkps({regions, c, steps, 2});
    for (std::size_t a = 0; a < regions; ++a) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < steps; ++i) {
                // shift weights over the next-frame regions
                std::vector<long double> aff(regions);
                long double mx = 0.0L;
                for (std::size_t b = 0; b < regions; ++b) {
                    const double va = val[(a * c + ch) * t_len + i];
                    const double vb = val[(b * c + ch) * t_len + i + 1];
                    aff[b] = 1.0L / (std::abs(va - vb) + cfg.epsilon);
                    if (b == 0 || aff[b] > mx) mx = aff[b];
                }
                long double z = 0.0L;
                for (std::size_t b = 0; b < regions; ++b) z += std::exp(aff[b] - mx);
                double srow = 0.0, scol = 0.0;
                for (std::size_t b = 0; b < regions; ++b) {
                    const double wgt = static_cast<double>(std::exp(aff[b] - mx) / z);
                    const std::size_t cur = (a * c + ch) * t_len + i;
                    const std::size_t nxt = (b * c + ch) * t_len + i + 1;
                    srow += wgt * (irow[nxt] - irow[cur]);
                    scol += wgt * (icol[nxt] - icol[cur]);
                }
                if (cfg.normalize_shifts) {
                    srow /= static_cast<double>(h > 1 ? h - 1 : 1);
                    scol /= static_cast<double>(w > 1 ? w - 1 : 1);
                }

                // regional weight over regions at this (ch, i)
                long double rmx = pair_mean[ch * steps + i];
                for (std::size_t r = 0; r < regions; ++r) {
                    rmx = std::max<long double>(rmx, pair_mean[(r * c + ch) * steps + i]);
                }
                long double rz = 0.0L;
                for (std::size_t r = 0; r < regions; ++r) {
                    rz += std::exp(static_cast<long double>(
                                       pair_mean[(r * c + ch) * steps + i]) -
                                   rmx);
                }
                const double wr = static_cast<double>(
                    std::exp(static_cast<long double>(pair_mean[(a * c + ch) * steps + i]) -
                             rmx) /
                    rz);

                rkps.at({a, ch, i, 0}) = wr * srow;
                rkps.at({a, ch, i, 1}) = wr * scol;
            }
        }
    }
    return rkps;
}

Tensor kpsem_forward(const Tensor& f, const KpsemParams& params, const KpsemConfig& cfg) {
    const std::size_t c = f.extent(0), steps = f.extent(1) - 1;
    const std::size_t k2 = cfg.k * cfg.k, d_e = cfg.embed_dim;
    const AreseConfig acfg = cfg.arese();

    Tensor embedded({c, steps, d_e});
    for (std::size_t g = 0; g < cfg.sets; ++g) {
        Tensor rkps = ref::arese_forward(f, params.nets[g], acfg);
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < steps; ++i) {
                for (std::size_t j = 0; j < d_e; ++j) {
                    double acc = params.embeddings[g].bias[j];
                    for (std::size_t r = 0; r < k2; ++r) {
                        acc += params.embeddings[g].weight.at({j, r * 2 + 0}) *
                               rkps.at({r, ch, i, 0});
                        acc += params.embeddings[g].weight.at({j, r * 2 + 1}) *
                               rkps.at({r, ch, i, 1});
                    }
                    embedded.at({ch, i, j}) += acc;
                }
            }
        }
    }

    Tensor h1 = ref::conv_1x3_halve(embedded, params.conv1_w, params.conv1_b);
    if (cfg.reduction_relu) {
        for (std::size_t i = 0; i < h1.size(); ++i) h1[i] = h1[i] > 0.0 ? h1[i] : 0.0;
    }
    Tensor h2 = ref::conv_1x3_halve(h1, params.conv2_w, params.conv2_b);
    if (cfg.reduction_relu) {
        for (std::size_t i = 0; i < h2.size(); ++i) h2[i] = h2[i] > 0.0 ? h2[i] : 0.0;
    }
    const std::size_t c4 = h2.extent(0), d4 = h2.extent(2);
    Tensor out({c4 * steps});
    for (std::size_t ch = 0; ch < c4; ++ch) {
        for (std::size_t i = 0; i < steps; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d4; ++j) acc += h2.at({ch, i, j});
            out[ch * steps + i] = acc / static_cast<double>(d4);
        }
    }
    return out;
}

}  // namespace kpshift::ref
