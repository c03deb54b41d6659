#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kpshift/grad.hpp"

namespace kpshift {
namespace detail {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double log_sigmoid(double z) {
    if (z >= 0.0) return -std::log1p(std::exp(-z));
    return z - std::log1p(std::exp(z));
}

// Continuous counterpart of the hard line placement: same rounded base
// lines, same clamp interval, but the shared offset stays real-valued.
// free_flag records whether the offset sits strictly inside the interval,
// i.e. whether it still responds to the separation net.
void soft_edges(std::size_t extent, std::size_t k, double draw, double* edges,
                unsigned char* free_flag) {
    std::vector<double> base(k - 1);
    for (std::size_t j = 1; j < k; ++j) {
        base[j - 1] = static_cast<double>(
            std::lround(static_cast<double>(j * extent) / static_cast<double>(k)));
    }
    const double lo = 1.0 - base.front();
    const double hi = static_cast<double>(extent) - 1.0 - base.back();
    const double d = std::clamp(draw, lo, hi);
    *free_flag = (draw > lo && draw < hi) ? 1 : 0;
    for (std::size_t j = 0; j + 1 < k; ++j) edges[j] = base[j] + d;
}

}  // namespace

void soft_set_forward(const Tensor& f, const SeparationNet& net, const KpsemConfig& cfg,
                      const SoftConfig& sc, SetTape& st) {
    const std::size_t c = f.extent(0), t_len = f.extent(1);
    const std::size_t h = f.extent(2), w = f.extent(3);
    const std::size_t k = cfg.k, regions = k * k;
    if (k < 1 || k > 4) throw ShapeError("partition side count must be 1..4");
    if (h < k || w < k) {
        throw ShapeError("frame " + std::to_string(h) + "×" + std::to_string(w) +
                         " too small for a " + std::to_string(k) + "×" + std::to_string(k) +
                         " partition");
    }
    if (net.w1.extent(1) != c) {
        throw ShapeError("soft extractor: net expects " + std::to_string(net.w1.extent(1)) +
                         " channels, clip has " + std::to_string(c));
    }
    const double tau_p = sc.tau_point, tau_r = sc.tau_region;

    st.gap = Tensor({t_len, c});
    const double* fp = f.data();
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* plane = fp + (ch * t_len + t) * h * w;
            double sum = 0.0;
            for (std::size_t i = 0; i < h * w; ++i) sum += plane[i];
            st.gap[t * c + ch] = sum / static_cast<double>(h * w);
        }
    }
    st.hid_pre = linear_forward(st.gap, net.w1, net.b1);
    Tensor hid = st.hid_pre;
    for (std::size_t i = 0; i < hid.size(); ++i) hid[i] = relu(hid[i]);
    st.out2 = linear_forward(hid, net.w2, net.b2);

    const double s_row = static_cast<double>(h) / (2.0 * static_cast<double>(k));
    const double s_col = static_cast<double>(w) / (2.0 * static_cast<double>(k));
    st.row_free.assign(t_len, 1);
    st.col_free.assign(t_len, 1);
    if (k > 1) {
        st.row_edges = Tensor({t_len, k - 1});
        st.col_edges = Tensor({t_len, k - 1});
        for (std::size_t t = 0; t < t_len; ++t) {
            soft_edges(h, k, s_row * std::tanh(st.out2[t * 2 + 0]),
                       st.row_edges.data() + t * (k - 1), &st.row_free[t]);
            soft_edges(w, k, s_col * std::tanh(st.out2[t * 2 + 1]),
                       st.col_edges.data() + t * (k - 1), &st.col_free[t]);
        }
    }

    // Band memberships. The half-cell offset lines the zero-temperature
    // limit up with the half-open integer bands of the hard partition.
    std::vector<double> logm_row(t_len * k * h, 0.0);
    std::vector<double> logm_col(t_len * k * w, 0.0);
    st.m_row = Tensor({t_len, k, h});
    st.m_col = Tensor({t_len, k, w});
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t b = 0; b < k; ++b) {
            for (std::size_t y = 0; y < h; ++y) {
                double lm = 0.0;
                if (b > 0) {
                    const double e = st.row_edges[t * (k - 1) + b - 1];
                    lm += log_sigmoid((static_cast<double>(y) + 0.5 - e) / tau_r);
                }
                if (b + 1 < k) {
                    const double e = st.row_edges[t * (k - 1) + b];
                    lm += log_sigmoid((e - static_cast<double>(y) - 0.5) / tau_r);
                }
                logm_row[(t * k + b) * h + y] = lm;
                st.m_row[(t * k + b) * h + y] = std::exp(lm);
            }
            for (std::size_t x = 0; x < w; ++x) {
                double lm = 0.0;
                if (b > 0) {
                    const double e = st.col_edges[t * (k - 1) + b - 1];
                    lm += log_sigmoid((static_cast<double>(x) + 0.5 - e) / tau_r);
                }
                if (b + 1 < k) {
                    const double e = st.col_edges[t * (k - 1) + b];
                    lm += log_sigmoid((e - static_cast<double>(x) - 0.5) / tau_r);
                }
                logm_col[(t * k + b) * w + x] = lm;
                st.m_col[(t * k + b) * w + x] = std::exp(lm);
            }
        }
    }

    st.omega = Tensor({regions, c, t_len, h * w});
    st.coords = Tensor({regions, c, t_len, 2});
    st.values = Tensor({regions, c, t_len});
    std::vector<double> logits(h * w);
    for (std::size_t r = 0; r < regions; ++r) {
        const std::size_t br = r / k, bc = r % k;
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t t = 0; t < t_len; ++t) {
                const double* plane = fp + (ch * t_len + t) * h * w;
                const double* lr = logm_row.data() + (t * k + br) * h;
                const double* lc = logm_col.data() + (t * k + bc) * w;
                double mx = -HUGE_VAL;
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        const double v = plane[y * w + x] / tau_p + lr[y] + lc[x];
                        logits[y * w + x] = v;
                        mx = std::max(mx, v);
                    }
                }
                double sum = 0.0;
                double* om = st.omega.data() + ((r * c + ch) * t_len + t) * h * w;
                for (std::size_t i = 0; i < h * w; ++i) {
                    om[i] = std::exp(logits[i] - mx);
                    sum += om[i];
                }
                double irow = 0.0, icol = 0.0, val = 0.0;
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        const double o = om[y * w + x] / sum;
                        om[y * w + x] = o;
                        irow += o * static_cast<double>(y);
                        icol += o * static_cast<double>(x);
                        val += o * plane[y * w + x];
                    }
                }
                const std::size_t at = (r * c + ch) * t_len + t;
                st.coords[at * 2 + 0] = irow;
                st.coords[at * 2 + 1] = icol;
                st.values[at] = val;
            }
        }
    }

    st.mu_sum = Tensor({regions, t_len});
    st.region_means = Tensor({regions, c, t_len});
    for (std::size_t r = 0; r < regions; ++r) {
        const std::size_t br = r / k, bc = r % k;
        for (std::size_t t = 0; t < t_len; ++t) {
            const double* mr = st.m_row.data() + (t * k + br) * h;
            const double* mc = st.m_col.data() + (t * k + bc) * w;
            double sy = 0.0, sx = 0.0;
            for (std::size_t y = 0; y < h; ++y) sy += mr[y];
            for (std::size_t x = 0; x < w; ++x) sx += mc[x];
            const double mass = sy * sx;
            st.mu_sum[r * t_len + t] = mass;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* plane = fp + (ch * t_len + t) * h * w;
                double num = 0.0;
                for (std::size_t y = 0; y < h; ++y) {
                    double rowacc = 0.0;
                    for (std::size_t x = 0; x < w; ++x) rowacc += mc[x] * plane[y * w + x];
                    num += mr[y] * rowacc;
                }
                st.region_means[(r * c + ch) * t_len + t] = num / mass;
            }
        }
    }
}

void soft_set_backward(const Tensor& f, const SeparationNet& net, const KpsemConfig& cfg,
                       const SoftConfig& sc, const SetTape& st, const Tensor& dcoords,
                       const Tensor& dvalues, const Tensor& dmeans, SeparationNet& dnet,
                       Tensor& dinput) {
    const std::size_t c = f.extent(0), t_len = f.extent(1);
    const std::size_t h = f.extent(2), w = f.extent(3);
    const std::size_t k = cfg.k, regions = k * k;
    const double tau_p = sc.tau_point, tau_r = sc.tau_region;
    const double* fp = f.data();

    std::vector<double> dlogm_row(t_len * k * h, 0.0);
    std::vector<double> dlogm_col(t_len * k * w, 0.0);
    std::vector<double> dm_row(t_len * k * h, 0.0);
    std::vector<double> dm_col(t_len * k * w, 0.0);

    // softmax field path: coordinates and values
    for (std::size_t r = 0; r < regions; ++r) {
        const std::size_t br = r / k, bc = r % k;
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t t = 0; t < t_len; ++t) {
                const std::size_t at = (r * c + ch) * t_len + t;
                const double dir = dcoords[at * 2 + 0];
                const double dic = dcoords[at * 2 + 1];
                const double dv = dvalues[at];
                if (dir == 0.0 && dic == 0.0 && dv == 0.0) continue;
                const double* om = st.omega.data() + ((r * c + ch) * t_len + t) * h * w;
                const double* plane = fp + (ch * t_len + t) * h * w;
                double ip = 0.0;
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        const double g = dir * static_cast<double>(y) +
                                         dic * static_cast<double>(x) + dv * plane[y * w + x];
                        ip += om[y * w + x] * g;
                    }
                }
                double* din = dinput.data() + (ch * t_len + t) * h * w;
                for (std::size_t y = 0; y < h; ++y) {
                    double row_acc = 0.0;
                    for (std::size_t x = 0; x < w; ++x) {
                        const double g = dir * static_cast<double>(y) +
                                         dic * static_cast<double>(x) + dv * plane[y * w + x];
                        const double dl = om[y * w + x] * (g - ip);
                        din[y * w + x] += dl / tau_p + om[y * w + x] * dv;
                        row_acc += dl;
                        dlogm_col[(t * k + bc) * w + x] += dl;
                    }
                    dlogm_row[(t * k + br) * h + y] += row_acc;
                }
            }
        }
    }

    // membership-weighted mean path; the weight field is channel-shared,
    // so fold the channel sum into one per-cell buffer first
    std::vector<double> dmu(h * w);
    for (std::size_t r = 0; r < regions; ++r) {
        const std::size_t br = r / k, bc = r % k;
        for (std::size_t t = 0; t < t_len; ++t) {
            const double inv = 1.0 / st.mu_sum[r * t_len + t];
            const double* mr = st.m_row.data() + (t * k + br) * h;
            const double* mc = st.m_col.data() + (t * k + bc) * w;
            std::fill(dmu.begin(), dmu.end(), 0.0);
            bool any = false;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t at = (r * c + ch) * t_len + t;
                const double dm = dmeans[at];
                if (dm == 0.0) continue;
                any = true;
                const double mt = st.region_means[at];
                const double* plane = fp + (ch * t_len + t) * h * w;
                double* din = dinput.data() + (ch * t_len + t) * h * w;
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t x = 0; x < w; ++x) {
                        din[y * w + x] += dm * mr[y] * mc[x] * inv;
                        dmu[y * w + x] += dm * (plane[y * w + x] - mt) * inv;
                    }
                }
            }
            if (!any) continue;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    dm_row[(t * k + br) * h + y] += dmu[y * w + x] * mc[x];
                    dm_col[(t * k + bc) * w + x] += dmu[y * w + x] * mr[y];
                }
            }
        }
    }

    // fold both paths into edge adjoints, then through tanh into the net
    Tensor dout2({t_len, 2});
    if (k > 1) {
        const double s_row = static_cast<double>(h) / (2.0 * static_cast<double>(k));
        const double s_col = static_cast<double>(w) / (2.0 * static_cast<double>(k));
        std::vector<double> dedge_row(t_len * (k - 1), 0.0);
        std::vector<double> dedge_col(t_len * (k - 1), 0.0);
        for (std::size_t t = 0; t < t_len; ++t) {
            for (std::size_t b = 0; b < k; ++b) {
                for (std::size_t y = 0; y < h; ++y) {
                    const std::size_t at = (t * k + b) * h + y;
                    const double total = dlogm_row[at] + dm_row[at] * st.m_row[at];
                    if (total == 0.0) continue;
                    if (b > 0) {
                        const double e = st.row_edges[t * (k - 1) + b - 1];
                        const double z = (static_cast<double>(y) + 0.5 - e) / tau_r;
                        dedge_row[t * (k - 1) + b - 1] += total * (-sigmoid(-z) / tau_r);
                    }
                    if (b + 1 < k) {
                        const double e = st.row_edges[t * (k - 1) + b];
                        const double z = (e - static_cast<double>(y) - 0.5) / tau_r;
                        dedge_row[t * (k - 1) + b] += total * (sigmoid(-z) / tau_r);
                    }
                }
                for (std::size_t x = 0; x < w; ++x) {
                    const std::size_t at = (t * k + b) * w + x;
                    const double total = dlogm_col[at] + dm_col[at] * st.m_col[at];
                    if (total == 0.0) continue;
                    if (b > 0) {
                        const double e = st.col_edges[t * (k - 1) + b - 1];
                        const double z = (static_cast<double>(x) + 0.5 - e) / tau_r;
                        dedge_col[t * (k - 1) + b - 1] += total * (-sigmoid(-z) / tau_r);
                    }
                    if (b + 1 < k) {
                        const double e = st.col_edges[t * (k - 1) + b];
                        const double z = (e - static_cast<double>(x) - 0.5) / tau_r;
                        dedge_col[t * (k - 1) + b] += total * (sigmoid(-z) / tau_r);
                    }
                }
            }
            double ddr = 0.0, ddc = 0.0;
            if (st.row_free[t]) {
                for (std::size_t j = 0; j + 1 < k; ++j) ddr += dedge_row[t * (k - 1) + j];
            }
            if (st.col_free[t]) {
                for (std::size_t j = 0; j + 1 < k; ++j) ddc += dedge_col[t * (k - 1) + j];
            }
            const double tr = std::tanh(st.out2[t * 2 + 0]);
            const double tc = std::tanh(st.out2[t * 2 + 1]);
            dout2[t * 2 + 0] = ddr * s_row * (1.0 - tr * tr);
            dout2[t * 2 + 1] = ddc * s_col * (1.0 - tc * tc);
        }
    }

    Tensor hid = st.hid_pre;
    for (std::size_t i = 0; i < hid.size(); ++i) hid[i] = relu(hid[i]);
    Tensor dhid(hid.dims());
    linear_backward(hid, net.w2, dout2, &dhid, dnet.w2, dnet.b2);
    for (std::size_t i = 0; i < dhid.size(); ++i) {
        if (st.hid_pre[i] <= 0.0) dhid[i] = 0.0;
    }
    Tensor dgap(st.gap.dims());
    linear_backward(st.gap, net.w1, dhid, &dgap, dnet.w1, dnet.b1);
    const double inv_hw = 1.0 / static_cast<double>(h * w);
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double g = dgap[t * c + ch] * inv_hw;
            if (g == 0.0) continue;
            double* din = dinput.data() + (ch * t_len + t) * h * w;
            for (std::size_t i = 0; i < h * w; ++i) din[i] += g;
        }
    }
}

}  // namespace detail
}  // namespace kpshift
