#include "kpshift/arese.hpp"

#include <cmath>
#include <string>

namespace kpshift {

namespace {

void check_clip(const Tensor& f) {
    if (f.rank() != 4) throw ShapeError("clip must be C×T×H×W");
}

void check_partitions(const Tensor& f, const std::vector<GridPartition>& parts) {
    check_clip(f);
    if (parts.size() != f.extent(1)) {
        throw ShapeError("need one partition per frame: " + std::to_string(parts.size()) +
                         " given, " + std::to_string(f.extent(1)) + " frames");
    }
    for (const GridPartition& p : parts) {
        if (p.rows != f.extent(2) || p.cols != f.extent(3)) {
            throw ShapeError("partition extents do not match the clip frames");
        }
    }
}

void require_two_frames(std::size_t t) {
    if (t < 2) {
        throw ConfigError("need at least 2 frames to form shifts, got " + std::to_string(t));
    }
}

}  // namespace

std::vector<GridPartition> partitions_for_clip(const Tensor& f, const SeparationNet& net,
                                               std::size_t k) {
    check_clip(f);
    const std::size_t c = f.extent(0), t_len = f.extent(1);
    const std::size_t h = f.extent(2), w = f.extent(3);
    std::vector<GridPartition> parts(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        Tensor frame({c, h, w});
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* src = f.data() + (ch * t_len + t) * h * w;
            double* dst = frame.data() + ch * h * w;
            for (std::size_t i = 0; i < h * w; ++i) dst[i] = src[i];
        }
        parts[t] = build_partition(h, w, k, compute_adaptive_bias(frame, net));
    }
    return parts;
}

KeyPointField extract_key_points(const Tensor& f,
                                 const std::vector<GridPartition>& parts) {
    check_partitions(f, parts);
    const std::size_t c = f.extent(0), t_len = f.extent(1);
    const std::size_t h = f.extent(2), w = f.extent(3);
    const std::size_t regions = parts.front().region_count();

    KeyPointField kp;
    kp.coords = Tensor({regions, c, t_len, 2});
    kp.values = Tensor({regions, c, t_len});
    const double* fp = f.data();
#ifdef _OPENMP
#pragma omp parallel for if (c > 1)
#endif
    for (std::ptrdiff_t ch = 0; ch < static_cast<std::ptrdiff_t>(c); ++ch) {
        for (std::size_t t = 0; t < t_len; ++t) {
            const double* plane = fp + (static_cast<std::size_t>(ch) * t_len + t) * h * w;
            for (std::size_t r = 0; r < regions; ++r) {
                const RegionBounds b = parts[t].region(r);
                std::size_t br = b.row_lo, bc = b.col_lo;
                double bv = plane[br * w + bc];
                for (std::size_t y = b.row_lo; y < b.row_hi; ++y) {
                    for (std::size_t x = b.col_lo; x < b.col_hi; ++x) {
                        if (plane[y * w + x] > bv) {
                            bv = plane[y * w + x];
                            br = y;
                            bc = x;
                        }
                    }
                }
                const std::size_t base = ((r * c + static_cast<std::size_t>(ch)) * t_len + t);
                kp.coords[base * 2 + 0] = static_cast<double>(br);
                kp.coords[base * 2 + 1] = static_cast<double>(bc);
                kp.values[base] = bv;
            }
        }
    }
    return kp;
}

Tensor location_differences(const KeyPointField& kp) {
    const std::size_t k = kp.regions(), c = kp.channels(), t_len = kp.frames();
    require_two_frames(t_len);
    Tensor out({k, k, c, t_len - 1, 2});
    const double* ip = kp.coords.data();
    double* op = out.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) if (k * k > 4)
#endif
    for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(k); ++a) {
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(k); ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i + 1 < t_len; ++i) {
                    const std::size_t cur =
                        ((static_cast<std::size_t>(a) * c + ch) * t_len + i) * 2;
                    const std::size_t nxt =
                        ((static_cast<std::size_t>(b) * c + ch) * t_len + i + 1) * 2;
                    const std::size_t dst =
                        ((((static_cast<std::size_t>(a) * k + static_cast<std::size_t>(b)) * c +
                           ch) *
                              (t_len - 1) +
                          i)) *
                        2;
                    op[dst + 0] = ip[nxt + 0] - ip[cur + 0];
                    op[dst + 1] = ip[nxt + 1] - ip[cur + 1];
                }
            }
        }
    }
    return out;
}

Tensor shift_weights(const KeyPointField& kp, double epsilon) {
    if (epsilon <= 0.0) {
        throw ConfigError("shift-weight epsilon must be positive, got " +
                          std::to_string(epsilon));
    }
    const std::size_t k = kp.regions(), c = kp.channels(), t_len = kp.frames();
    require_two_frames(t_len);
    Tensor affinity({k, k, c, t_len - 1});
    const double* vp = kp.values.data();
    double* ap = affinity.data();
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i + 1 < t_len; ++i) {
                    const double va = vp[(a * c + ch) * t_len + i];
                    const double vb = vp[(b * c + ch) * t_len + i + 1];
                    ap[((a * k + b) * c + ch) * (t_len - 1) + i] =
                        1.0 / (std::abs(va - vb) + epsilon);
                }
            }
        }
    }
    return softmax_axis(affinity, 1);
}

Tensor key_point_shifts(const Tensor& deltas, const Tensor& weights) {
    if (deltas.rank() != 5 || weights.rank() != 4) {
        throw ShapeError("key_point_shifts: deltas must be rank 5, weights rank 4");
    }
    for (std::size_t a = 0; a < 4; ++a) {
        if (deltas.extent(a) != weights.extent(a)) {
            throw ShapeError("key_point_shifts: deltas/weights extent mismatch on axis " +
                             std::to_string(a));
        }
    }
    const std::size_t k = deltas.extent(0), c = deltas.extent(2);
    const std::size_t steps = deltas.extent(3);
    if (deltas.extent(1) != k || deltas.extent(4) != 2) {
        throw ShapeError("key_point_shifts: deltas must be K×K×C×(T-1)×2");
    }
    Tensor out({k, c, steps, 2});
    const double* dp = deltas.data();
    const double* wp = weights.data();
    double* op = out.data();
#ifdef _OPENMP
#pragma omp parallel for if (k * c > 8)
#endif
    for (std::ptrdiff_t a = 0; a < static_cast<std::ptrdiff_t>(k); ++a) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < steps; ++i) {
                double srow = 0.0, scol = 0.0;
                for (std::size_t b = 0; b < k; ++b) {
                    const std::size_t w_at =
                        ((static_cast<std::size_t>(a) * k + b) * c + ch) * steps + i;
                    srow += wp[w_at] * dp[w_at * 2 + 0];
                    scol += wp[w_at] * dp[w_at * 2 + 1];
                }
                const std::size_t dst =
                    ((static_cast<std::size_t>(a) * c + ch) * steps + i) * 2;
                op[dst + 0] = srow;
                op[dst + 1] = scol;
            }
        }
    }
    return out;
}

Tensor region_frame_means(const Tensor& f, const std::vector<GridPartition>& parts) {
    check_partitions(f, parts);
    const std::size_t c = f.extent(0), t_len = f.extent(1);
    const std::size_t h = f.extent(2), w = f.extent(3);
    const std::size_t regions = parts.front().region_count();
    Tensor out({regions, c, t_len});
    const double* fp = f.data();
#ifdef _OPENMP
#pragma omp parallel for if (c > 1)
#endif
    for (std::ptrdiff_t ch = 0; ch < static_cast<std::ptrdiff_t>(c); ++ch) {
        for (std::size_t t = 0; t < t_len; ++t) {
            const double* plane = fp + (static_cast<std::size_t>(ch) * t_len + t) * h * w;
            for (std::size_t r = 0; r < regions; ++r) {
                const RegionBounds b = parts[t].region(r);
                double sum = 0.0;
                for (std::size_t y = b.row_lo; y < b.row_hi; ++y) {
                    for (std::size_t x = b.col_lo; x < b.col_hi; ++x) sum += plane[y * w + x];
                }
                out[(r * c + static_cast<std::size_t>(ch)) * t_len + t] =
                    sum / static_cast<double>(b.rows() * b.cols());
            }
        }
    }
    return out;
}

Tensor pair_average(const Tensor& means) {
    if (means.rank() != 3) throw ShapeError("pair_average: means must be K×C×T");
    const std::size_t k = means.extent(0), c = means.extent(1), t_len = means.extent(2);
    require_two_frames(t_len);
    Tensor out({k, c, t_len - 1});
    for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i + 1 < t_len; ++i) {
                out[(r * c + ch) * (t_len - 1) + i] =
                    0.5 * (means[(r * c + ch) * t_len + i] +
                           means[(r * c + ch) * t_len + i + 1]);
            }
        }
    }
    return out;
}

Tensor regional_weights_from_means(const Tensor& pair_means) {
    if (pair_means.rank() != 3) {
        throw ShapeError("regional_weights_from_means: input must be K×C×(T-1)");
    }
    return softmax_axis(pair_means, 0);
}

Tensor regional_weights(const Tensor& f, const std::vector<GridPartition>& parts) {
    return regional_weights_from_means(pair_average(region_frame_means(f, parts)));
}

Tensor compose_rkps(const Tensor& shifts, const Tensor& regional) {
    if (shifts.rank() != 4 || regional.rank() != 3) {
        throw ShapeError("compose_rkps: shifts must be rank 4, weights rank 3");
    }
    for (std::size_t a = 0; a < 3; ++a) {
        if (shifts.extent(a) != regional.extent(a)) {
            throw ShapeError("compose_rkps: extent mismatch on axis " + std::to_string(a));
        }
    }
    Tensor out(shifts.dims());
    for (std::size_t i = 0; i < regional.size(); ++i) {
        out[i * 2 + 0] = regional[i] * shifts[i * 2 + 0];
        out[i * 2 + 1] = regional[i] * shifts[i * 2 + 1];
    }
    return out;
}

AreseStages arese_run(const Tensor& f, const std::vector<GridPartition>& parts,
                      const AreseConfig& cfg) {
    check_partitions(f, parts);
    require_two_frames(f.extent(1));
    AreseStages s;
    s.partitions = parts;
    s.keypoints = extract_key_points(f, s.partitions);
    s.deltas = location_differences(s.keypoints);
    s.shift_weights = shift_weights(s.keypoints, cfg.epsilon);
    s.shifts = key_point_shifts(s.deltas, s.shift_weights);
    if (cfg.normalize_shifts) {
        const double dr = static_cast<double>(std::max<std::size_t>(1, f.extent(2) - 1));
        const double dc = static_cast<double>(std::max<std::size_t>(1, f.extent(3) - 1));
        for (std::size_t i = 0; i < s.shifts.size(); i += 2) {
            s.shifts[i] /= dr;
            s.shifts[i + 1] /= dc;
        }
    }
    s.region_means = region_frame_means(f, s.partitions);
    s.pair_means = pair_average(s.region_means);
    s.regional_weights = regional_weights_from_means(s.pair_means);
    s.rkps = compose_rkps(s.shifts, s.regional_weights);
    return s;
}

AreseStages arese_run(const Tensor& f, const SeparationNet& net, const AreseConfig& cfg) {
    check_clip(f);
    return arese_run(f, partitions_for_clip(f, net, cfg.k), cfg);
}

Tensor arese_forward(const Tensor& f, const SeparationNet& net, const AreseConfig& cfg) {
    return arese_run(f, net, cfg).rkps;
}

}  // namespace kpshift
