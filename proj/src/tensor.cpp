#include "kpshift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kpshift {

std::size_t shape_product(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> dims, DType dtype)
    : dims_(std::move(dims)), dtype_(dtype) {
    for (std::size_t d : dims_) {
        if (d == 0) throw ShapeError("tensor extents must be >= 1");
    }
    data_.assign(shape_product(dims_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values, DType dtype)
    : dims_(std::move(dims)), data_(std::move(values)), dtype_(dtype) {
    for (std::size_t d : dims_) {
        if (d == 0) throw ShapeError("tensor extents must be >= 1");
    }
    if (data_.size() != shape_product(dims_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape product " +
                         std::to_string(shape_product(dims_)));
    }
    quantize();
}

Tensor Tensor::zeros(std::vector<std::size_t> dims, DType dtype) {
    return Tensor(std::move(dims), dtype);
}

Tensor Tensor::full(std::vector<std::size_t> dims, double value, DType dtype) {
    Tensor t(std::move(dims), dtype);
    t.fill(value);
    t.quantize();
    return t;
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= dims_.size()) throw ShapeError("axis out of range");
    return dims_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != dims_.size()) throw ShapeError("index rank mismatch");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= dims_[axis]) throw ShapeError("index out of range");
        off = off * dims_[axis] + i;
        ++axis;
    }
    return off;
}

void Tensor::quantize() {
    if (dtype_ != DType::F32) return;
    for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

Tensor Tensor::astype(DType dtype) const {
    Tensor out(dims_, dtype);
    out.data_ = data_;
    out.quantize();
    return out;
}

void Tensor::require_finite(const char* what) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw ShapeError(std::string(what) + ": non-finite element");
        }
    }
}

void Tensor::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

Tensor softmax_axis(const Tensor& t, std::size_t axis) {
    if (axis >= t.rank()) throw ShapeError("softmax_axis: axis out of range");
    const std::size_t n = t.extent(axis);
    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < t.rank(); ++a) inner *= t.extent(a);
    const std::size_t outer = t.size() / (n * inner);

    Tensor out(t.dims(), t.dtype());
    const double* src = t.data();
    double* dst = out.data();
    const std::ptrdiff_t slices = static_cast<std::ptrdiff_t>(outer * inner);
#ifdef _OPENMP
#pragma omp parallel for if (slices > 256)
#endif
    for (std::ptrdiff_t s = 0; s < slices; ++s) {
        const std::size_t o = static_cast<std::size_t>(s) / inner;
        const std::size_t i = static_cast<std::size_t>(s) % inner;
        const std::size_t base = o * n * inner + i;
        double mx = src[base];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, src[base + j * inner]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp(src[base + j * inner] - mx);
            dst[base + j * inner] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < n; ++j) dst[base + j * inner] /= sum;
    }
    out.quantize();
    return out;
}

static void check_bounds(const Tensor& frame, const RegionBounds& b) {
    if (frame.rank() != 2) throw ShapeError("region reduce: frame must be rank 2");
    if (b.row_lo >= b.row_hi || b.col_lo >= b.col_hi) {
        throw ShapeError("region reduce: empty region");
    }
    if (b.row_hi > frame.extent(0) || b.col_hi > frame.extent(1)) {
        throw ShapeError("region reduce: bounds exceed frame");
    }
}

MaxPoint region_reduce_max(const Tensor& frame, const RegionBounds& b) {
    check_bounds(frame, b);
    const std::size_t w = frame.extent(1);
    const double* p = frame.data();
    MaxPoint best{b.row_lo, b.col_lo, p[b.row_lo * w + b.col_lo]};
    for (std::size_t r = b.row_lo; r < b.row_hi; ++r) {
        for (std::size_t c = b.col_lo; c < b.col_hi; ++c) {
            const double v = p[r * w + c];
            if (v > best.value) best = MaxPoint{r, c, v};
        }
    }
    return best;
}

double region_reduce_mean(const Tensor& frame, const RegionBounds& b) {
    check_bounds(frame, b);
    const std::size_t w = frame.extent(1);
    const double* p = frame.data();
    double sum = 0.0;
    for (std::size_t r = b.row_lo; r < b.row_hi; ++r) {
        for (std::size_t c = b.col_lo; c < b.col_hi; ++c) sum += p[r * w + c];
    }
    return sum / static_cast<double>(b.rows() * b.cols());
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() < 1) throw ShapeError("linear_forward: input must have rank >= 1");
    if (weight.rank() != 2 || bias.rank() != 1) {
        throw ShapeError("linear_forward: weight must be rank 2, bias rank 1");
    }
    const std::size_t d_in = x.extent(x.rank() - 1);
    const std::size_t d_out = weight.extent(0);
    if (weight.extent(1) != d_in) {
        throw ShapeError("linear_forward: weight columns " +
                         std::to_string(weight.extent(1)) +
                         " != input extent " + std::to_string(d_in));
    }
    if (bias.extent(0) != d_out) throw ShapeError("linear_forward: bias extent mismatch");

    std::vector<std::size_t> out_dims(x.dims());
    out_dims.back() = d_out;
    Tensor out(out_dims, x.dtype());
    const std::size_t rows = x.size() / d_in;
    const double* xp = x.data();
    const double* wp = weight.data();
    const double* bp = bias.data();
    double* yp = out.data();
#ifdef _OPENMP
#pragma omp parallel for if (rows * d_out * d_in > 4096)
#endif
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
        const double* xr = xp + r * d_in;
        double* yr = yp + r * d_out;
        for (std::size_t j = 0; j < d_out; ++j) {
            double acc = 0.0;
            const double* wr = wp + j * d_in;
            for (std::size_t i = 0; i < d_in; ++i) acc += wr[i] * xr[i];
            yr[j] = acc + bp[j];
        }
    }
    out.quantize();
    return out;
}

std::size_t conv_1x3_out_extent(std::size_t b) { return (b + 2 - 3) / 2 + 1; }

Tensor conv_1x3_halve(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.rank() != 3) throw ShapeError("conv_1x3_halve: input must be C×A×B");
    const std::size_t c_in = x.extent(0), a = x.extent(1), b = x.extent(2);
    if (c_in % 2 != 0) throw ShapeError("conv_1x3_halve: channel count must be even");
    if (b < 2) throw ShapeError("conv_1x3_halve: trailing extent must be >= 2");
    const std::size_t c_out = c_in / 2;
    if (weight.rank() != 4 || weight.extent(0) != c_out || weight.extent(1) != c_in ||
        weight.extent(2) != 1 || weight.extent(3) != 3) {
        throw ShapeError("conv_1x3_halve: weight must be (C/2)×C×1×3");
    }
    if (bias.rank() != 1 || bias.extent(0) != c_out) {
        throw ShapeError("conv_1x3_halve: bias must have extent C/2");
    }
    const std::size_t b_out = conv_1x3_out_extent(b);
    Tensor out({c_out, a, b_out}, x.dtype());
    const double* xp = x.data();
    const double* wp = weight.data();
    double* yp = out.data();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) if (c_out * a * b_out > 512)
#endif
    for (std::ptrdiff_t co = 0; co < static_cast<std::ptrdiff_t>(c_out); ++co) {
        for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(a); ++r) {
            for (std::size_t j = 0; j < b_out; ++j) {
                double acc = 0.0;
                // input window starts at 2j - 1 (padding 1 on the B axis)
                for (std::size_t ci = 0; ci < c_in; ++ci) {
                    const double* row = xp + (ci * a + r) * b;
                    const double* w3 = wp + (co * c_in + ci) * 3;
                    for (std::size_t tap = 0; tap < 3; ++tap) {
                        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(2 * j + tap) - 1;
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(b)) continue;
                        acc += w3[tap] * row[src];
                    }
                }
                yp[(co * a + r) * b_out + j] = acc + bias[static_cast<std::size_t>(co)];
            }
        }
    }
    out.quantize();
    return out;
}

}  // namespace kpshift
