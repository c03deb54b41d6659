#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

#include "kpshift/errors.hpp"

namespace kpshift {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

// Dense row-major n-d array. Elements are held as doubles regardless of
// dtype; an F32 tensor keeps every element on the float grid (values are
// squashed through float whenever they are produced), so serialization of
// either dtype round-trips bit-exactly.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, DType dtype = DType::F64);
    Tensor(std::vector<std::size_t> dims, std::vector<double> values,
           DType dtype = DType::F64);

    static Tensor zeros(std::vector<std::size_t> dims, DType dtype = DType::F64);
    static Tensor full(std::vector<std::size_t> dims, double value,
                       DType dtype = DType::F64);

    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t rank() const { return dims_.size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t size() const { return data_.size(); }
    DType dtype() const { return dtype_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }
    std::size_t offset(std::initializer_list<std::size_t> idx) const;

    bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

    // Rounds every element onto the float grid when dtype is F32. Ops that
    // build an F32 result call this before returning.
    void quantize();
    Tensor astype(DType dtype) const;

    // Throws ShapeError if any element is NaN or infinite.
    void require_finite(const char* what) const;

    void fill(double value);

private:
    std::vector<std::size_t> dims_;
    std::vector<double> data_;
    DType dtype_ = DType::F64;
};

std::size_t shape_product(const std::vector<std::size_t>& dims);

// Half-open sub-rectangle of an H×W frame, in full-frame coordinates.
struct RegionBounds {
    std::size_t row_lo = 0, row_hi = 0, col_lo = 0, col_hi = 0;
    std::size_t rows() const { return row_hi - row_lo; }
    std::size_t cols() const { return col_hi - col_lo; }
};

struct MaxPoint {
    std::size_t row = 0, col = 0;
    double value = 0.0;
};

// Softmax along one axis with max-subtraction. Output extents match input.
Tensor softmax_axis(const Tensor& t, std::size_t axis);

// Maximum over the bounded sub-rectangle of a 2-d frame. Coordinates are
// full-frame; ties break to the first element in row-major region scan.
MaxPoint region_reduce_max(const Tensor& frame, const RegionBounds& bounds);

// Arithmetic mean over the bounded sub-rectangle of a 2-d frame.
double region_reduce_mean(const Tensor& frame, const RegionBounds& bounds);

// y[..., j] = sum_i weight[j, i] * x[..., i] + bias[j]. Leading extents of
// x are preserved; weight is D_out×D_in.
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

// 2-d cross-correlation over the trailing (A, B) plane of a C×A×B input
// with kernel (1,3), stride (1,2), zero padding (0,1). Channel count
// halves; the B extent maps to (B + 2 - 3)/2 + 1.
Tensor conv_1x3_halve(const Tensor& x, const Tensor& weight, const Tensor& bias);

std::size_t conv_1x3_out_extent(std::size_t b);

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

}  // namespace kpshift
