#pragma once

#include <cstddef>
#include <vector>

#include "kpshift/head.hpp"
#include "kpshift/tensor.hpp"

namespace kpshift {

// Hard: faithful argmax forward. Coordinates, region boundaries and the
// separation nets get zero gradient (piecewise-constant paths); the max
// value routes its adjoint to the argmax cell. Soft: temperature-smoothed
// surrogate where coordinates, values and region means are softmax /
// sigmoid expectations, so every parameter including the separation nets
// receives gradient.
enum class Mode { Hard, Soft };

struct SoftConfig {
    double tau_point = 0.5;
    double tau_region = 0.5;
};

// dy adjoints of y = linear_forward(x, w, b). dx may be null to skip the
// input adjoint. dw/db accumulate.
void linear_backward(const Tensor& x, const Tensor& weight, const Tensor& dy, Tensor* dx,
                     Tensor& dweight, Tensor& dbias);

// dy adjoints of y = conv_1x3_halve(x, w, b).
void conv_1x3_halve_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                             Tensor* dx, Tensor& dweight, Tensor& dbias);

// dlogits from softmax output s and its adjoint ds, along `axis`.
Tensor softmax_backward_axis(const Tensor& s, const Tensor& ds, std::size_t axis);

// One extractor set's forward record. Hard mode fills partitions; soft
// mode fills the mlp/edge/field tensors instead. The stage tensors after
// the key-point field are shared by both modes.
struct SetTape {
    std::vector<GridPartition> partitions;

    // soft-mode partition internals
    Tensor gap;        // T×C pooled input
    Tensor hid_pre;    // T×hidden
    Tensor out2;       // T×2 pre-tanh
    Tensor row_edges;  // T×(k-1) continuous interior lines
    Tensor col_edges;
    std::vector<unsigned char> row_free;  // per frame: offset inside the clamp interval
    std::vector<unsigned char> col_free;
    Tensor m_row;   // T×k×H band memberships
    Tensor m_col;   // T×k×W
    Tensor omega;   // K×C×T×(H·W) per-region softmax fields
    Tensor mu_sum;  // K×T membership mass

    Tensor coords, values;  // K×C×T×2, K×C×T
    Tensor region_means;    // K×C×T
    Tensor deltas;          // K×K×C×(T-1)×2
    Tensor shift_weights;   // K×K×C×(T-1)
    Tensor shifts_raw;      // K×C×(T-1)×2 before optional normalization
    Tensor shifts;          // after it
    Tensor pair_means, regional_weights;  // K×C×(T-1)
    Tensor rkps;                          // K×C×(T-1)×2
};

struct HeadTape {
    std::vector<Tensor> reshaped;  // per set, C×(T-1)×(K·2)
    Tensor embedded;               // C×(T-1)×d_e
    Tensor h1pre, h1, h2pre, h2;
};

struct KpsemTape {
    Mode mode = Mode::Hard;
    KpsemConfig cfg;
    SoftConfig soft;
    Tensor input;  // C×T×H×W copy
    std::vector<SetTape> sets;
    HeadTape head;
    Tensor output;
};

// Gradients shaped exactly like KpsemParams, plus the input adjoint.
struct KpsemGrads {
    std::vector<SeparationNet> nets;
    std::vector<LinearLayer> embeddings;
    Tensor conv1_w, conv1_b, conv2_w, conv2_b;
    Tensor input;
};

KpsemGrads zero_grads_like(const KpsemParams& params, const Tensor& input_shape);

// Hard mode reproduces kpsem_forward bit for bit while recording the tape.
Tensor kpsem_forward_tape(const Tensor& f, const KpsemParams& params,
                          const KpsemConfig& cfg, Mode mode, const SoftConfig& soft,
                          KpsemTape& tape);

KpsemGrads kpsem_backward(const KpsemTape& tape, const KpsemParams& params,
                          const Tensor& upstream);

namespace detail {

// Soft surrogate internals, exposed for the mode-specific pieces of the
// tape code and for focused tests.
void soft_set_forward(const Tensor& f, const SeparationNet& net, const KpsemConfig& cfg,
                      const SoftConfig& sc, SetTape& tape);
void soft_set_backward(const Tensor& f, const SeparationNet& net, const KpsemConfig& cfg,
                       const SoftConfig& sc, const SetTape& tape, const Tensor& dcoords,
                       const Tensor& dvalues, const Tensor& dmeans, SeparationNet& dnet,
                       Tensor& dinput);

}  // namespace detail

}  // namespace kpshift
