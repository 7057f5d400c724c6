#pragma once

// One gated-dilated layer: a context sub-network produces a per-sample
// attention scalar alpha, which soft-gates the input between a dilation-1
// and a dilation-2 convolution branch; branch outputs are concatenated.

#include <utility>

#include "gdnet/tensor.hpp"

namespace gdnet {

/// Parameters of the context sub-network: one 3x3 conv filter with a single
/// output channel, then a single sigmoid neuron on the pooled activation.
template <typename Real>
struct ContextSubnetParams {
    Tensor<Real> attn_kernel;    // 1 x C_in x 3 x 3
    Tensor<Real> neuron_weight;  // 1 x 1
    Tensor<Real> neuron_bias;    // 1

    int in_channels() const { return attn_kernel.extent(1); }
};

template <typename Real>
struct GDLayerParams {
    Tensor<Real> k1;  // S x C_in x 3 x 3, dilation 1 branch
    Tensor<Real> k2;  // S x C_in x 3 x 3, dilation 2 branch
    ContextSubnetParams<Real> subnet;

    int branch_width() const { return k1.extent(0); }
    int in_channels() const { return k1.extent(1); }
    int out_channels() const { return 2 * branch_width(); }
};

/// Tape handles for one layer's parameters.
template <typename Real>
struct GDLayerVars {
    using Var = typename Tape<Real>::Var;
    Var k1, k2, attn_kernel, neuron_weight, neuron_bias;
};

template <typename Real>
GDLayerVars<Real> register_layer(Tape<Real>& tape, GDLayerParams<Real>& p,
                                 bool requires_grad = true) {
    GDLayerVars<Real> v;
    v.k1 = tape.input(p.k1, requires_grad);
    v.k2 = tape.input(p.k2, requires_grad);
    v.attn_kernel = tape.input(p.subnet.attn_kernel, requires_grad);
    v.neuron_weight = tape.input(p.subnet.neuron_weight, requires_grad);
    v.neuron_bias = tape.input(p.subnet.neuron_bias, requires_grad);
    return v;
}

/// alpha_n = sigmoid(w * GAP(relu(conv3x3(X_n))) + b), one scalar per sample,
/// strictly inside (0,1).
template <typename Real>
typename Tape<Real>::Var context_attention(Tape<Real>& tape, typename Tape<Real>::Var x,
                                           const GDLayerVars<Real>& layer) {
    auto conv = tape.conv2d_dilated(x, layer.attn_kernel, 1);
    auto act = tape.relu(conv);
    auto pooled = tape.pool_global(act, PoolMode::Avg);  // N x 1
    auto affine = tape.dense(pooled, layer.neuron_weight, layer.neuron_bias);
    auto alpha = tape.sigmoid(affine);
    return tape.reshape(alpha, {tape.value(x).extent(0)});
}

/// I1 = alpha * X, I2 = (1 - alpha) * X. I1 + I2 == X by construction.
template <typename Real>
std::pair<typename Tape<Real>::Var, typename Tape<Real>::Var> gate_split(
    Tape<Real>& tape, typename Tape<Real>::Var x, typename Tape<Real>::Var alpha) {
    auto i1 = tape.scale_by_scalar(x, alpha);
    auto i2 = tape.scale_by_scalar(x, tape.one_minus(alpha));
    return {i1, i2};
}

template <typename Real>
struct GDForwardResult {
    typename Tape<Real>::Var features;  // N x 2S x H x W
    typename Tape<Real>::Var alpha;     // N
};

/// Full layer: attention, gate split, two relu'd dilated branches (r=1, r=2),
/// channel concatenation. Spatial size 32x32 is required and preserved.
template <typename Real>
GDForwardResult<Real> gd_forward(Tape<Real>& tape, typename Tape<Real>::Var x,
                                 const GDLayerVars<Real>& layer) {
    const Tensor<Real>& xv = tape.value(x);
    if (xv.rank() != 4 || xv.extent(2) != 32 || xv.extent(3) != 32)
        throw std::invalid_argument("gd_forward: expected NCHW input with 32x32 spatial size");
    auto alpha = context_attention(tape, x, layer);
    auto [i1, i2] = gate_split(tape, x, alpha);
    auto d1 = tape.relu(tape.conv2d_dilated(i1, layer.k1, 1));
    auto d2 = tape.relu(tape.conv2d_dilated(i2, layer.k2, 2));
    return {tape.concat_channels(d1, d2), alpha};
}

}  // namespace gdnet
