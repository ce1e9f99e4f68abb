#pragma once

#include <array>
#include <string>
#include <vector>

#include "ucm/ops.hpp"
#include "ucm/params.hpp"

namespace ucm {

// Parameter bundles for the network's building blocks. Tensors are shared
// handles, so the structs can be registered into a ParamStore and still be
// used directly by the forward functions.

template <typename Real>
struct BatchNorm2dT {
    TensorT<Real> gamma, beta;
    TensorT<Real> running_mean, running_var;  // buffers, not learnable

    static BatchNorm2dT make(int channels);
    void collect(ParamStoreT<Real>& params, NamedTensorsT<Real>& buffers,
                 const std::string& prefix) const;
};

// Squeeze-style gating: gap -> fc1 -> ReLU -> fc2 -> Sigmoid -> channel scale.
template <typename Real>
struct WeParamsT {
    TensorT<Real> fc1_w, fc1_b;  // C x C/r, C/r
    TensorT<Real> fc2_w, fc2_b;  // C/r x C, C
    int reduction = 4;

    static WeParamsT make(int channels, int reduction, Rng& rng);
    void collect(ParamStoreT<Real>& params, const std::string& prefix) const;
};

template <typename Real>
struct PaweParamsT {
    TensorT<Real> q_w, k_w, v_w;  // 1x1 projections C -> C, no bias
    TensorT<Real> alpha;          // [1], init 0
    WeParamsT<Real> we;
    BatchNorm2dT<Real> bn;
    double dropout_p = 0.1;

    static PaweParamsT make(int channels, int we_reduction, double dropout_p, Rng& rng);
    void collect(ParamStoreT<Real>& params, NamedTensorsT<Real>& buffers,
                 const std::string& prefix) const;
};

template <typename Real>
struct ConvBnT {
    TensorT<Real> w, b;
    BatchNorm2dT<Real> bn;

    static ConvBnT make(int cin, int cout, int ksize, Rng& rng);
    void collect(ParamStoreT<Real>& params, NamedTensorsT<Real>& buffers,
                 const std::string& prefix) const;
};

template <typename Real>
struct DaBlockParamsT {
    std::vector<ConvBnT<Real>> dense;  // L layers, 3x3, growth channels each
    ConvBnT<Real> transition;          // 1x1, (cin + L*growth) -> cout
    ConvBnT<Real> atrous;              // 3x3, dilation r, cin -> cout
    int cin = 0, cout = 0, growth = 0, dilation = 1;

    static DaBlockParamsT make(int cin, int cout, int depth, int growth, int dilation, Rng& rng);
    void collect(ParamStoreT<Real>& params, NamedTensorsT<Real>& buffers,
                 const std::string& prefix) const;
};

template <typename Real>
struct CaweParamsT {
    TensorT<Real> beta;  // [1], init 0
    WeParamsT<Real> we;

    static CaweParamsT make(int channels, int we_reduction, Rng& rng);
    void collect(ParamStoreT<Real>& params, const std::string& prefix) const;
};

template <typename Real>
struct CycleFcParamsT {
    TensorT<Real> w;  // Cin x Cout
    TensorT<Real> b;  // Cout
    int step_h = 1, step_w = 1;

    static CycleFcParamsT make(int cin, int cout, int step_h, int step_w, Rng& rng);
    void collect(ParamStoreT<Real>& params, const std::string& prefix) const;
};

template <typename Real>
struct CycleMlpParamsT {
    CycleFcParamsT<Real> fc_w;   // stepsize (1, 7)
    CycleFcParamsT<Real> fc_h;   // stepsize (7, 1)
    CycleFcParamsT<Real> fc_id;  // stepsize (1, 1)

    static CycleMlpParamsT make(int channels,
                                const std::array<std::array<int, 2>, 3>& stepsizes, Rng& rng);
    void collect(ParamStoreT<Real>& params, const std::string& prefix) const;
};

template <typename Real>
struct CcmParamsT {
    CaweParamsT<Real> cawe;
    CycleMlpParamsT<Real> mlp;

    static CcmParamsT make(int channels, int we_reduction,
                           const std::array<std::array<int, 2>, 3>& stepsizes, Rng& rng);
    void collect(ParamStoreT<Real>& params, const std::string& prefix) const;
};

// --- block forwards ---

// out(n,c,h,w) = x(n,c,h,w) * sigmoid(fc2(relu(fc1(gap(x)))))(n,c)
template <typename Real>
TensorT<Real> weight_excitation(const TensorT<Real>& x, const WeParamsT<Real>& p);

// alpha * S^T V + y with S = softmax(Q K^T) over the H*W positions. Dense
// O((H*W)^2) map; refuses to run past the configured memory budget.
template <typename Real>
TensorT<Real> position_attention(const TensorT<Real>& y, const PaweParamsT<Real>& p);

// the spatial affinity map S for one sample, rows normalized (inspection only)
template <typename Real>
TensorT<Real> position_attention_map(const TensorT<Real>& y, const PaweParamsT<Real>& p,
                                     std::int64_t sample);

// silu(dropout(batchnorm(position_attention(y) + weight_excitation(y))))
template <typename Real>
TensorT<Real> pawe(const TensorT<Real>& y, const PaweParamsT<Real>& p, bool training, Rng& rng);

// densely connected 3x3 stack plus 1x1 transition, each conv -> BN -> SiLU
template <typename Real>
TensorT<Real> dense_conv(const TensorT<Real>& f, const DaBlockParamsT<Real>& p, bool training);

// 3x3 conv with dilation r and padding r (shape preserving), BN, SiLU
template <typename Real>
TensorT<Real> atrous_conv(const TensorT<Real>& f, const DaBlockParamsT<Real>& p, bool training);

template <typename Real>
TensorT<Real> dense_atrous(const TensorT<Real>& f, const DaBlockParamsT<Real>& p, bool training);

// beta * F C^T + F with C = softmax(F^T F) over channels, per sample
template <typename Real>
TensorT<Real> channel_attention(const TensorT<Real>& f, const TensorT<Real>& beta);

template <typename Real>
TensorT<Real> cawe(const TensorT<Real>& f, const CaweParamsT<Real>& p);

// out(n,co,i,j) = b(co) + sum_c x(n, c, i+dh(c), j+dw(c)) * w(c,co), with
// dh(c) = (c mod S_H) - floor(S_H/2) and the mirrored dw; zero outside.
template <typename Real>
TensorT<Real> cycle_fc(const TensorT<Real>& x, const CycleFcParamsT<Real>& p);

// sum of the (1,7), (7,1) and (1,1) CycleFC branches
template <typename Real>
TensorT<Real> cycle_mlp(const TensorT<Real>& x, const CycleMlpParamsT<Real>& p);

// sigmoid(cycle_mlp(cawe(f))): the skip-connection refinement block
template <typename Real>
TensorT<Real> ccm(const TensorT<Real>& f, const CcmParamsT<Real>& p);

}  // namespace ucm
