#pragma once

#include "ucm/autograd.hpp"
#include "ucm/tensor.hpp"

namespace ucm {

// Differentiable primitives. Layout conventions: images are N x C x H x W,
// matrices are row-major 2-D. Every kernel uses a fixed reduction order per
// output element, so identical inputs give bit-identical outputs.

template <typename Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b);

template <typename Real>
TensorT<Real> mul(const TensorT<Real>& a, const TensorT<Real>& b);

template <typename Real>
TensorT<Real> scale(const TensorT<Real>& x, double factor);

// x * s with s a learnable [1] tensor (the attention gates alpha/beta)
template <typename Real>
TensorT<Real> mul_scalar_param(const TensorT<Real>& x, const TensorT<Real>& s);

template <typename Real>
TensorT<Real> relu(const TensorT<Real>& x);

template <typename Real>
TensorT<Real> sigmoid(const TensorT<Real>& x);

template <typename Real>
TensorT<Real> silu(const TensorT<Real>& x);

template <typename Real>
TensorT<Real> concat(const std::vector<TensorT<Real>>& xs, int axis);

// slice [start, start+len) along dim 0
template <typename Real>
TensorT<Real> narrow0(const TensorT<Real>& x, std::int64_t start, std::int64_t len);

template <typename Real>
TensorT<Real> reshape(const TensorT<Real>& x, Shape shape);

template <typename Real>
TensorT<Real> permute(const TensorT<Real>& x, const std::vector<int>& perm);

template <typename Real>
TensorT<Real> sum(const TensorT<Real>& x);  // -> [1]

template <typename Real>
TensorT<Real> mean(const TensorT<Real>& x);  // -> [1]

// N x C x H x W -> N x C
template <typename Real>
TensorT<Real> global_avg_pool(const TensorT<Real>& x);

// out(n,c,h,w) = x(n,c,h,w) * s(n,c)
template <typename Real>
TensorT<Real> scale_channels(const TensorT<Real>& x, const TensorT<Real>& s);

// max-subtracted, normalized along `axis`
template <typename Real>
TensorT<Real> softmax(const TensorT<Real>& x, int axis);

// a [m x k] * b [k x n] -> [m x n]
template <typename Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b);

// x [N x K] * w [K x M] + b [M]
template <typename Real>
TensorT<Real> linear(const TensorT<Real>& x, const TensorT<Real>& w, const TensorT<Real>& b);

// Cross-correlation with zero padding. w is Cout x Cin x Kh x Kw; per output
// element the accumulation runs kernel row-major, then input channel.
template <typename Real>
TensorT<Real> conv2d(const TensorT<Real>& x, const TensorT<Real>& w, const TensorT<Real>& b,
                     int stride = 1, int padding = 0, int dilation = 1);

// w is Cin x Cout x Kh x Kw; with the default 2x2 kernel and stride 2 the
// output is exactly 2H x 2W.
template <typename Real>
TensorT<Real> conv_transpose2d(const TensorT<Real>& x, const TensorT<Real>& w,
                               const TensorT<Real>& b, int stride = 2);

// backward routes to the argmax, first occurrence in row-major scan on ties
template <typename Real>
TensorT<Real> maxpool2d(const TensorT<Real>& x, int window = 2, int stride = 2);

// Per-channel statistics over N x H x W. Training mode normalizes with batch
// stats and folds them into the running buffers; eval mode uses the buffers.
template <typename Real>
TensorT<Real> batchnorm2d(const TensorT<Real>& x, const TensorT<Real>& gamma,
                          const TensorT<Real>& beta, TensorT<Real>& running_mean,
                          TensorT<Real>& running_var, bool training, double momentum = 0.1,
                          double eps = 1e-5);

// inverted scaling: kept values divided by 1-p; identity in eval mode
template <typename Real>
TensorT<Real> dropout(const TensorT<Real>& x, double p, bool training, Rng& rng);

// factor-2 bilinear upsampling, align-corners false
template <typename Real>
TensorT<Real> upsample_bilinear2x(const TensorT<Real>& x);

}  // namespace ucm
