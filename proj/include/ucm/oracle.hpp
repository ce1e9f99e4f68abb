#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace ucm::oracle {

// Test-only reference implementations. Everything here is written as direct
// loop transcriptions over plain 64-bit buffers and shares no indexing
// helpers with the tensor engine. These run only on desk-scale inputs.

// 64-bit mirror of a dense tensor; same shape semantics, nothing else shared.
struct ShadowTensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    ShadowTensor() = default;
    ShadowTensor(std::vector<std::int64_t> s, double fill = 0.0);
    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
};

// Direct six-nested-loop cross-correlation with zero padding and dilation.
// x: N x Cin x H x W, w: Cout x Cin x Kh x Kw, b: Cout (may be empty).
ShadowTensor naive_conv2d(const ShadowTensor& x, const ShadowTensor& w,
                          const std::vector<double>& b, int stride, int padding, int dilation);

// Literal position attention on one sample: Q/K/V from 1x1 projections,
// S = softmax(Q K^T) over rows, out = alpha * S^T V + y.
// y: C x H x W; wq/wk/wv: C x C (out_channel-major).
ShadowTensor naive_attention(const ShadowTensor& y, const ShadowTensor& wq, const ShadowTensor& wk,
                             const ShadowTensor& wv, double alpha);

// Gather the cyclically offset sample per input channel, then a plain
// per-pixel dot product. x: N x Cin x H x W, w: Cin x Cout, b: Cout.
ShadowTensor naive_cyclefc(const ShadowTensor& x, const ShadowTensor& w,
                           const std::vector<double>& b, int step_h, int step_w);

// Central differences per coordinate: (f(x+h e_i) - f(x-h e_i)) / 2h.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h);

// Central differences on a chosen subset of coordinates.
std::vector<double> finite_diff_grad_at(const std::function<double(const std::vector<double>&)>& f,
                                        const std::vector<double>& x, double h,
                                        const std::vector<std::size_t>& coords);

struct MetricTriple {
    double f1 = 0.0;
    double iou = 0.0;
    double dsc = 0.0;
};

// Pixel-by-pixel enumeration of |P|, |G|, |P n G| for one foreground class.
MetricTriple enumerate_metrics(const std::vector<std::int32_t>& pred,
                               const std::vector<std::int32_t>& gt, std::int32_t cls = 1);

}  // namespace ucm::oracle
