#include "ucm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ucm/detail/kernels.hpp"

namespace ucm {
namespace {

using std::int64_t;
using detail::mm_abT;
using detail::mm_accum;
using detail::mm_aTb;
using detail::softmax_exp;

template <typename Real>
void accum(detail::NodeT<Real>& node, const std::vector<Real>& g) {
    node.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}




template <typename Real>
Real sigmoid_scalar(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

struct ConvDims {
    int64_t n, cin, h, w, cout, kh, kw, hout, wout;
};

template <typename Real>
ConvDims conv_dims(const TensorT<Real>& x, const TensorT<Real>& w, int stride, int padding,
                   int dilation) {
    require(x.rank() == 4, "conv2d: input must be N x C x H x W, got " + shape_str(x.shape()));
    require(w.rank() == 4, "conv2d: weight must be Cout x Cin x Kh x Kw, got " + shape_str(w.shape()));
    require(x.dim(1) == w.dim(1), "conv2d: input channels " + std::to_string(x.dim(1)) +
                                      " != weight channels " + std::to_string(w.dim(1)));
    if (stride < 1 || dilation < 1 || padding < 0)
        throw ConfigError("conv2d: stride/dilation must be >= 1 and padding >= 0");
    ConvDims d;
    d.n = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    d.hout = (d.h + 2 * padding - dilation * (d.kh - 1) - 1) / stride + 1;
    d.wout = (d.w + 2 * padding - dilation * (d.kw - 1) - 1) / stride + 1;
    if (d.h + 2 * padding - dilation * (d.kh - 1) - 1 < 0 ||
        d.w + 2 * padding - dilation * (d.kw - 1) - 1 < 0 || d.hout < 1 || d.wout < 1)
        throw DimensionError("conv2d: non-positive output dims for input " + shape_str(x.shape()) +
                             " kernel " + shape_str(w.shape()));
    return d;
}

// cols is (Kh*Kw*Cin) x (Hout*Wout); row index = (kh*Kw + kw)*Cin + cin, so an
// ascending pass over k reproduces the documented accumulation order
// (kernel row-major, then input channel).
template <typename Real>
void im2col(const Real* x, const ConvDims& d, int stride, int padding, int dilation, Real* cols) {
    const int64_t pcount = d.hout * d.wout;
    for (int64_t kh = 0; kh < d.kh; ++kh) {
        for (int64_t kw = 0; kw < d.kw; ++kw) {
            for (int64_t c = 0; c < d.cin; ++c) {
                Real* row = cols + ((kh * d.kw + kw) * d.cin + c) * pcount;
                const Real* xc = x + c * d.h * d.w;
                for (int64_t oh = 0; oh < d.hout; ++oh) {
                    const int64_t ih = oh * stride - padding + kh * dilation;
                    Real* out = row + oh * d.wout;
                    if (ih < 0 || ih >= d.h) {
                        std::fill(out, out + d.wout, Real(0));
                        continue;
                    }
                    const Real* xr = xc + ih * d.w;
                    for (int64_t ow = 0; ow < d.wout; ++ow) {
                        const int64_t iw = ow * stride - padding + kw * dilation;
                        out[ow] = (iw >= 0 && iw < d.w) ? xr[iw] : Real(0);
                    }
                }
            }
        }
    }
}

template <typename Real>
void col2im_add(const Real* cols, const ConvDims& d, int stride, int padding, int dilation,
                Real* x) {
    const int64_t pcount = d.hout * d.wout;
    for (int64_t kh = 0; kh < d.kh; ++kh) {
        for (int64_t kw = 0; kw < d.kw; ++kw) {
            for (int64_t c = 0; c < d.cin; ++c) {
                const Real* row = cols + ((kh * d.kw + kw) * d.cin + c) * pcount;
                Real* xc = x + c * d.h * d.w;
                for (int64_t oh = 0; oh < d.hout; ++oh) {
                    const int64_t ih = oh * stride - padding + kh * dilation;
                    if (ih < 0 || ih >= d.h) continue;
                    const Real* in = row + oh * d.wout;
                    Real* xr = xc + ih * d.w;
                    for (int64_t ow = 0; ow < d.wout; ++ow) {
                        const int64_t iw = ow * stride - padding + kw * dilation;
                        if (iw >= 0 && iw < d.w) xr[iw] += in[ow];
                    }
                }
            }
        }
    }
}

// weight repack Cout x Cin x Kh x Kw -> Cout x (Kh*Kw*Cin) matching im2col rows
template <typename Real>
std::vector<Real> repack_weight(const TensorT<Real>& w) {
    const int64_t cout = w.dim(0), cin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    std::vector<Real> wr(static_cast<std::size_t>(cout * cin * kh * kw));
    const Real* src = w.data();
    for (int64_t co = 0; co < cout; ++co)
        for (int64_t c = 0; c < cin; ++c)
            for (int64_t a = 0; a < kh; ++a)
                for (int64_t b = 0; b < kw; ++b)
                    wr[((co * kh + a) * kw + b) * cin + c] = src[((co * cin + c) * kh + a) * kw + b];
    return wr;
}

}  // namespace

template <typename Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
    require(a.same_shape(b),
            "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    TensorT<Real> out = TensorT<Real>::zeros(a.shape());
    const Real* pa = a.data();
    const Real* pb = b.data();
    Real* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    check_finite(out, "add");
    auto an = a.node(), bn = b.node(), on = out.node();
    record_if_tracked(a.requires_grad() || b.requires_grad(), out, [an, bn, on] {
        if (an->requires_grad) accum(*an, on->grad);
        if (bn->requires_grad) accum(*bn, on->grad);
    });
    return out;
}

template <typename Real>
TensorT<Real> mul(const TensorT<Real>& a, const TensorT<Real>& b) {
    require(a.same_shape(b),
            "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    TensorT<Real> out = TensorT<Real>::zeros(a.shape());
    const Real* pa = a.data();
    const Real* pb = b.data();
    Real* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    check_finite(out, "mul");
    auto an = a.node(), bn = b.node(), on = out.node();
    record_if_tracked(a.requires_grad() || b.requires_grad(), out, [an, bn, on] {
        const std::vector<Real>& g = on->grad;
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) an->grad[i] += g[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) bn->grad[i] += g[i] * an->data[i];
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> scale(const TensorT<Real>& x, double factor) {
    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real f = static_cast<Real>(factor);
    const Real* px = x.data();
    Real* po = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] * f;
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on, f] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * f;
    });
    return out;
}

template <typename Real>
TensorT<Real> mul_scalar_param(const TensorT<Real>& x, const TensorT<Real>& s) {
    require(s.numel() == 1, "mul_scalar_param: gate must be a [1] tensor");
    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real sv = s.data()[0];
    const Real* px = x.data();
    Real* po = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] * sv;
    auto xn = x.node(), sn = s.node(), on = out.node();
    record_if_tracked(x.requires_grad() || s.requires_grad(), out, [xn, sn, on] {
        const std::vector<Real>& g = on->grad;
        if (xn->requires_grad) {
            const Real sv = sn->data[0];
            xn->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) xn->grad[i] += g[i] * sv;
        }
        if (sn->requires_grad) {
            Real acc = 0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xn->data[i];
            sn->ensure_grad();
            sn->grad[0] += acc;
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> relu(const TensorT<Real>& x) {
    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real* px = x.data();
    Real* po = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] > Real(0) ? px[i] : Real(0);
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i)
            if (on->data[i] > Real(0)) xn->grad[i] += on->grad[i];
    });
    return out;
}

template <typename Real>
TensorT<Real> sigmoid(const TensorT<Real>& x) {
    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real* px = x.data();
    Real* po = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = sigmoid_scalar(px[i]);
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
            const Real y = on->data[i];
            xn->grad[i] += on->grad[i] * y * (Real(1) - y);
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> silu(const TensorT<Real>& x) {
    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real* px = x.data();
    Real* po = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = px[i] * sigmoid_scalar(px[i]);
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
            const Real xi = xn->data[i];
            const Real s = sigmoid_scalar(xi);
            xn->grad[i] += on->grad[i] * s * (Real(1) + xi * (Real(1) - s));
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> concat(const std::vector<TensorT<Real>>& xs, int axis) {
    if (xs.empty()) throw ContractError("concat: empty input list");
    const std::size_t rank = xs[0].rank();
    require(axis >= 0 && static_cast<std::size_t>(axis) < rank, "concat: axis out of range");
    Shape out_shape = xs[0].shape();
    int64_t axis_total = 0;
    for (const auto& x : xs) {
        require(x.rank() == rank, "concat: rank mismatch");
        for (std::size_t d = 0; d < rank; ++d)
            if (d != static_cast<std::size_t>(axis))
                require(x.dim(d) == out_shape[d], "concat: dim mismatch at axis " + std::to_string(d));
        axis_total += x.dim(axis);
    }
    out_shape[axis] = axis_total;
    TensorT<Real> out = TensorT<Real>::zeros(out_shape);

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[d];
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= out_shape[d];

    bool tracked = false;
    int64_t offset = 0;  // in axis units
    std::vector<std::pair<std::shared_ptr<detail::NodeT<Real>>, int64_t>> parts;
    for (const auto& x : xs) {
        const int64_t ax = x.dim(axis);
        const Real* px = x.data();
        Real* po = out.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(po + (o * axis_total + offset) * inner, px + o * ax * inner,
                        static_cast<std::size_t>(ax * inner) * sizeof(Real));
        parts.emplace_back(x.node(), ax);
        tracked = tracked || x.requires_grad();
        offset += ax;
    }
    auto on = out.node();
    record_if_tracked(tracked, out, [on, parts, outer, inner, axis_total] {
        int64_t off = 0;
        for (const auto& [node, ax] : parts) {
            if (node->requires_grad) {
                node->ensure_grad();
                for (int64_t o = 0; o < outer; ++o) {
                    const Real* g = on->grad.data() + (o * axis_total + off) * inner;
                    Real* dst = node->grad.data() + o * ax * inner;
                    for (int64_t i = 0; i < ax * inner; ++i) dst[i] += g[i];
                }
            }
            off += ax;
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> narrow0(const TensorT<Real>& x, int64_t start, int64_t len) {
    require(start >= 0 && len >= 1 && start + len <= x.dim(0), "narrow0: range out of bounds");
    Shape out_shape = x.shape();
    out_shape[0] = len;
    const int64_t row = x.numel() / x.dim(0);
    TensorT<Real> out = TensorT<Real>::zeros(out_shape);
    std::memcpy(out.data(), x.data() + start * row, static_cast<std::size_t>(len * row) * sizeof(Real));
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on, start, row, len] {
        xn->ensure_grad();
        Real* dst = xn->grad.data() + start * row;
        for (int64_t i = 0; i < len * row; ++i) dst[i] += on->grad[i];
    });
    return out;
}

template <typename Real>
TensorT<Real> reshape(const TensorT<Real>& x, Shape shape) {
    require(shape_numel(shape) == x.numel(), "reshape: element count mismatch for " +
                                                 shape_str(x.shape()) + " -> " + shape_str(shape));
    TensorT<Real> out = TensorT<Real>::from_data(std::move(shape), x.vec());
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on] { accum(*xn, on->grad); });
    return out;
}

template <typename Real>
TensorT<Real> permute(const TensorT<Real>& x, const std::vector<int>& perm) {
    const std::size_t rank = x.rank();
    require(perm.size() == rank, "permute: perm size mismatch");
    std::vector<bool> seen(rank, false);
    Shape out_shape(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        require(perm[d] >= 0 && static_cast<std::size_t>(perm[d]) < rank && !seen[perm[d]],
                "permute: invalid permutation");
        seen[perm[d]] = true;
        out_shape[d] = x.dim(perm[d]);
    }
    // strides of the input, then walk output indices in order
    std::vector<int64_t> in_strides(rank, 1);
    for (std::size_t d = rank - 1; d-- > 0;) in_strides[d] = in_strides[d + 1] * x.dim(d + 1);
    std::vector<int64_t> gather(rank);
    for (std::size_t d = 0; d < rank; ++d) gather[d] = in_strides[perm[d]];

    TensorT<Real> out = TensorT<Real>::zeros(out_shape);
    const Real* px = x.data();
    Real* po = out.data();
    const int64_t n = x.numel();
    std::vector<int64_t> idx(rank, 0);
    for (int64_t i = 0; i < n; ++i) {
        int64_t src = 0;
        for (std::size_t d = 0; d < rank; ++d) src += idx[d] * gather[d];
        po[i] = px[src];
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on, gather, out_shape, rank] {
        xn->ensure_grad();
        const int64_t count = static_cast<int64_t>(on->grad.size());
        std::vector<int64_t> ix(rank, 0);
        for (int64_t i = 0; i < count; ++i) {
            int64_t src = 0;
            for (std::size_t d = 0; d < rank; ++d) src += ix[d] * gather[d];
            xn->grad[src] += on->grad[i];
            for (std::size_t d = rank; d-- > 0;) {
                if (++ix[d] < out_shape[d]) break;
                ix[d] = 0;
            }
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> sum(const TensorT<Real>& x) {
    Real acc = 0;
    const Real* px = x.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) acc += px[i];
    TensorT<Real> out = TensorT<Real>::scalar(acc);
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on] {
        const Real g = on->grad[0];
        xn->ensure_grad();
        for (auto& v : xn->grad) v += g;
    });
    return out;
}

template <typename Real>
TensorT<Real> mean(const TensorT<Real>& x) {
    TensorT<Real> s = sum(x);
    return scale(s, 1.0 / static_cast<double>(x.numel()));
}

template <typename Real>
TensorT<Real> global_avg_pool(const TensorT<Real>& x) {
    require(x.rank() == 4, "global_avg_pool: input must be N x C x H x W");
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    TensorT<Real> out = TensorT<Real>::zeros({n, c});
    const Real* px = x.data();
    Real* po = out.data();
    const Real inv = Real(1) / static_cast<Real>(hw);
    for (int64_t i = 0; i < n * c; ++i) {
        Real acc = 0;
        const Real* plane = px + i * hw;
        for (int64_t j = 0; j < hw; ++j) acc += plane[j];
        po[i] = acc * inv;
    }
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on, hw, inv] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) {
            const Real g = on->grad[i] * inv;
            Real* dst = xn->grad.data() + static_cast<int64_t>(i) * hw;
            for (int64_t j = 0; j < hw; ++j) dst[j] += g;
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> scale_channels(const TensorT<Real>& x, const TensorT<Real>& s) {
    require(x.rank() == 4 && s.rank() == 2 && s.dim(0) == x.dim(0) && s.dim(1) == x.dim(1),
            "scale_channels: expected x N x C x H x W and s N x C");
    const int64_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real* px = x.data();
    const Real* ps = s.data();
    Real* po = out.data();
    for (int64_t i = 0; i < nc; ++i) {
        const Real sv = ps[i];
        const Real* plane = px + i * hw;
        Real* dst = po + i * hw;
        for (int64_t j = 0; j < hw; ++j) dst[j] = plane[j] * sv;
    }
    auto xn = x.node(), sn = s.node(), on = out.node();
    record_if_tracked(x.requires_grad() || s.requires_grad(), out, [xn, sn, on, nc, hw] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int64_t i = 0; i < nc; ++i) {
                const Real sv = sn->data[i];
                const Real* g = on->grad.data() + i * hw;
                Real* dst = xn->grad.data() + i * hw;
                for (int64_t j = 0; j < hw; ++j) dst[j] += g[j] * sv;
            }
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            for (int64_t i = 0; i < nc; ++i) {
                const Real* g = on->grad.data() + i * hw;
                const Real* xv = xn->data.data() + i * hw;
                Real acc = 0;
                for (int64_t j = 0; j < hw; ++j) acc += g[j] * xv[j];
                sn->grad[i] += acc;
            }
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> softmax(const TensorT<Real>& x, int axis) {
    const std::size_t rank = x.rank();
    require(axis >= 0 && static_cast<std::size_t>(axis) < rank, "softmax: axis out of range");
    int64_t outer = 1, inner = 1;
    const int64_t ax = x.dim(axis);
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= x.dim(d);

    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real* px = x.data();
    Real* po = out.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * ax * inner + in;
            Real mx = px[base];
            for (int64_t a = 1; a < ax; ++a) mx = std::max(mx, px[base + a * inner]);
            Real denom = 0;
            for (int64_t a = 0; a < ax; ++a) {
                const Real e = softmax_exp(px[base + a * inner] - mx);
                po[base + a * inner] = e;
                denom += e;
            }
            const Real inv = Real(1) / denom;
            for (int64_t a = 0; a < ax; ++a) po[base + a * inner] *= inv;
        }
    }
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on, outer, inner, ax] {
        xn->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t in = 0; in < inner; ++in) {
                const int64_t base = o * ax * inner + in;
                Real dot = 0;
                for (int64_t a = 0; a < ax; ++a) {
                    const int64_t i = base + a * inner;
                    dot += on->grad[i] * on->data[i];
                }
                for (int64_t a = 0; a < ax; ++a) {
                    const int64_t i = base + a * inner;
                    xn->grad[i] += on->data[i] * (on->grad[i] - dot);
                }
            }
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul: operands must be 2-D");
    require(a.dim(1) == b.dim(0), "matmul: inner dims mismatch " + shape_str(a.shape()) + " x " +
                                      shape_str(b.shape()));
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorT<Real> out = TensorT<Real>::zeros({m, n});
    mm_accum(a.data(), b.data(), out.data(), m, k, n);
    check_finite(out, "matmul");
    auto an = a.node(), bn = b.node(), on = out.node();
    record_if_tracked(a.requires_grad() || b.requires_grad(), out, [an, bn, on, m, k, n] {
        if (an->requires_grad) {
            an->ensure_grad();
            mm_abT(on->grad.data(), bn->data.data(), an->grad.data(), m, n, k);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            mm_aTb(an->data.data(), on->grad.data(), bn->grad.data(), m, k, n);
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> linear(const TensorT<Real>& x, const TensorT<Real>& w, const TensorT<Real>& b) {
    require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "linear: x must be N x K, w K x M, b M");
    require(x.dim(1) == w.dim(0) && w.dim(1) == b.dim(0), "linear: dimension mismatch");
    const int64_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
    TensorT<Real> out = TensorT<Real>::zeros({n, m});
    Real* po = out.data();
    for (int64_t i = 0; i < n; ++i)
        std::memcpy(po + i * m, b.data(), static_cast<std::size_t>(m) * sizeof(Real));
    mm_accum(x.data(), w.data(), po, n, k, m);
    auto xn = x.node(), wn = w.node(), bn = b.node(), on = out.node();
    record_if_tracked(x.requires_grad() || w.requires_grad() || b.requires_grad(), out,
                      [xn, wn, bn, on, n, k, m] {
                          if (xn->requires_grad) {
                              xn->ensure_grad();
                              mm_abT(on->grad.data(), wn->data.data(), xn->grad.data(), n, m, k);
                          }
                          if (wn->requires_grad) {
                              wn->ensure_grad();
                              mm_aTb(xn->data.data(), on->grad.data(), wn->grad.data(), n, k, m);
                          }
                          if (bn->requires_grad) {
                              bn->ensure_grad();
                              for (int64_t i = 0; i < n; ++i)
                                  for (int64_t j = 0; j < m; ++j) bn->grad[j] += on->grad[i * m + j];
                          }
                      });
    return out;
}

template <typename Real>
TensorT<Real> conv2d(const TensorT<Real>& x, const TensorT<Real>& w, const TensorT<Real>& b,
                     int stride, int padding, int dilation) {
    const ConvDims d = conv_dims(x, w, stride, padding, dilation);
    if (b.defined())
        require(b.rank() == 1 && b.dim(0) == d.cout, "conv2d: bias must be [Cout]");
    const int64_t kdim = d.kh * d.kw * d.cin;
    const int64_t pcount = d.hout * d.wout;

    // pointwise convs skip im2col: the patch matrix is the input itself
    const bool pointwise = d.kh == 1 && d.kw == 1 && stride == 1 && padding == 0;
    const std::vector<Real> wr = repack_weight(w);
    TensorT<Real> out = TensorT<Real>::zeros({d.n, d.cout, d.hout, d.wout});
    std::vector<Real> cols(pointwise ? 0 : static_cast<std::size_t>(kdim * pcount));
    for (int64_t nn = 0; nn < d.n; ++nn) {
        const Real* cols_ptr;
        if (pointwise) {
            cols_ptr = x.data() + nn * d.cin * d.h * d.w;
        } else {
            im2col(x.data() + nn * d.cin * d.h * d.w, d, stride, padding, dilation, cols.data());
            cols_ptr = cols.data();
        }
        Real* yo = out.data() + nn * d.cout * pcount;
        if (b.defined()) {
            for (int64_t co = 0; co < d.cout; ++co)
                std::fill(yo + co * pcount, yo + (co + 1) * pcount, b.data()[co]);
        }
        mm_accum(wr.data(), cols_ptr, yo, d.cout, kdim, pcount);
    }
    check_finite(out, "conv2d");

    auto xn = x.node(), wn = w.node(), on = out.node();
    auto bnode = b.defined() ? b.node() : nullptr;
    const bool tracked =
        x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
    record_if_tracked(tracked, out, [xn, wn, bnode, on, d, wr, stride, padding, dilation, kdim,
                                     pcount, pointwise] {
        std::vector<Real> cols(pointwise ? 0 : static_cast<std::size_t>(kdim * pcount));
        std::vector<Real> dwr;
        std::vector<Real> dcols;
        if (wn->requires_grad) dwr.assign(wr.size(), Real(0));
        if (xn->requires_grad) {
            xn->ensure_grad();
            if (!pointwise) dcols.resize(static_cast<std::size_t>(kdim * pcount));
        }
        if (bnode && bnode->requires_grad) bnode->ensure_grad();
        for (int64_t nn = 0; nn < d.n; ++nn) {
            const Real* gy = on->grad.data() + nn * d.cout * pcount;
            if (wn->requires_grad) {
                const Real* cols_ptr;
                if (pointwise) {
                    cols_ptr = xn->data.data() + nn * d.cin * d.h * d.w;
                } else {
                    im2col(xn->data.data() + nn * d.cin * d.h * d.w, d, stride, padding, dilation,
                           cols.data());
                    cols_ptr = cols.data();
                }
                mm_abT(gy, cols_ptr, dwr.data(), d.cout, pcount, kdim);
            }
            if (xn->requires_grad) {
                if (pointwise) {
                    mm_aTb(wr.data(), gy, xn->grad.data() + nn * d.cin * d.h * d.w, d.cout, kdim,
                           pcount);
                } else {
                    std::fill(dcols.begin(), dcols.end(), Real(0));
                    mm_aTb(wr.data(), gy, dcols.data(), d.cout, kdim, pcount);
                    col2im_add(dcols.data(), d, stride, padding, dilation,
                               xn->grad.data() + nn * d.cin * d.h * d.w);
                }
            }
            if (bnode && bnode->requires_grad) {
                for (int64_t co = 0; co < d.cout; ++co) {
                    Real acc = 0;
                    const Real* row = gy + co * pcount;
                    for (int64_t p = 0; p < pcount; ++p) acc += row[p];
                    bnode->grad[co] += acc;
                }
            }
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            for (int64_t co = 0; co < d.cout; ++co)
                for (int64_t c = 0; c < d.cin; ++c)
                    for (int64_t a = 0; a < d.kh; ++a)
                        for (int64_t bb = 0; bb < d.kw; ++bb)
                            wn->grad[((co * d.cin + c) * d.kh + a) * d.kw + bb] +=
                                dwr[((co * d.kh + a) * d.kw + bb) * d.cin + c];
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> conv_transpose2d(const TensorT<Real>& x, const TensorT<Real>& w,
                               const TensorT<Real>& b, int stride) {
    require(x.rank() == 4, "conv_transpose2d: input must be N x C x H x W");
    require(w.rank() == 4, "conv_transpose2d: weight must be Cin x Cout x Kh x Kw");
    require(x.dim(1) == w.dim(0), "conv_transpose2d: channel mismatch");
    const int64_t kh = w.dim(2), kw = w.dim(3);
    require(kh == stride && kw == stride,
            "conv_transpose2d: kernel must equal stride (non-overlapping upsampling)");
    const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), ww = x.dim(3);
    const int64_t cout = w.dim(1);
    const int64_t hout = h * stride, wout = ww * stride;
    if (b.defined()) require(b.rank() == 1 && b.dim(0) == cout, "conv_transpose2d: bias must be [Cout]");

    TensorT<Real> out = TensorT<Real>::zeros({n, cout, hout, wout});
    const Real* px = x.data();
    const Real* pw = w.data();
    Real* po = out.data();
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t co = 0; co < cout; ++co) {
            const Real bias = b.defined() ? b.data()[co] : Real(0);
            Real* oc = po + (nn * cout + co) * hout * wout;
            for (int64_t oh = 0; oh < hout; ++oh) {
                const int64_t ih = oh / stride, a = oh % stride;
                for (int64_t ow = 0; ow < wout; ++ow) {
                    const int64_t iw = ow / stride, bb = ow % stride;
                    Real acc = bias;
                    for (int64_t ci = 0; ci < cin; ++ci)
                        acc += px[((nn * cin + ci) * h + ih) * ww + iw] *
                               pw[((ci * cout + co) * kh + a) * kw + bb];
                    oc[oh * wout + ow] = acc;
                }
            }
        }
    }
    check_finite(out, "conv_transpose2d");

    auto xn = x.node(), wn = w.node(), on = out.node();
    auto bnode = b.defined() ? b.node() : nullptr;
    const bool tracked =
        x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
    record_if_tracked(tracked, out, [xn, wn, bnode, on, n, cin, cout, h, ww, hout, wout, kh, kw,
                                     stride] {
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bnode && bnode->requires_grad) bnode->ensure_grad();
        for (int64_t nn = 0; nn < n; ++nn) {
            for (int64_t co = 0; co < cout; ++co) {
                const Real* g = on->grad.data() + (nn * cout + co) * hout * wout;
                if (bnode && bnode->requires_grad) {
                    Real acc = 0;
                    for (int64_t i = 0; i < hout * wout; ++i) acc += g[i];
                    bnode->grad[co] += acc;
                }
                for (int64_t ci = 0; ci < cin; ++ci) {
                    for (int64_t a = 0; a < kh; ++a) {
                        for (int64_t bb = 0; bb < kw; ++bb) {
                            const Real wv = wn->data[((ci * cout + co) * kh + a) * kw + bb];
                            Real wacc = 0;
                            for (int64_t ih = 0; ih < h; ++ih) {
                                for (int64_t iw = 0; iw < ww; ++iw) {
                                    const Real gv = g[(ih * stride + a) * wout + iw * stride + bb];
                                    const int64_t xi = ((nn * cin + ci) * h + ih) * ww + iw;
                                    if (xn->requires_grad) xn->grad[xi] += gv * wv;
                                    wacc += gv * xn->data[xi];
                                }
                            }
                            if (wn->requires_grad)
                                wn->grad[((ci * cout + co) * kh + a) * kw + bb] += wacc;
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> maxpool2d(const TensorT<Real>& x, int window, int stride) {
    require(x.rank() == 4, "maxpool2d: input must be N x C x H x W");
    require(window >= 1 && stride >= 1, "maxpool2d: window/stride must be >= 1");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t hout = (h - window) / stride + 1, wout = (w - window) / stride + 1;
    require(h >= window && w >= window && hout >= 1 && wout >= 1,
            "maxpool2d: window larger than input");
    TensorT<Real> out = TensorT<Real>::zeros({n, c, hout, wout});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<std::size_t>(out.numel()));
    const Real* px = x.data();
    Real* po = out.data();
    int64_t oi = 0;
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const Real* plane = px + nc * h * w;
        for (int64_t oh = 0; oh < hout; ++oh) {
            for (int64_t ow = 0; ow < wout; ++ow, ++oi) {
                const int64_t h0 = oh * stride, w0 = ow * stride;
                Real best = plane[h0 * w + w0];
                int64_t best_idx = h0 * w + w0;
                for (int64_t a = 0; a < window; ++a)
                    for (int64_t bb = 0; bb < window; ++bb) {
                        const int64_t idx = (h0 + a) * w + w0 + bb;
                        if (plane[idx] > best) {  // strict: first occurrence wins ties
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                po[oi] = best;
                (*argmax)[static_cast<std::size_t>(oi)] = nc * h * w + best_idx;
            }
        }
    }
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on, argmax] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[(*argmax)[i]] += on->grad[i];
    });
    return out;
}

template <typename Real>
TensorT<Real> batchnorm2d(const TensorT<Real>& x, const TensorT<Real>& gamma,
                          const TensorT<Real>& beta, TensorT<Real>& running_mean,
                          TensorT<Real>& running_var, bool training, double momentum, double eps) {
    require(x.rank() == 4, "batchnorm2d: input must be N x C x H x W");
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require(gamma.numel() == c && beta.numel() == c && running_mean.numel() == c &&
                running_var.numel() == c,
            "batchnorm2d: parameter size mismatch with " + std::to_string(c) + " channels");
    const int64_t m = n * hw;
    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real* px = x.data();
    Real* po = out.data();

    auto mean_v = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(c));
    auto invstd_v = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(c));
    if (training) {
        for (int64_t ch = 0; ch < c; ++ch) {
            Real acc = 0;
            for (int64_t nn = 0; nn < n; ++nn) {
                const Real* plane = px + (nn * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) acc += plane[j];
            }
            const Real mu = acc / static_cast<Real>(m);
            Real var = 0;
            for (int64_t nn = 0; nn < n; ++nn) {
                const Real* plane = px + (nn * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                    const Real d = plane[j] - mu;
                    var += d * d;
                }
            }
            var /= static_cast<Real>(m);
            (*mean_v)[ch] = mu;
            (*invstd_v)[ch] = Real(1) / std::sqrt(var + static_cast<Real>(eps));
            running_mean.data()[ch] = static_cast<Real>((1.0 - momentum) * running_mean.data()[ch] +
                                                        momentum * mu);
            running_var.data()[ch] =
                static_cast<Real>((1.0 - momentum) * running_var.data()[ch] + momentum * var);
        }
    } else {
        for (int64_t ch = 0; ch < c; ++ch) {
            (*mean_v)[ch] = running_mean.data()[ch];
            (*invstd_v)[ch] =
                Real(1) / std::sqrt(running_var.data()[ch] + static_cast<Real>(eps));
        }
    }
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const Real mu = (*mean_v)[ch], is = (*invstd_v)[ch];
            const Real gg = gamma.data()[ch], bb = beta.data()[ch];
            const Real* plane = px + (nn * c + ch) * hw;
            Real* dst = po + (nn * c + ch) * hw;
            for (int64_t j = 0; j < hw; ++j) dst[j] = (plane[j] - mu) * is * gg + bb;
        }
    }
    check_finite(out, "batchnorm2d");

    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    const bool tracked = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    record_if_tracked(tracked, out, [xn, gn, bn, on, mean_v, invstd_v, n, c, hw, m, training] {
        for (int64_t ch = 0; ch < c; ++ch) {
            const Real mu = (*mean_v)[ch], is = (*invstd_v)[ch];
            const Real gg = gn->data[ch];
            // per-channel reductions over N x H x W
            Real sum_g = 0, sum_gx = 0;
            for (int64_t nn = 0; nn < n; ++nn) {
                const int64_t base = (nn * c + ch) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                    const Real g = on->grad[base + j];
                    sum_g += g;
                    sum_gx += g * (xn->data[base + j] - mu) * is;
                }
            }
            if (gn->requires_grad) {
                gn->ensure_grad();
                gn->grad[ch] += sum_gx;
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                bn->grad[ch] += sum_g;
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                if (training) {
                    const Real k = gg * is / static_cast<Real>(m);
                    for (int64_t nn = 0; nn < n; ++nn) {
                        const int64_t base = (nn * c + ch) * hw;
                        for (int64_t j = 0; j < hw; ++j) {
                            const Real xhat = (xn->data[base + j] - mu) * is;
                            xn->grad[base + j] +=
                                k * (static_cast<Real>(m) * on->grad[base + j] - sum_g -
                                     xhat * sum_gx);
                        }
                    }
                } else {
                    const Real k = gg * is;
                    for (int64_t nn = 0; nn < n; ++nn) {
                        const int64_t base = (nn * c + ch) * hw;
                        for (int64_t j = 0; j < hw; ++j) xn->grad[base + j] += k * on->grad[base + j];
                    }
                }
            }
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> dropout(const TensorT<Real>& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0, 1)");
    if (!training || p == 0.0) return x;
    const Real scale_keep = static_cast<Real>(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(x.numel()));
    TensorT<Real> out = TensorT<Real>::zeros(x.shape());
    const Real* px = x.data();
    Real* po = out.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
        const Real mv = rng.uniform() >= p ? scale_keep : Real(0);
        (*mask)[static_cast<std::size_t>(i)] = mv;
        po[i] = px[i] * mv;
    }
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on, mask] {
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * (*mask)[i];
    });
    return out;
}

template <typename Real>
TensorT<Real> upsample_bilinear2x(const TensorT<Real>& x) {
    require(x.rank() == 4, "upsample_bilinear2x: input must be N x C x H x W");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t hout = 2 * h, wout = 2 * w;
    // precompute source taps per output coordinate (align-corners false)
    auto taps = [](int64_t out_size, int64_t in_size, std::vector<int64_t>& i0,
                   std::vector<int64_t>& i1, std::vector<Real>& frac) {
        i0.resize(out_size);
        i1.resize(out_size);
        frac.resize(out_size);
        for (int64_t o = 0; o < out_size; ++o) {
            double s = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
            if (s < 0) s = 0;
            const int64_t lo = std::min<int64_t>(static_cast<int64_t>(s), in_size - 1);
            i0[o] = lo;
            i1[o] = std::min<int64_t>(lo + 1, in_size - 1);
            frac[o] = static_cast<Real>(s - static_cast<double>(lo));
        }
    };
    auto y0 = std::make_shared<std::vector<int64_t>>();
    auto y1 = std::make_shared<std::vector<int64_t>>();
    auto fy = std::make_shared<std::vector<Real>>();
    auto x0 = std::make_shared<std::vector<int64_t>>();
    auto x1 = std::make_shared<std::vector<int64_t>>();
    auto fx = std::make_shared<std::vector<Real>>();
    taps(hout, h, *y0, *y1, *fy);
    taps(wout, w, *x0, *x1, *fx);

    TensorT<Real> out = TensorT<Real>::zeros({n, c, hout, wout});
    const Real* px = x.data();
    Real* po = out.data();
    for (int64_t plane = 0; plane < n * c; ++plane) {
        const Real* src = px + plane * h * w;
        Real* dst = po + plane * hout * wout;
        for (int64_t oy = 0; oy < hout; ++oy) {
            const int64_t r0 = (*y0)[oy], r1 = (*y1)[oy];
            const Real wy = (*fy)[oy];
            for (int64_t ox = 0; ox < wout; ++ox) {
                const int64_t c0 = (*x0)[ox], c1 = (*x1)[ox];
                const Real wx = (*fx)[ox];
                const Real top = src[r0 * w + c0] * (Real(1) - wx) + src[r0 * w + c1] * wx;
                const Real bot = src[r1 * w + c0] * (Real(1) - wx) + src[r1 * w + c1] * wx;
                dst[oy * wout + ox] = top * (Real(1) - wy) + bot * wy;
            }
        }
    }
    auto xn = x.node(), on = out.node();
    record_if_tracked(x.requires_grad(), out, [xn, on, y0, y1, fy, x0, x1, fx, n, c, h, w, hout,
                                               wout] {
        xn->ensure_grad();
        for (int64_t plane = 0; plane < n * c; ++plane) {
            const Real* g = on->grad.data() + plane * hout * wout;
            Real* dst = xn->grad.data() + plane * h * w;
            for (int64_t oy = 0; oy < hout; ++oy) {
                const int64_t r0 = (*y0)[oy], r1 = (*y1)[oy];
                const Real wy = (*fy)[oy];
                for (int64_t ox = 0; ox < wout; ++ox) {
                    const int64_t c0 = (*x0)[ox], c1 = (*x1)[ox];
                    const Real wx = (*fx)[ox];
                    const Real gv = g[oy * wout + ox];
                    dst[r0 * w + c0] += gv * (Real(1) - wy) * (Real(1) - wx);
                    dst[r0 * w + c1] += gv * (Real(1) - wy) * wx;
                    dst[r1 * w + c0] += gv * wy * (Real(1) - wx);
                    dst[r1 * w + c1] += gv * wy * wx;
                }
            }
        }
    });
    return out;
}

#define UCM_INSTANTIATE_OPS(R)                                                                     \
    template TensorT<R> add<R>(const TensorT<R>&, const TensorT<R>&);                             \
    template TensorT<R> mul<R>(const TensorT<R>&, const TensorT<R>&);                             \
    template TensorT<R> scale<R>(const TensorT<R>&, double);                                      \
    template TensorT<R> mul_scalar_param<R>(const TensorT<R>&, const TensorT<R>&);               \
    template TensorT<R> relu<R>(const TensorT<R>&);                                              \
    template TensorT<R> sigmoid<R>(const TensorT<R>&);                                           \
    template TensorT<R> silu<R>(const TensorT<R>&);                                              \
    template TensorT<R> concat<R>(const std::vector<TensorT<R>>&, int);                          \
    template TensorT<R> narrow0<R>(const TensorT<R>&, std::int64_t, std::int64_t);               \
    template TensorT<R> reshape<R>(const TensorT<R>&, Shape);                                    \
    template TensorT<R> permute<R>(const TensorT<R>&, const std::vector<int>&);                  \
    template TensorT<R> sum<R>(const TensorT<R>&);                                               \
    template TensorT<R> mean<R>(const TensorT<R>&);                                              \
    template TensorT<R> global_avg_pool<R>(const TensorT<R>&);                                   \
    template TensorT<R> scale_channels<R>(const TensorT<R>&, const TensorT<R>&);                 \
    template TensorT<R> softmax<R>(const TensorT<R>&, int);                                      \
    template TensorT<R> matmul<R>(const TensorT<R>&, const TensorT<R>&);                         \
    template TensorT<R> linear<R>(const TensorT<R>&, const TensorT<R>&, const TensorT<R>&);      \
    template TensorT<R> conv2d<R>(const TensorT<R>&, const TensorT<R>&, const TensorT<R>&, int,  \
                                  int, int);                                                     \
    template TensorT<R> conv_transpose2d<R>(const TensorT<R>&, const TensorT<R>&,                \
                                            const TensorT<R>&, int);                             \
    template TensorT<R> maxpool2d<R>(const TensorT<R>&, int, int);                               \
    template TensorT<R> batchnorm2d<R>(const TensorT<R>&, const TensorT<R>&, const TensorT<R>&,  \
                                       TensorT<R>&, TensorT<R>&, bool, double, double);          \
    template TensorT<R> dropout<R>(const TensorT<R>&, double, bool, Rng&);                       \
    template TensorT<R> upsample_bilinear2x<R>(const TensorT<R>&);

UCM_INSTANTIATE_OPS(float)
UCM_INSTANTIATE_OPS(double)

}  // namespace ucm
