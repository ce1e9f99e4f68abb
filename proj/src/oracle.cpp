#include "ucm/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace ucm::oracle {

ShadowTensor::ShadowTensor(std::vector<std::int64_t> s, double fill) : shape(std::move(s)) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    data.assign(static_cast<std::size_t>(n), fill);
}

ShadowTensor naive_conv2d(const ShadowTensor& x, const ShadowTensor& w,
                          const std::vector<double>& b, int stride, int padding, int dilation) {
    const std::int64_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], ww = x.shape[3];
    const std::int64_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const std::int64_t hout = (h + 2 * padding - dilation * (kh - 1) - 1) / stride + 1;
    const std::int64_t wout = (ww + 2 * padding - dilation * (kw - 1) - 1) / stride + 1;
    if (hout < 1 || wout < 1) throw std::runtime_error("naive_conv2d: non-positive output dims");
    ShadowTensor out({n, cout, hout, wout});
    for (std::int64_t nn = 0; nn < n; ++nn)
        for (std::int64_t co = 0; co < cout; ++co)
            for (std::int64_t oh = 0; oh < hout; ++oh)
                for (std::int64_t ow = 0; ow < wout; ++ow) {
                    double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(co)];
                    for (std::int64_t ci = 0; ci < cin; ++ci)
                        for (std::int64_t a = 0; a < kh; ++a)
                            for (std::int64_t bb = 0; bb < kw; ++bb) {
                                const std::int64_t ih = oh * stride - padding + a * dilation;
                                const std::int64_t iw = ow * stride - padding + bb * dilation;
                                if (ih < 0 || ih >= h || iw < 0 || iw >= ww) continue;
                                acc += x.data[static_cast<std::size_t>(
                                           ((nn * cin + ci) * h + ih) * ww + iw)] *
                                       w.data[static_cast<std::size_t>(
                                           ((co * cin + ci) * kh + a) * kw + bb)];
                            }
                    out.data[static_cast<std::size_t>(((nn * cout + co) * hout + oh) * wout + ow)] =
                        acc;
                }
    return out;
}

ShadowTensor naive_attention(const ShadowTensor& y, const ShadowTensor& wq, const ShadowTensor& wk,
                             const ShadowTensor& wv, double alpha) {
    const std::int64_t c = y.shape[0], h = y.shape[1], w = y.shape[2];
    const std::int64_t npos = h * w;
    // 1x1 projections: q(p, j) = sum_i y(i at p) * wq(j, i)
    auto project = [&](const ShadowTensor& m) {
        std::vector<double> r(static_cast<std::size_t>(npos * c), 0.0);
        for (std::int64_t p = 0; p < npos; ++p)
            for (std::int64_t j = 0; j < c; ++j) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < c; ++i)
                    acc += y.data[static_cast<std::size_t>(i * npos + p)] *
                           m.data[static_cast<std::size_t>(j * c + i)];
                r[static_cast<std::size_t>(p * c + j)] = acc;
            }
        return r;
    };
    const std::vector<double> q = project(wq);
    const std::vector<double> k = project(wk);
    const std::vector<double> v = project(wv);

    // S = softmax(Q K^T) row-wise
    std::vector<double> s(static_cast<std::size_t>(npos * npos), 0.0);
    for (std::int64_t i = 0; i < npos; ++i) {
        double mx = -1e300;
        std::vector<double> row(static_cast<std::size_t>(npos));
        for (std::int64_t j = 0; j < npos; ++j) {
            double acc = 0.0;
            for (std::int64_t cc = 0; cc < c; ++cc)
                acc += q[static_cast<std::size_t>(i * c + cc)] *
                       k[static_cast<std::size_t>(j * c + cc)];
            row[static_cast<std::size_t>(j)] = acc;
            if (acc > mx) mx = acc;
        }
        double denom = 0.0;
        for (std::int64_t j = 0; j < npos; ++j) {
            row[static_cast<std::size_t>(j)] = std::exp(row[static_cast<std::size_t>(j)] - mx);
            denom += row[static_cast<std::size_t>(j)];
        }
        for (std::int64_t j = 0; j < npos; ++j)
            s[static_cast<std::size_t>(i * npos + j)] = row[static_cast<std::size_t>(j)] / denom;
    }

    // out = alpha * S^T V + y, back in C x H x W layout
    ShadowTensor out({c, h, w});
    for (std::int64_t p = 0; p < npos; ++p)
        for (std::int64_t cc = 0; cc < c; ++cc) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < npos; ++i)
                acc += s[static_cast<std::size_t>(i * npos + p)] *
                       v[static_cast<std::size_t>(i * c + cc)];
            out.data[static_cast<std::size_t>(cc * npos + p)] =
                alpha * acc + y.data[static_cast<std::size_t>(cc * npos + p)];
        }
    return out;
}

ShadowTensor naive_cyclefc(const ShadowTensor& x, const ShadowTensor& w,
                           const std::vector<double>& b, int step_h, int step_w) {
    const std::int64_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], ww = x.shape[3];
    const std::int64_t cout = w.shape[1];
    ShadowTensor out({n, cout, h, ww});
    for (std::int64_t nn = 0; nn < n; ++nn)
        for (std::int64_t co = 0; co < cout; ++co)
            for (std::int64_t i = 0; i < h; ++i)
                for (std::int64_t j = 0; j < ww; ++j) {
                    double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(co)];
                    for (std::int64_t c = 0; c < cin; ++c) {
                        const std::int64_t dh = (c % step_h) - step_h / 2;
                        const std::int64_t dw = (c % step_w) - step_w / 2;
                        const std::int64_t si = i + dh, sj = j + dw;
                        if (si < 0 || si >= h || sj < 0 || sj >= ww) continue;
                        acc += x.data[static_cast<std::size_t>(((nn * cin + c) * h + si) * ww + sj)] *
                               w.data[static_cast<std::size_t>(c * cout + co)];
                    }
                    out.data[static_cast<std::size_t>(((nn * cout + co) * h + i) * ww + j)] = acc;
                }
    return out;
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& x, double h) {
    std::vector<std::size_t> coords(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) coords[i] = i;
    return finite_diff_grad_at(f, x, h, coords);
}

std::vector<double> finite_diff_grad_at(const std::function<double(const std::vector<double>&)>& f,
                                        const std::vector<double>& x, double h,
                                        const std::vector<std::size_t>& coords) {
    std::vector<double> g(x.size(), 0.0);
    std::vector<double> probe = x;
    for (const std::size_t i : coords) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

MetricTriple enumerate_metrics(const std::vector<std::int32_t>& pred,
                               const std::vector<std::int32_t>& gt, std::int32_t cls) {
    std::int64_t p_size = 0, g_size = 0, inter = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool in_p = pred[i] == cls;
        const bool in_g = gt[i] == cls;
        if (in_p) ++p_size;
        if (in_g) ++g_size;
        if (in_p && in_g) ++inter;
    }
    MetricTriple m;
    if (p_size == 0 && g_size == 0) {
        m.f1 = m.iou = m.dsc = 1.0;
        return m;
    }
    const std::int64_t uni = p_size + g_size - inter;
    m.iou = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
    m.dsc = (p_size + g_size) > 0
                ? 2.0 * static_cast<double>(inter) / static_cast<double>(p_size + g_size)
                : 1.0;
    // F1 from precision/recall reduces to the same ratio
    const double precision = p_size > 0 ? static_cast<double>(inter) / p_size : (g_size == 0 ? 1.0 : 0.0);
    const double recall = g_size > 0 ? static_cast<double>(inter) / g_size : (p_size == 0 ? 1.0 : 0.0);
    m.f1 = (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return m;
}

}  // namespace ucm::oracle
