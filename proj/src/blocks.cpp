#include "ucm/blocks.hpp"

#include <cmath>

#include "ucm/detail/kernels.hpp"

namespace ucm {
namespace {

// Fused per-sample position-attention core: att_n = (S^T V)^T with
// S = softmax(Q K^T) over rows. q/k/v are the projected maps, channel-major
// per sample (C x HW); one (HW)^2 buffer per sample lives in the closure and
// every backward reduction runs in a fixed row order.
template <typename Real>
TensorT<Real> attention_core(const TensorT<Real>& q, const TensorT<Real>& k,
                             const TensorT<Real>& v) {
    const std::int64_t n = q.dim(0), c = q.dim(1), npos = q.dim(2) * q.dim(3);
    TensorT<Real> out = TensorT<Real>::zeros(q.shape());

    auto smaps = std::make_shared<std::vector<std::vector<Real>>>();
    const bool tracked =
        GradMode::enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
    smaps->reserve(tracked ? static_cast<std::size_t>(n) : 0);

    std::vector<Real> scratch;
    for (std::int64_t nn = 0; nn < n; ++nn) {
        const Real* qp = q.data() + nn * c * npos;
        const Real* kp = k.data() + nn * c * npos;
        const Real* vp = v.data() + nn * c * npos;
        Real* op = out.data() + nn * c * npos;

        std::vector<Real>& s = tracked ? smaps->emplace_back() : scratch;
        s.assign(static_cast<std::size_t>(npos) * npos, Real(0));
        // logits row i: sum_c q(c,i) * k(c,:), then softmax in place
        for (std::int64_t i = 0; i < npos; ++i) {
            Real* row = s.data() + i * npos;
            for (std::int64_t cc = 0; cc < c; ++cc) {
                const Real qv = qp[cc * npos + i];
                const Real* krow = kp + cc * npos;
                for (std::int64_t j = 0; j < npos; ++j) row[j] += qv * krow[j];
            }
            Real mx = row[0];
            for (std::int64_t j = 1; j < npos; ++j) mx = std::max(mx, row[j]);
            Real denom = 0;
            for (std::int64_t j = 0; j < npos; ++j) {
                row[j] = detail::softmax_exp(row[j] - mx);
                denom += row[j];
            }
            const Real inv = Real(1) / denom;
            for (std::int64_t j = 0; j < npos; ++j) row[j] *= inv;
        }
        // out(c,:) accumulates v(c,i) * S(i,:), i ascending
        for (std::int64_t i = 0; i < npos; ++i) {
            const Real* row = s.data() + i * npos;
            for (std::int64_t cc = 0; cc < c; ++cc) {
                const Real vv = vp[cc * npos + i];
                Real* orow = op + cc * npos;
                for (std::int64_t j = 0; j < npos; ++j) orow[j] += vv * row[j];
            }
        }
    }
    check_finite(out, "attention_core");

    auto qn = q.node(), kn = k.node(), vn = v.node(), on = out.node();
    record_if_tracked(tracked, out, [qn, kn, vn, on, smaps, n, c, npos] {
        qn->ensure_grad();
        kn->ensure_grad();
        vn->ensure_grad();
        std::vector<Real> drow(static_cast<std::size_t>(npos));
        for (std::int64_t nn = 0; nn < n; ++nn) {
            const Real* gy = on->grad.data() + nn * c * npos;
            const Real* qp = qn->data.data() + nn * c * npos;
            const Real* kp = kn->data.data() + nn * c * npos;
            const Real* vp = vn->data.data() + nn * c * npos;
            Real* dq = qn->grad.data() + nn * c * npos;
            Real* dk = kn->grad.data() + nn * c * npos;
            Real* dv = vn->grad.data() + nn * c * npos;
            std::vector<Real>& s = (*smaps)[static_cast<std::size_t>(nn)];
            // pass 1: per row — dV, dS, softmax backward; the S row is
            // rewritten with the logit gradients
            for (std::int64_t i = 0; i < npos; ++i) {
                Real* row = s.data() + i * npos;
                for (std::int64_t cc = 0; cc < c; ++cc)
                    dv[cc * npos + i] += detail::dot_n(gy + cc * npos, row, npos);
                std::fill(drow.begin(), drow.end(), Real(0));
                for (std::int64_t cc = 0; cc < c; ++cc) {
                    const Real vv = vp[cc * npos + i];
                    const Real* grow = gy + cc * npos;
                    for (std::int64_t j = 0; j < npos; ++j) drow[j] += vv * grow[j];
                }
                const Real dot = detail::dot_n(drow.data(), row, npos);
                for (std::int64_t j = 0; j < npos; ++j) row[j] = row[j] * (drow[j] - dot);
            }
            // pass 2: per row of logit gradients — dQ dots and dK rank-1 updates
            for (std::int64_t i = 0; i < npos; ++i) {
                const Real* lrow = s.data() + i * npos;
                for (std::int64_t cc = 0; cc < c; ++cc)
                    dq[cc * npos + i] += detail::dot_n(lrow, kp + cc * npos, npos);
                for (std::int64_t cc = 0; cc < c; ++cc) {
                    const Real qv = qp[cc * npos + i];
                    Real* dkrow = dk + cc * npos;
                    for (std::int64_t j = 0; j < npos; ++j) dkrow[j] += qv * lrow[j];
                }
            }
            s = std::vector<Real>();  // release this sample's map eagerly
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
    const Real bound = static_cast<Real>(std::sqrt(6.0 / static_cast<double>(fan_in)));
    TensorT<Real> t = TensorT<Real>::uniform(std::move(shape), rng, bound);
    t.set_requires_grad(true);
    return t;
}

template <typename Real>
TensorT<Real> zeros_param(Shape shape) {
    TensorT<Real> t = TensorT<Real>::zeros(std::move(shape));
    t.set_requires_grad(true);
    return t;
}

}  // namespace

template <typename Real>
BatchNorm2dT<Real> BatchNorm2dT<Real>::make(int channels) {
    BatchNorm2dT p;
    p.gamma = TensorT<Real>::filled({channels}, Real(1));
    p.gamma.set_requires_grad(true);
    p.beta = zeros_param<Real>({channels});
    p.running_mean = TensorT<Real>::zeros({channels});
    p.running_var = TensorT<Real>::filled({channels}, Real(1));
    return p;
}

template <typename Real>
void BatchNorm2dT<Real>::collect(ParamStoreT<Real>& params, NamedTensorsT<Real>& buffers,
                                 const std::string& prefix) const {
    params.add(prefix + ".gamma", gamma);
    params.add(prefix + ".beta", beta);
    buffers.add(prefix + ".running_mean", running_mean);
    buffers.add(prefix + ".running_var", running_var);
}

template <typename Real>
WeParamsT<Real> WeParamsT<Real>::make(int channels, int reduction, Rng& rng) {
    if (reduction < 1 || channels % reduction != 0)
        throw ConfigError("weight excitation: reduction " + std::to_string(reduction) +
                          " must divide channel count " + std::to_string(channels));
    const int hidden = channels / reduction;
    if (hidden < 1) throw ConfigError("weight excitation: hidden dim must be >= 1");
    WeParamsT p;
    p.reduction = reduction;
    p.fc1_w = kaiming_uniform<Real>({channels, hidden}, channels, rng);
    p.fc1_b = zeros_param<Real>({hidden});
    p.fc2_w = kaiming_uniform<Real>({hidden, channels}, hidden, rng);
    p.fc2_b = zeros_param<Real>({channels});
    return p;
}

template <typename Real>
void WeParamsT<Real>::collect(ParamStoreT<Real>& params, const std::string& prefix) const {
    params.add(prefix + ".fc1.w", fc1_w);
    params.add(prefix + ".fc1.b", fc1_b);
    params.add(prefix + ".fc2.w", fc2_w);
    params.add(prefix + ".fc2.b", fc2_b);
}

template <typename Real>
PaweParamsT<Real> PaweParamsT<Real>::make(int channels, int we_reduction, double dropout_p,
                                          Rng& rng) {
    PaweParamsT p;
    p.q_w = kaiming_uniform<Real>({channels, channels, 1, 1}, channels, rng);
    p.k_w = kaiming_uniform<Real>({channels, channels, 1, 1}, channels, rng);
    p.v_w = kaiming_uniform<Real>({channels, channels, 1, 1}, channels, rng);
    p.alpha = zeros_param<Real>({1});
    p.we = WeParamsT<Real>::make(channels, we_reduction, rng);
    p.bn = BatchNorm2dT<Real>::make(channels);
    p.dropout_p = dropout_p;
    return p;
}

template <typename Real>
void PaweParamsT<Real>::collect(ParamStoreT<Real>& params, NamedTensorsT<Real>& buffers,
                                const std::string& prefix) const {
    params.add(prefix + ".q.w", q_w);
    params.add(prefix + ".k.w", k_w);
    params.add(prefix + ".v.w", v_w);
    params.add(prefix + ".alpha", alpha);
    we.collect(params, prefix + ".we");
    bn.collect(params, buffers, prefix + ".bn");
}

template <typename Real>
ConvBnT<Real> ConvBnT<Real>::make(int cin, int cout, int ksize, Rng& rng) {
    ConvBnT p;
    p.w = kaiming_uniform<Real>({cout, cin, ksize, ksize},
                                static_cast<std::int64_t>(cin) * ksize * ksize, rng);
    p.b = zeros_param<Real>({cout});
    p.bn = BatchNorm2dT<Real>::make(cout);
    return p;
}

template <typename Real>
void ConvBnT<Real>::collect(ParamStoreT<Real>& params, NamedTensorsT<Real>& buffers,
                            const std::string& prefix) const {
    params.add(prefix + ".w", w);
    params.add(prefix + ".b", b);
    bn.collect(params, buffers, prefix + ".bn");
}

template <typename Real>
DaBlockParamsT<Real> DaBlockParamsT<Real>::make(int cin, int cout, int depth, int growth,
                                                int dilation, Rng& rng) {
    if (depth < 1 || growth < 1) throw ConfigError("dense block: depth and growth must be >= 1");
    if (dilation < 1) throw ConfigError("dense block: dilation must be >= 1");
    DaBlockParamsT p;
    p.cin = cin;
    p.cout = cout;
    p.growth = growth;
    p.dilation = dilation;
    for (int l = 0; l < depth; ++l)
        p.dense.push_back(ConvBnT<Real>::make(cin + l * growth, growth, 3, rng));
    p.transition = ConvBnT<Real>::make(cin + depth * growth, cout, 1, rng);
    p.atrous = ConvBnT<Real>::make(cin, cout, 3, rng);
    return p;
}

template <typename Real>
void DaBlockParamsT<Real>::collect(ParamStoreT<Real>& params, NamedTensorsT<Real>& buffers,
                                   const std::string& prefix) const {
    for (std::size_t l = 0; l < dense.size(); ++l)
        dense[l].collect(params, buffers, prefix + ".dense" + std::to_string(l + 1));
    transition.collect(params, buffers, prefix + ".trans");
    atrous.collect(params, buffers, prefix + ".atrous");
}

template <typename Real>
CaweParamsT<Real> CaweParamsT<Real>::make(int channels, int we_reduction, Rng& rng) {
    CaweParamsT p;
    p.beta = zeros_param<Real>({1});
    p.we = WeParamsT<Real>::make(channels, we_reduction, rng);
    return p;
}

template <typename Real>
void CaweParamsT<Real>::collect(ParamStoreT<Real>& params, const std::string& prefix) const {
    params.add(prefix + ".beta", beta);
    we.collect(params, prefix + ".we");
}

template <typename Real>
CycleFcParamsT<Real> CycleFcParamsT<Real>::make(int cin, int cout, int step_h, int step_w,
                                                Rng& rng) {
    if (step_h < 1 || step_w < 1 || (step_h > 1 && step_w > 1))
        throw ConfigError("cycle_fc: stepsize must be (S,1), (1,S) or (1,1), got (" +
                          std::to_string(step_h) + "," + std::to_string(step_w) + ")");
    CycleFcParamsT p;
    p.step_h = step_h;
    p.step_w = step_w;
    p.w = kaiming_uniform<Real>({cin, cout}, cin, rng);
    p.b = zeros_param<Real>({cout});
    return p;
}

template <typename Real>
void CycleFcParamsT<Real>::collect(ParamStoreT<Real>& params, const std::string& prefix) const {
    params.add(prefix + ".w", w);
    params.add(prefix + ".b", b);
}

template <typename Real>
CycleMlpParamsT<Real> CycleMlpParamsT<Real>::make(
    int channels, const std::array<std::array<int, 2>, 3>& stepsizes, Rng& rng) {
    CycleMlpParamsT p;
    p.fc_w = CycleFcParamsT<Real>::make(channels, channels, stepsizes[0][0], stepsizes[0][1], rng);
    p.fc_h = CycleFcParamsT<Real>::make(channels, channels, stepsizes[1][0], stepsizes[1][1], rng);
    p.fc_id = CycleFcParamsT<Real>::make(channels, channels, stepsizes[2][0], stepsizes[2][1], rng);
    return p;
}

template <typename Real>
void CycleMlpParamsT<Real>::collect(ParamStoreT<Real>& params, const std::string& prefix) const {
    fc_w.collect(params, prefix + ".fcw");
    fc_h.collect(params, prefix + ".fch");
    fc_id.collect(params, prefix + ".fcid");
}

template <typename Real>
CcmParamsT<Real> CcmParamsT<Real>::make(int channels, int we_reduction,
                                        const std::array<std::array<int, 2>, 3>& stepsizes,
                                        Rng& rng) {
    CcmParamsT p;
    p.cawe = CaweParamsT<Real>::make(channels, we_reduction, rng);
    p.mlp = CycleMlpParamsT<Real>::make(channels, stepsizes, rng);
    return p;
}

template <typename Real>
void CcmParamsT<Real>::collect(ParamStoreT<Real>& params, const std::string& prefix) const {
    cawe.collect(params, prefix + ".cawe");
    mlp.collect(params, prefix + ".mlp");
}

// --- forwards ---

template <typename Real>
TensorT<Real> weight_excitation(const TensorT<Real>& x, const WeParamsT<Real>& p) {
    if (x.rank() != 4 || x.dim(1) != p.fc1_w.dim(0))
        throw DimensionError("weight_excitation: input channels " +
                             (x.rank() == 4 ? std::to_string(x.dim(1)) : shape_str(x.shape())) +
                             " do not match parameters for " + std::to_string(p.fc1_w.dim(0)));
    TensorT<Real> pooled = global_avg_pool(x);                       // N x C
    TensorT<Real> hidden = relu(linear(pooled, p.fc1_w, p.fc1_b));   // N x C/r
    TensorT<Real> gates = sigmoid(linear(hidden, p.fc2_w, p.fc2_b));  // N x C
    return scale_channels(x, gates);
}

template <typename Real>
TensorT<Real> position_attention(const TensorT<Real>& y, const PaweParamsT<Real>& p) {
    if (y.rank() != 4) throw DimensionError("position_attention: input must be N x C x H x W");
    const std::int64_t n = y.dim(0), h = y.dim(2), w = y.dim(3);
    const std::int64_t npos = h * w;
    // one (H*W)^2 map per sample is held for the backward pass
    const std::uint64_t live =
        GradMode::enabled() && y.requires_grad() ? static_cast<std::uint64_t>(n) : 1;
    const std::uint64_t need = live * static_cast<std::uint64_t>(npos) *
                               static_cast<std::uint64_t>(npos) * sizeof(Real);
    if (need > attention_memory_budget())
        throw ResourceError("position_attention: dense " + std::to_string(npos) + "x" +
                            std::to_string(npos) + " attention requires " + std::to_string(need) +
                            " bytes, budget is " + std::to_string(attention_memory_budget()));

    TensorT<Real> bias;  // projections are weight-only
    TensorT<Real> q = conv2d(y, p.q_w, bias);
    TensorT<Real> k = conv2d(y, p.k_w, bias);
    TensorT<Real> v = conv2d(y, p.v_w, bias);
    return add(mul_scalar_param(attention_core(q, k, v), p.alpha), y);
}

template <typename Real>
TensorT<Real> position_attention_map(const TensorT<Real>& y, const PaweParamsT<Real>& p,
                                     std::int64_t sample) {
    if (y.rank() != 4) throw DimensionError("position_attention_map: input must be N x C x H x W");
    NoGradGuard no_grad;
    const std::int64_t c = y.dim(1), npos = y.dim(2) * y.dim(3);
    TensorT<Real> bias;
    TensorT<Real> yi = narrow0(y, sample, 1);
    TensorT<Real> q = permute(reshape(conv2d(yi, p.q_w, bias), {c, npos}), {1, 0});
    TensorT<Real> k = reshape(conv2d(yi, p.k_w, bias), {c, npos});
    return softmax(matmul(q, k), 1);
}

template <typename Real>
TensorT<Real> pawe(const TensorT<Real>& y, const PaweParamsT<Real>& p, bool training, Rng& rng) {
    TensorT<Real> fused = add(position_attention(y, p), weight_excitation(y, p.we));
    TensorT<Real> rm = p.bn.running_mean;  // handle copies; batchnorm updates the buffers
    TensorT<Real> rv = p.bn.running_var;
    TensorT<Real> normed = batchnorm2d(fused, p.bn.gamma, p.bn.beta, rm, rv, training);
    return silu(dropout(normed, p.dropout_p, training, rng));
}

namespace {

template <typename Real>
TensorT<Real> conv_bn_silu(const TensorT<Real>& x, const ConvBnT<Real>& p, bool training,
                           int padding, int dilation) {
    TensorT<Real> out = conv2d(x, p.w, p.b, 1, padding, dilation);
    TensorT<Real> rm = p.bn.running_mean;
    TensorT<Real> rv = p.bn.running_var;
    out = batchnorm2d(out, p.bn.gamma, p.bn.beta, rm, rv, training);
    return silu(out);
}

}  // namespace

template <typename Real>
TensorT<Real> dense_conv(const TensorT<Real>& f, const DaBlockParamsT<Real>& p, bool training) {
    std::vector<TensorT<Real>> features{f};
    for (const auto& layer : p.dense) {
        TensorT<Real> in = features.size() == 1 ? features[0] : concat(features, 1);
        features.push_back(conv_bn_silu(in, layer, training, 1, 1));
    }
    TensorT<Real> all = concat(features, 1);
    return conv_bn_silu(all, p.transition, training, 0, 1);
}

template <typename Real>
TensorT<Real> atrous_conv(const TensorT<Real>& f, const DaBlockParamsT<Real>& p, bool training) {
    return conv_bn_silu(f, p.atrous, training, p.dilation, p.dilation);
}

template <typename Real>
TensorT<Real> dense_atrous(const TensorT<Real>& f, const DaBlockParamsT<Real>& p, bool training) {
    return add(dense_conv(f, p, training), atrous_conv(f, p, training));
}

template <typename Real>
TensorT<Real> channel_attention(const TensorT<Real>& f, const TensorT<Real>& beta) {
    if (f.rank() != 4) throw DimensionError("channel_attention: input must be N x C x H x W");
    const std::int64_t n = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
    const std::int64_t npos = h * w;
    std::vector<TensorT<Real>> per_sample;
    per_sample.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        TensorT<Real> gi = reshape(narrow0(f, i, 1), {c, npos});  // C x HW
        TensorT<Real> git = permute(gi, {1, 0});                  // HW x C
        TensorT<Real> cmap = softmax(matmul(gi, git), 1);         // C x C = softmax(F^T F)
        // (F C^T)^T = C F^T in channel-major layout
        TensorT<Real> att = matmul(cmap, gi);  // C x HW
        per_sample.push_back(reshape(att, {1, c, h, w}));
    }
    TensorT<Real> stacked = n == 1 ? per_sample[0] : concat(per_sample, 0);
    return add(mul_scalar_param(stacked, beta), f);
}

template <typename Real>
TensorT<Real> cawe(const TensorT<Real>& f, const CaweParamsT<Real>& p) {
    return add(channel_attention(f, p.beta), weight_excitation(f, p.we));
}

template <typename Real>
TensorT<Real> cycle_fc(const TensorT<Real>& x, const CycleFcParamsT<Real>& p) {
    if (x.rank() != 4) throw DimensionError("cycle_fc: input must be N x C x H x W");
    if (x.dim(1) != p.w.dim(0))
        throw DimensionError("cycle_fc: input channels " + std::to_string(x.dim(1)) +
                             " != weight rows " + std::to_string(p.w.dim(0)));
    const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t cout = p.w.dim(1);
    const int sh = p.step_h, sw = p.step_w;

    // per-channel cyclic offsets
    std::vector<std::int64_t> dh(static_cast<std::size_t>(cin)), dw(static_cast<std::size_t>(cin));
    for (std::int64_t c = 0; c < cin; ++c) {
        dh[static_cast<std::size_t>(c)] = (c % sh) - sh / 2;
        dw[static_cast<std::size_t>(c)] = (c % sw) - sw / 2;
    }

    TensorT<Real> out = TensorT<Real>::zeros({n, cout, h, w});
    const Real* px = x.data();
    const Real* pw = p.w.data();
    const Real* pb = p.b.data();
    Real* po = out.data();
    std::vector<Real> gathered(static_cast<std::size_t>(cin));
    for (std::int64_t nn = 0; nn < n; ++nn) {
        for (std::int64_t i = 0; i < h; ++i) {
            for (std::int64_t j = 0; j < w; ++j) {
                for (std::int64_t c = 0; c < cin; ++c) {
                    const std::int64_t si = i + dh[static_cast<std::size_t>(c)];
                    const std::int64_t sj = j + dw[static_cast<std::size_t>(c)];
                    gathered[static_cast<std::size_t>(c)] =
                        (si >= 0 && si < h && sj >= 0 && sj < w)
                            ? px[((nn * cin + c) * h + si) * w + sj]
                            : Real(0);
                }
                for (std::int64_t co = 0; co < cout; ++co) {
                    Real acc = pb[co];
                    for (std::int64_t c = 0; c < cin; ++c)
                        acc += gathered[static_cast<std::size_t>(c)] * pw[c * cout + co];
                    po[((nn * cout + co) * h + i) * w + j] = acc;
                }
            }
        }
    }
    check_finite(out, "cycle_fc");

    auto xn = x.node(), wn = p.w.node(), bn = p.b.node(), on = out.node();
    const bool tracked = x.requires_grad() || p.w.requires_grad() || p.b.requires_grad();
    record_if_tracked(tracked, out, [xn, wn, bn, on, n, cin, cout, h, w, dh, dw] {
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        std::vector<Real> gy(static_cast<std::size_t>(cout));
        for (std::int64_t nn = 0; nn < n; ++nn) {
            for (std::int64_t i = 0; i < h; ++i) {
                for (std::int64_t j = 0; j < w; ++j) {
                    for (std::int64_t co = 0; co < cout; ++co)
                        gy[static_cast<std::size_t>(co)] =
                            on->grad[((nn * cout + co) * h + i) * w + j];
                    if (bn->requires_grad)
                        for (std::int64_t co = 0; co < cout; ++co)
                            bn->grad[co] += gy[static_cast<std::size_t>(co)];
                    for (std::int64_t c = 0; c < cin; ++c) {
                        const std::int64_t si = i + dh[static_cast<std::size_t>(c)];
                        const std::int64_t sj = j + dw[static_cast<std::size_t>(c)];
                        if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
                        const std::int64_t xi = ((nn * cin + c) * h + si) * w + sj;
                        if (xn->requires_grad) {
                            Real acc = 0;
                            for (std::int64_t co = 0; co < cout; ++co)
                                acc += wn->data[c * cout + co] * gy[static_cast<std::size_t>(co)];
                            xn->grad[xi] += acc;
                        }
                        if (wn->requires_grad) {
                            const Real xv = xn->data[xi];
                            for (std::int64_t co = 0; co < cout; ++co)
                                wn->grad[c * cout + co] += xv * gy[static_cast<std::size_t>(co)];
                        }
                    }
                }
            }
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> cycle_mlp(const TensorT<Real>& x, const CycleMlpParamsT<Real>& p) {
    return add(add(cycle_fc(x, p.fc_w), cycle_fc(x, p.fc_h)), cycle_fc(x, p.fc_id));
}

template <typename Real>
TensorT<Real> ccm(const TensorT<Real>& f, const CcmParamsT<Real>& p) {
    return sigmoid(cycle_mlp(cawe(f, p.cawe), p.mlp));
}

#define UCM_INSTANTIATE_BLOCKS(R)                                                                 \
    template struct BatchNorm2dT<R>;                                                             \
    template struct WeParamsT<R>;                                                                \
    template struct PaweParamsT<R>;                                                              \
    template struct ConvBnT<R>;                                                                  \
    template struct DaBlockParamsT<R>;                                                           \
    template struct CaweParamsT<R>;                                                              \
    template struct CycleFcParamsT<R>;                                                           \
    template struct CycleMlpParamsT<R>;                                                          \
    template struct CcmParamsT<R>;                                                               \
    template TensorT<R> weight_excitation<R>(const TensorT<R>&, const WeParamsT<R>&);            \
    template TensorT<R> position_attention<R>(const TensorT<R>&, const PaweParamsT<R>&);         \
    template TensorT<R> position_attention_map<R>(const TensorT<R>&, const PaweParamsT<R>&,      \
                                                  std::int64_t);                                 \
    template TensorT<R> pawe<R>(const TensorT<R>&, const PaweParamsT<R>&, bool, Rng&);           \
    template TensorT<R> dense_conv<R>(const TensorT<R>&, const DaBlockParamsT<R>&, bool);        \
    template TensorT<R> atrous_conv<R>(const TensorT<R>&, const DaBlockParamsT<R>&, bool);       \
    template TensorT<R> dense_atrous<R>(const TensorT<R>&, const DaBlockParamsT<R>&, bool);      \
    template TensorT<R> channel_attention<R>(const TensorT<R>&, const TensorT<R>&);              \
    template TensorT<R> cawe<R>(const TensorT<R>&, const CaweParamsT<R>&);                       \
    template TensorT<R> cycle_fc<R>(const TensorT<R>&, const CycleFcParamsT<R>&);                \
    template TensorT<R> cycle_mlp<R>(const TensorT<R>&, const CycleMlpParamsT<R>&);              \
    template TensorT<R> ccm<R>(const TensorT<R>&, const CcmParamsT<R>&);

UCM_INSTANTIATE_BLOCKS(float)
UCM_INSTANTIATE_BLOCKS(double)

}  // namespace ucm
