#include "ucm/objectives.hpp"

#include <cmath>

namespace ucm {
namespace {

using std::int64_t;

template <typename Real>
void check_target(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                  int64_t max_class) {
    if (logits.rank() != 4) throw DimensionError("loss: logits must be N x K x H x W");
    const int64_t pixels = logits.dim(0) * logits.dim(2) * logits.dim(3);
    if (static_cast<int64_t>(target.size()) != pixels)
        throw ContractError("loss: target has " + std::to_string(target.size()) +
                            " entries, expected " + std::to_string(pixels));
    for (const auto v : target)
        if (v < 0 || v >= max_class)
            throw ContractError("loss: target class " + std::to_string(v) + " out of range [0, " +
                                std::to_string(max_class) + ")");
}

template <typename Real>
Real softplus(Real x) {  // log(1 + e^x), stable
    const Real ax = std::abs(x);
    return std::log1p(std::exp(-ax)) + std::max(x, Real(0));
}

template <typename Real>
Real sigmoid_stable(Real x) {
    if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
    const Real e = std::exp(x);
    return e / (Real(1) + e);
}

}  // namespace

template <typename Real>
TensorT<Real> cross_entropy(const TensorT<Real>& logits, const std::vector<std::int32_t>& target) {
    const int64_t k = logits.dim(1);
    if (k < 2) throw DimensionError("cross_entropy: needs K >= 2 classes, use bce for binary");
    check_target(logits, target, k);
    const int64_t n = logits.dim(0), hw = logits.dim(2) * logits.dim(3);
    const int64_t pixels = n * hw;
    const Real* pz = logits.data();

    double acc = 0.0;
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t p = 0; p < hw; ++p) {
            const int64_t base = nn * k * hw + p;
            Real mx = pz[base];
            for (int64_t c = 1; c < k; ++c) mx = std::max(mx, pz[base + c * hw]);
            Real lse = 0;
            for (int64_t c = 0; c < k; ++c) lse += std::exp(pz[base + c * hw] - mx);
            lse = std::log(lse) + mx;
            const int32_t t = target[static_cast<std::size_t>(nn * hw + p)];
            acc += static_cast<double>(lse - pz[base + t * hw]);
        }
    }
    TensorT<Real> out = TensorT<Real>::scalar(static_cast<Real>(acc / static_cast<double>(pixels)));
    auto zn = logits.node(), on = out.node();
    record_if_tracked(logits.requires_grad(), out, [zn, on, target, n, k, hw, pixels] {
        const Real g = on->grad[0] / static_cast<Real>(pixels);
        zn->ensure_grad();
        for (int64_t nn = 0; nn < n; ++nn) {
            for (int64_t p = 0; p < hw; ++p) {
                const int64_t base = nn * k * hw + p;
                Real mx = zn->data[base];
                for (int64_t c = 1; c < k; ++c) mx = std::max(mx, zn->data[base + c * hw]);
                Real denom = 0;
                for (int64_t c = 0; c < k; ++c) denom += std::exp(zn->data[base + c * hw] - mx);
                const int32_t t = target[static_cast<std::size_t>(nn * hw + p)];
                for (int64_t c = 0; c < k; ++c) {
                    const Real soft = std::exp(zn->data[base + c * hw] - mx) / denom;
                    zn->grad[base + c * hw] += g * (soft - (c == t ? Real(1) : Real(0)));
                }
            }
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> dice_loss(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                        double smooth) {
    if (smooth <= 0.0) throw ConfigError("dice_loss: smooth must be > 0");
    const int64_t k = logits.dim(1);
    check_target(logits, target, k == 1 ? 2 : k);
    const int64_t n = logits.dim(0), hw = logits.dim(2) * logits.dim(3);
    const int64_t classes = k;
    const Real* pz = logits.data();

    // probabilities, kept for the backward pass
    auto probs = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(logits.numel()));
    if (k == 1) {
        for (int64_t i = 0; i < logits.numel(); ++i) (*probs)[static_cast<std::size_t>(i)] = sigmoid_stable(pz[i]);
    } else {
        for (int64_t nn = 0; nn < n; ++nn) {
            for (int64_t p = 0; p < hw; ++p) {
                const int64_t base = nn * k * hw + p;
                Real mx = pz[base];
                for (int64_t c = 1; c < k; ++c) mx = std::max(mx, pz[base + c * hw]);
                Real denom = 0;
                for (int64_t c = 0; c < k; ++c) {
                    const Real e = std::exp(pz[base + c * hw] - mx);
                    (*probs)[static_cast<std::size_t>(base + c * hw)] = e;
                    denom += e;
                }
                for (int64_t c = 0; c < k; ++c)
                    (*probs)[static_cast<std::size_t>(base + c * hw)] /= denom;
            }
        }
    }

    // per class: 1 - (2 sum(p*g) + eps) / (sum p + sum g + eps)
    auto nums = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(classes));
    auto dens = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(classes));
    double loss = 0.0;
    for (int64_t c = 0; c < classes; ++c) {
        double sum_pg = 0.0, sum_p = 0.0, sum_g = 0.0;
        for (int64_t nn = 0; nn < n; ++nn) {
            for (int64_t p = 0; p < hw; ++p) {
                const Real pv = (*probs)[static_cast<std::size_t>((nn * k + c) * hw + p)];
                const bool gv = k == 1 ? target[static_cast<std::size_t>(nn * hw + p)] == 1
                                       : target[static_cast<std::size_t>(nn * hw + p)] == c;
                sum_p += pv;
                if (gv) {
                    sum_g += 1.0;
                    sum_pg += pv;
                }
            }
        }
        const double num = 2.0 * sum_pg + smooth;
        const double den = sum_p + sum_g + smooth;
        (*nums)[static_cast<std::size_t>(c)] = static_cast<Real>(num);
        (*dens)[static_cast<std::size_t>(c)] = static_cast<Real>(den);
        loss += 1.0 - num / den;
    }
    loss /= static_cast<double>(classes);

    TensorT<Real> out = TensorT<Real>::scalar(static_cast<Real>(loss));
    auto zn = logits.node(), on = out.node();
    record_if_tracked(logits.requires_grad(), out, [zn, on, probs, nums, dens, target, n, k, hw,
                                                    classes] {
        const Real g = on->grad[0] / static_cast<Real>(classes);
        zn->ensure_grad();
        // dL/dp, then chain through sigmoid/softmax pixel-wise
        for (int64_t nn = 0; nn < n; ++nn) {
            for (int64_t p = 0; p < hw; ++p) {
                const int32_t t = target[static_cast<std::size_t>(nn * hw + p)];
                if (k == 1) {
                    const int64_t i = nn * hw + p;
                    const Real pv = (*probs)[static_cast<std::size_t>(i)];
                    const Real gval = t == 1 ? Real(1) : Real(0);
                    const Real num = (*nums)[0], den = (*dens)[0];
                    const Real dldp = -(Real(2) * gval * den - num) / (den * den);
                    zn->grad[i] += g * dldp * pv * (Real(1) - pv);
                } else {
                    const int64_t base = nn * k * hw + p;
                    // dL/dp_c for every class at this pixel
                    Real dot = 0;
                    for (int64_t c = 0; c < k; ++c) {
                        const Real pv = (*probs)[static_cast<std::size_t>(base + c * hw)];
                        const Real gval = t == c ? Real(1) : Real(0);
                        const Real num = (*nums)[static_cast<std::size_t>(c)];
                        const Real den = (*dens)[static_cast<std::size_t>(c)];
                        const Real dldp = -(Real(2) * gval * den - num) / (den * den);
                        dot += dldp * pv;
                    }
                    for (int64_t c = 0; c < k; ++c) {
                        const Real pv = (*probs)[static_cast<std::size_t>(base + c * hw)];
                        const Real gval = t == c ? Real(1) : Real(0);
                        const Real num = (*nums)[static_cast<std::size_t>(c)];
                        const Real den = (*dens)[static_cast<std::size_t>(c)];
                        const Real dldp = -(Real(2) * gval * den - num) / (den * den);
                        zn->grad[base + c * hw] += g * pv * (dldp - dot);
                    }
                }
            }
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> hybrid_loss(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                          const LossConfig& cfg) {
    cfg.validate();
    TensorT<Real> ce = cross_entropy(logits, target);
    TensorT<Real> dice = dice_loss(logits, target, cfg.dice_smooth);
    return add(scale(ce, cfg.alpha), scale(dice, 1.0 - cfg.alpha));
}

template <typename Real>
TensorT<Real> bce(const TensorT<Real>& logits, const std::vector<std::int32_t>& target) {
    if (logits.dim(1) != 1) throw DimensionError("bce: logits must be N x 1 x H x W");
    check_target(logits, target, 2);
    const int64_t pixels = logits.numel();
    const Real* pz = logits.data();
    double acc = 0.0;
    for (int64_t i = 0; i < pixels; ++i) {
        const Real z = pz[i];
        const Real y = target[static_cast<std::size_t>(i)] == 1 ? Real(1) : Real(0);
        acc += static_cast<double>(std::max(z, Real(0)) - z * y + std::log1p(std::exp(-std::abs(z))));
    }
    TensorT<Real> out = TensorT<Real>::scalar(static_cast<Real>(acc / static_cast<double>(pixels)));
    auto zn = logits.node(), on = out.node();
    record_if_tracked(logits.requires_grad(), out, [zn, on, target, pixels] {
        const Real g = on->grad[0] / static_cast<Real>(pixels);
        zn->ensure_grad();
        for (int64_t i = 0; i < pixels; ++i) {
            const Real y = target[static_cast<std::size_t>(i)] == 1 ? Real(1) : Real(0);
            zn->grad[i] += g * (sigmoid_stable(zn->data[i]) - y);
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> focal(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                    double gamma) {
    if (gamma < 0.0) throw ConfigError("focal: gamma must be >= 0");
    if (logits.dim(1) != 1) throw DimensionError("focal: logits must be N x 1 x H x W");
    check_target(logits, target, 2);
    const int64_t pixels = logits.numel();
    const Real* pz = logits.data();
    const Real gm = static_cast<Real>(gamma);
    double acc = 0.0;
    for (int64_t i = 0; i < pixels; ++i) {
        const Real z = pz[i];
        const bool pos = target[static_cast<std::size_t>(i)] == 1;
        const Real neg_log_pt = pos ? softplus(-z) : softplus(z);      // -ln p_t
        const Real one_minus_pt = pos ? sigmoid_stable(-z) : sigmoid_stable(z);
        acc += static_cast<double>(std::pow(one_minus_pt, gm) * neg_log_pt);
    }
    TensorT<Real> out = TensorT<Real>::scalar(static_cast<Real>(acc / static_cast<double>(pixels)));
    auto zn = logits.node(), on = out.node();
    record_if_tracked(logits.requires_grad(), out, [zn, on, target, pixels, gm] {
        const Real g = on->grad[0] / static_cast<Real>(pixels);
        zn->ensure_grad();
        for (int64_t i = 0; i < pixels; ++i) {
            const Real z = zn->data[i];
            const bool pos = target[static_cast<std::size_t>(i)] == 1;
            const Real u = pos ? sigmoid_stable(-z) : sigmoid_stable(z);  // 1 - p_t
            const Real t = Real(1) - u;                                   // p_t
            const Real ln_t = pos ? -softplus(-z) : -softplus(z);
            const Real sign = pos ? Real(1) : Real(-1);
            // d/dz [(1-t)^g * (-ln t)] = sign * u^g * (g * t * ln t - u)
            zn->grad[i] += g * sign * std::pow(u, gm) * (gm * t * ln_t - u);
        }
    });
    return out;
}

template <typename Real>
TensorT<Real> bce_focal(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                        const LossConfig& cfg) {
    cfg.validate();
    return add(bce(logits, target), focal(logits, target, cfg.gamma));
}

template <typename Real>
TensorT<Real> compute_loss(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                           const LossConfig& cfg) {
    return cfg.mode == LossConfig::Mode::kHybridCeDice ? hybrid_loss(logits, target, cfg)
                                                       : bce_focal(logits, target, cfg);
}

ConfusionCounts confusion(const std::vector<std::int32_t>& pred,
                          const std::vector<std::int32_t>& gt, int num_classes) {
    if (pred.size() != gt.size()) throw ContractError("confusion: mask size mismatch");
    if (num_classes < 2) throw ContractError("confusion: need at least 2 classes");
    ConfusionCounts c;
    c.num_classes = num_classes;
    c.tp.assign(static_cast<std::size_t>(num_classes), 0);
    c.fp.assign(static_cast<std::size_t>(num_classes), 0);
    c.fn.assign(static_cast<std::size_t>(num_classes), 0);
    c.tn.assign(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::int32_t p = pred[i], g = gt[i];
        if (p < 0 || p >= num_classes || g < 0 || g >= num_classes)
            throw ContractError("confusion: class out of range at pixel " + std::to_string(i));
        for (int cls = 0; cls < num_classes; ++cls) {
            const bool in_p = p == cls, in_g = g == cls;
            if (in_p && in_g)
                ++c.tp[static_cast<std::size_t>(cls)];
            else if (in_p)
                ++c.fp[static_cast<std::size_t>(cls)];
            else if (in_g)
                ++c.fn[static_cast<std::size_t>(cls)];
            else
                ++c.tn[static_cast<std::size_t>(cls)];
        }
    }
    return c;
}

namespace {
void check_cls(const ConfusionCounts& counts, int cls) {
    if (cls < 0 || cls >= counts.num_classes)
        throw ContractError("metric: class " + std::to_string(cls) + " out of range");
}
}  // namespace

double f1_score(const ConfusionCounts& counts, int cls) {
    check_cls(counts, cls);
    const auto i = static_cast<std::size_t>(cls);
    const std::int64_t tp = counts.tp[i], fp = counts.fp[i], fn = counts.fn[i];
    if (tp + fp + fn == 0) return 1.0;  // both masks empty
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double iou_score(const ConfusionCounts& counts, int cls) {
    check_cls(counts, cls);
    const auto i = static_cast<std::size_t>(cls);
    const std::int64_t denom = counts.tp[i] + counts.fp[i] + counts.fn[i];
    if (denom == 0) return 1.0;
    return static_cast<double>(counts.tp[i]) / static_cast<double>(denom);
}

double dsc_score(const ConfusionCounts& counts, int cls) {
    check_cls(counts, cls);
    const auto i = static_cast<std::size_t>(cls);
    const std::int64_t denom = 2 * counts.tp[i] + counts.fp[i] + counts.fn[i];
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(counts.tp[i]) / static_cast<double>(denom);
}

double mean_dice(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt,
                 int num_classes, bool exclude_background) {
    const ConfusionCounts counts = confusion(pred, gt, num_classes);
    const int first = exclude_background ? 1 : 0;
    double acc = 0.0;
    int n = 0;
    for (int cls = first; cls < num_classes; ++cls) {
        acc += dsc_score(counts, cls);
        ++n;
    }
    if (n == 0) throw ContractError("mean_dice: no classes to average");
    return acc / n;
}

template <typename Real>
std::vector<std::int32_t> predict_mask(const TensorT<Real>& logits) {
    if (logits.rank() != 4) throw DimensionError("predict_mask: logits must be N x K x H x W");
    const int64_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    std::vector<std::int32_t> mask(static_cast<std::size_t>(n * hw));
    const Real* pz = logits.data();
    for (int64_t nn = 0; nn < n; ++nn) {
        for (int64_t p = 0; p < hw; ++p) {
            if (k == 1) {
                mask[static_cast<std::size_t>(nn * hw + p)] = pz[nn * hw + p] > Real(0) ? 1 : 0;
            } else {
                const int64_t base = nn * k * hw + p;
                int best = 0;
                Real bv = pz[base];
                for (int64_t c = 1; c < k; ++c)
                    if (pz[base + c * hw] > bv) {
                        bv = pz[base + c * hw];
                        best = static_cast<int>(c);
                    }
                mask[static_cast<std::size_t>(nn * hw + p)] = best;
            }
        }
    }
    return mask;
}

#define UCM_INSTANTIATE_OBJECTIVES(R)                                                             \
    template TensorT<R> cross_entropy<R>(const TensorT<R>&, const std::vector<std::int32_t>&);   \
    template TensorT<R> dice_loss<R>(const TensorT<R>&, const std::vector<std::int32_t>&,        \
                                     double);                                                    \
    template TensorT<R> hybrid_loss<R>(const TensorT<R>&, const std::vector<std::int32_t>&,      \
                                       const LossConfig&);                                       \
    template TensorT<R> bce<R>(const TensorT<R>&, const std::vector<std::int32_t>&);             \
    template TensorT<R> focal<R>(const TensorT<R>&, const std::vector<std::int32_t>&, double);   \
    template TensorT<R> bce_focal<R>(const TensorT<R>&, const std::vector<std::int32_t>&,        \
                                     const LossConfig&);                                         \
    template TensorT<R> compute_loss<R>(const TensorT<R>&, const std::vector<std::int32_t>&,     \
                                        const LossConfig&);                                      \
    template std::vector<std::int32_t> predict_mask<R>(const TensorT<R>&);

UCM_INSTANTIATE_OBJECTIVES(float)
UCM_INSTANTIATE_OBJECTIVES(double)

}  // namespace ucm
