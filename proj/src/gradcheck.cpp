#include "ucm/gradcheck.hpp"

#include <cmath>

#include "ucm/oracle.hpp"

namespace ucm {
namespace {

// evenly spaced coordinate sample; all coords when the tensor is small
std::vector<std::size_t> pick_coords(std::size_t numel, std::size_t max_coords) {
    std::vector<std::size_t> coords;
    if (max_coords == 0 || numel <= max_coords) {
        coords.resize(numel);
        for (std::size_t i = 0; i < numel; ++i) coords[i] = i;
        return coords;
    }
    coords.reserve(max_coords);
    for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(i * numel / max_coords);
    return coords;
}

template <typename Real>
TensorT<Real> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    TensorT<Real> t = TensorT<Real>::zeros(std::move(shape));
    for (auto& v : t.vec()) v = static_cast<Real>(rng.uniform(lo, hi));
    return t;
}

// fixed random projection to a scalar so every output coordinate matters
template <typename Real>
TensorT<Real> to_scalar(const TensorT<Real>& out, std::uint64_t seed) {
    Rng rng(seed);
    TensorT<Real> weights = random_tensor<Real>(out.shape(), rng);
    return sum(mul(out, weights));
}

}  // namespace

template <typename Real>
GradCheckResult gradcheck(const std::string& name,
                          const std::function<TensorT<Real>()>& forward,
                          const std::vector<TensorT<Real>>& wrt, double fd_step, double tol,
                          std::size_t max_coords_per_tensor) {
    GradCheckResult result;
    result.name = name;

    GradTape<Real>::current().clear();
    for (const auto& t : wrt) const_cast<TensorT<Real>&>(t).zero_grad();
    TensorT<Real> loss = forward();
    backward(loss);
    std::vector<std::vector<Real>> analytic;
    analytic.reserve(wrt.size());
    for (const auto& t : wrt) analytic.push_back(t.grad_or_zeros());

    const auto eval = [&forward]() {
        NoGradGuard no_grad;
        return static_cast<double>(forward().value());
    };

    double worst = 0.0;
    for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
        TensorT<Real>& t = const_cast<TensorT<Real>&>(wrt[ti]);
        const auto coords = pick_coords(static_cast<std::size_t>(t.numel()), max_coords_per_tensor);
        for (const std::size_t c : coords) {
            Real* data = t.data();
            const Real orig = data[c];
            data[c] = orig + static_cast<Real>(fd_step);
            const double fp = eval();
            data[c] = orig - static_cast<Real>(fd_step);
            const double fm = eval();
            data[c] = orig;
            const double fd = (fp - fm) / (2.0 * fd_step);
            const double an = static_cast<double>(analytic[ti][c]);
            const double denom = std::max({std::abs(an), std::abs(fd), 1e-3});
            worst = std::max(worst, std::abs(an - fd) / denom);
        }
    }
    result.max_rel_err = worst;
    result.pass = worst < tol;
    return result;
}

template GradCheckResult gradcheck<float>(const std::string&,
                                          const std::function<TensorT<float>()>&,
                                          const std::vector<TensorT<float>>&, double, double,
                                          std::size_t);
template GradCheckResult gradcheck<double>(const std::string&,
                                           const std::function<TensorT<double>()>&,
                                           const std::vector<TensorT<double>>&, double, double,
                                           std::size_t);

namespace {

constexpr double kShadowStep = 1e-5;
constexpr double kShadowTol = 1e-5;
constexpr std::size_t kMaxCoords = 96;

using DT = TensorT<double>;

void randomize_bn(BatchNorm2dT<double>& bn, Rng& rng) {
    for (auto& v : bn.gamma.vec()) v = rng.uniform(0.5, 1.5);
    for (auto& v : bn.beta.vec()) v = rng.uniform(-0.5, 0.5);
}

}  // namespace

std::vector<GradCheckResult> run_block_gradchecks(std::uint64_t seed) {
    std::vector<GradCheckResult> results;
    const auto check = [&results](const std::string& name, const std::function<DT()>& fwd,
                                  std::vector<DT> wrt) {
        results.push_back(gradcheck<double>(name, fwd, wrt, kShadowStep, kShadowTol, kMaxCoords));
    };

    // weight excitation
    {
        Rng rng(seed + 1);
        auto p = WeParamsT<double>::make(4, 4, rng);
        DT x = random_tensor<double>({1, 4, 8, 8}, rng);
        x.set_requires_grad(true);
        std::vector<DT> wrt{x, p.fc1_w, p.fc1_b, p.fc2_w, p.fc2_b};
        check("weight_excitation", [x, p, seed] { return to_scalar(weight_excitation(x, p), seed); },
              wrt);
    }
    // position attention (gate opened so the attention path carries gradient)
    {
        Rng rng(seed + 2);
        auto p = PaweParamsT<double>::make(4, 4, 0.0, rng);
        p.alpha.data()[0] = 0.7;
        DT x = random_tensor<double>({1, 4, 8, 8}, rng);
        x.set_requires_grad(true);
        std::vector<DT> wrt{x, p.q_w, p.k_w, p.v_w, p.alpha};
        check("position_attention",
              [x, p, seed] { return to_scalar(position_attention(x, p), seed); }, wrt);
    }
    // full PAWE block (training-mode batch norm; dropout disabled here, it has
    // its own reseeded check)
    {
        Rng rng(seed + 3);
        auto p = PaweParamsT<double>::make(4, 4, 0.0, rng);
        p.alpha.data()[0] = -0.4;
        randomize_bn(p.bn, rng);
        DT x = random_tensor<double>({1, 4, 8, 8}, rng);
        x.set_requires_grad(true);
        std::vector<DT> wrt{x,         p.q_w,     p.k_w,     p.v_w,    p.alpha,
                            p.we.fc1_w, p.we.fc1_b, p.we.fc2_w, p.we.fc2_b, p.bn.gamma,
                            p.bn.beta};
        check("pawe", [x, p, seed] {
            Rng drop(seed);
            return to_scalar(pawe(x, p, /*training=*/true, drop), seed);
        }, wrt);
    }
    // dense / atrous / combined DA block
    {
        Rng rng(seed + 4);
        auto p = DaBlockParamsT<double>::make(4, 6, 3, 4, 2, rng);
        for (auto& layer : p.dense) randomize_bn(layer.bn, rng);
        randomize_bn(p.transition.bn, rng);
        randomize_bn(p.atrous.bn, rng);
        DT x = random_tensor<double>({1, 4, 8, 8}, rng);
        x.set_requires_grad(true);
        std::vector<DT> wrt{x};
        for (auto& layer : p.dense) {
            wrt.push_back(layer.w);
            wrt.push_back(layer.b);
            wrt.push_back(layer.bn.gamma);
            wrt.push_back(layer.bn.beta);
        }
        wrt.push_back(p.transition.w);
        wrt.push_back(p.transition.b);
        wrt.push_back(p.atrous.w);
        wrt.push_back(p.atrous.b);
        check("dense_conv", [x, p, seed] { return to_scalar(dense_conv(x, p, true), seed); }, wrt);
        check("atrous_conv", [x, p, seed] { return to_scalar(atrous_conv(x, p, true), seed); },
              wrt);
        check("dense_atrous", [x, p, seed] { return to_scalar(dense_atrous(x, p, true), seed); },
              wrt);
    }
    // channel attention + CAWE
    {
        Rng rng(seed + 5);
        auto p = CaweParamsT<double>::make(4, 4, rng);
        p.beta.data()[0] = 0.6;
        DT x = random_tensor<double>({1, 4, 8, 8}, rng);
        x.set_requires_grad(true);
        check("channel_attention",
              [x, p, seed] { return to_scalar(channel_attention(x, p.beta), seed); },
              {x, p.beta});
        std::vector<DT> wrt{x, p.beta, p.we.fc1_w, p.we.fc1_b, p.we.fc2_w, p.we.fc2_b};
        check("cawe", [x, p, seed] { return to_scalar(cawe(x, p), seed); }, wrt);
    }
    // CycleFC branches and the summed CycleMLP
    {
        Rng rng(seed + 6);
        auto p17 = CycleFcParamsT<double>::make(4, 4, 1, 7, rng);
        DT x = random_tensor<double>({1, 4, 8, 8}, rng);
        x.set_requires_grad(true);
        check("cycle_fc", [x, p17, seed] { return to_scalar(cycle_fc(x, p17), seed); },
              {x, p17.w, p17.b});
        auto mlp = CycleMlpParamsT<double>::make(4, {{{1, 7}, {7, 1}, {1, 1}}}, rng);
        std::vector<DT> wrt{x,        mlp.fc_w.w, mlp.fc_w.b, mlp.fc_h.w,
                            mlp.fc_h.b, mlp.fc_id.w, mlp.fc_id.b};
        check("cycle_mlp", [x, mlp, seed] { return to_scalar(cycle_mlp(x, mlp), seed); }, wrt);
    }
    // full CCM block
    {
        Rng rng(seed + 7);
        auto p = CcmParamsT<double>::make(4, 4, {{{1, 7}, {7, 1}, {1, 1}}}, rng);
        p.cawe.beta.data()[0] = 0.3;
        DT x = random_tensor<double>({1, 4, 8, 8}, rng);
        x.set_requires_grad(true);
        std::vector<DT> wrt{x,
                            p.cawe.beta,
                            p.cawe.we.fc1_w,
                            p.cawe.we.fc2_w,
                            p.mlp.fc_w.w,
                            p.mlp.fc_h.w,
                            p.mlp.fc_id.w,
                            p.mlp.fc_id.b};
        check("ccm", [x, p, seed] { return to_scalar(ccm(x, p), seed); }, wrt);
    }
    // dropout with a reseeded mask (deterministic across FD evals)
    {
        Rng rng(seed + 8);
        DT x = random_tensor<double>({1, 4, 8, 8}, rng);
        x.set_requires_grad(true);
        check("dropout", [x, seed] {
            Rng drop(seed + 99);
            return to_scalar(dropout(x, 0.1, true, drop), seed);
        }, {x});
    }
    // hybrid CE + Dice loss
    {
        Rng rng(seed + 9);
        DT logits = random_tensor<double>({1, 3, 6, 6}, rng);
        logits.set_requires_grad(true);
        std::vector<std::int32_t> target(36);
        for (auto& t : target) t = static_cast<std::int32_t>(rng.uniform_below(3));
        LossConfig cfg;
        cfg.mode = LossConfig::Mode::kHybridCeDice;
        check("hybrid_ce_dice", [logits, target, cfg] { return hybrid_loss(logits, target, cfg); },
              {logits});
    }
    // BCE + focal loss
    {
        Rng rng(seed + 10);
        DT logits = random_tensor<double>({1, 1, 6, 6}, rng);
        logits.set_requires_grad(true);
        std::vector<std::int32_t> target(36);
        for (auto& t : target) t = static_cast<std::int32_t>(rng.uniform_below(2));
        LossConfig cfg;
        cfg.mode = LossConfig::Mode::kBceFocal;
        check("bce_focal", [logits, target, cfg] { return bce_focal(logits, target, cfg); },
              {logits});
    }
    return results;
}

GradCheckResult run_model_gradcheck(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.base_channels = 4;
    cfg.stages = 2;
    cfg.dense_depth = 1;
    cfg.growth = 2;
    cfg.num_classes = 2;
    cfg.dropout = 0.0;  // randomness is checked separately
    cfg.input_h = cfg.input_w = 32;
    UCycleMLPModelT<double> model(cfg, seed);
    // open the attention gates so their paths carry gradient
    model.params().get("stem.pawe1.alpha").data()[0] = 0.5;
    model.params().get("stem.pawe2.alpha").data()[0] = -0.3;

    Rng rng(seed + 11);
    DT image = random_tensor<double>({1, 3, 32, 32}, rng, 0.0, 1.0);
    image.set_requires_grad(true);

    std::vector<DT> wrt{image, model.params().get("outconv.w"),
                        model.params().get("stem.pawe1.alpha")};
    const auto fwd = [&model, image, seed] {
        Rng drop(seed);
        return to_scalar(model.forward(image, /*training=*/true, drop), seed);
    };
    return gradcheck<double>("model", fwd, wrt, kShadowStep, kShadowTol, 24);
}

}  // namespace ucm
