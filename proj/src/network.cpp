#include "ucm/network.hpp"

#include <cmath>

namespace ucm {

void ModelConfig::validate() const {
    if (in_channels < 1 || base_channels < 1 || num_classes < 1)
        throw ConfigError("model config: channel/class counts must be positive");
    if (stages < 1 || stages > 10) throw ConfigError("model config: stages must be in [1, 10]");
    if (dense_depth < 1 || growth < 1) throw ConfigError("model config: dense_depth and growth must be >= 1");
    if (dilation < 1) throw ConfigError("model config: dilation must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must be in [0, 1)");
    if (we_reduction < 1 || base_channels % we_reduction != 0)
        throw ConfigError("model config: we_reduction must divide base_channels");
    const int div = 1 << stages;
    if (input_h % div != 0 || input_w % div != 0)
        throw ConfigError("model config: input size " + std::to_string(input_h) + "x" +
                          std::to_string(input_w) + " must be divisible by 2^stages = " +
                          std::to_string(div));
}

std::vector<StageShape> shape_ladder(const ModelConfig& cfg) {
    std::vector<StageShape> ladder;
    for (int s = 0; s <= cfg.stages; ++s)
        ladder.push_back({cfg.channels_at(s), cfg.input_h >> s, cfg.input_w >> s});
    return ladder;
}

std::int64_t cycle_fc_flops(int cin, int cout, int h, int w) {
    return 2ll * cin * cout * h * w;
}

namespace {

std::int64_t conv_flops(std::int64_t k, std::int64_t cin, std::int64_t cout, std::int64_t h,
                        std::int64_t w) {
    return 2ll * k * k * cin * cout * h * w;  // stride-1 shape-preserving counts
}

struct FlopTally {
    FlopCount count;

    void add(std::int64_t f) { count.total += f; }
    void add_attention(std::int64_t f) {
        count.total += f;
        count.attention += f;
    }

    // PAWE at C channels on h x w: QKV projections, the two (H*W)^2 matmuls,
    // and the excitation MLP
    void pawe(std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t we_red) {
        const std::int64_t npos = h * w;
        add(3 * conv_flops(1, c, c, h, w));
        add_attention(2 * npos * npos * c);  // Q K^T
        add_attention(2 * npos * npos * c);  // S^T V
        we(c, we_red);
    }

    void we(std::int64_t c, std::int64_t we_red) {
        add(2 * c * (c / we_red));
        add(2 * (c / we_red) * c);
    }

    void da_block(const ModelConfig& cfg, std::int64_t cin, std::int64_t cout, std::int64_t h,
                  std::int64_t w) {
        for (int l = 0; l < cfg.dense_depth; ++l)
            add(conv_flops(3, cin + static_cast<std::int64_t>(l) * cfg.growth, cfg.growth, h, w));
        add(conv_flops(1, cin + static_cast<std::int64_t>(cfg.dense_depth) * cfg.growth, cout, h, w));
        add(conv_flops(3, cin, cout, h, w));  // atrous path; dilation keeps the count
    }

    void ccm(const ModelConfig& cfg, std::int64_t c, std::int64_t h, std::int64_t w) {
        const std::int64_t npos = h * w;
        add(2 * npos * c * c);  // F^T F
        add(2 * npos * c * c);  // F C^T
        we(c, cfg.we_reduction);
        for (int i = 0; i < 3; ++i) add(cycle_fc_flops(static_cast<int>(c), static_cast<int>(c),
                                                       static_cast<int>(h), static_cast<int>(w)));
    }
};

}  // namespace

FlopCount count_flops(const ModelConfig& cfg, int input_h, int input_w) {
    ModelConfig probe = cfg;
    probe.input_h = input_h;
    probe.input_w = input_w;
    probe.validate();
    FlopTally t;
    const std::int64_t c0 = cfg.base_channels;
    // stem
    t.add(conv_flops(3, cfg.in_channels, c0, input_h, input_w));
    t.pawe(c0, input_h, input_w, cfg.we_reduction);
    t.add(conv_flops(3, c0, c0, input_h, input_w));
    t.pawe(c0, input_h, input_w, cfg.we_reduction);
    // encoder: DA at the incoming resolution, then pool
    for (int s = 1; s <= cfg.stages; ++s) {
        const std::int64_t h = input_h >> (s - 1), w = input_w >> (s - 1);
        t.da_block(cfg, cfg.channels_at(s - 1), cfg.channels_at(s), h, w);
    }
    // bottleneck at the deepest resolution
    t.da_block(cfg, cfg.channels_at(cfg.stages), cfg.channels_at(cfg.stages),
               input_h >> cfg.stages, input_w >> cfg.stages);
    // decoder: upsample to target resolution, skip refinement, DA on the concat
    for (int s = cfg.stages; s >= 1; --s) {
        const std::int64_t h = input_h >> (s - 1), w = input_w >> (s - 1);
        const std::int64_t cs = cfg.channels_at(s), cd = cfg.channels_at(s - 1);
        if (cfg.upsampler == ModelConfig::Upsampler::kTransposed)
            t.add(2 * cs * cd * h * w);  // 2x2 kernel, one tap per output
        else
            t.add(conv_flops(1, cs, cd, h, w));  // channel-reducing 1x1 after interp
        if (cfg.use_ccm) t.ccm(cfg, cd, h, w);
        t.da_block(cfg, 2 * cd, cd, h, w);
    }
    t.add(conv_flops(1, c0, cfg.num_classes, input_h, input_w));
    return t.count;
}

template <typename Real>
UCycleMLPModelT<Real>::UCycleMLPModelT(ModelConfig cfg, std::uint64_t seed) : config_(cfg) {
    config_.validate();
    Rng rng(seed);
    const int c0 = config_.base_channels;
    const auto bound = [](std::int64_t fan_in) {
        return std::sqrt(6.0 / static_cast<double>(fan_in));
    };
    auto conv_init = [&](int cin, int cout, int k) {
        TensorT<Real> w = TensorT<Real>::uniform({cout, cin, k, k}, rng,
                                                 static_cast<Real>(bound(1ll * cin * k * k)));
        w.set_requires_grad(true);
        return w;
    };
    auto zeros1 = [&](int n) {
        TensorT<Real> b = TensorT<Real>::zeros({n});
        b.set_requires_grad(true);
        return b;
    };

    stem_conv1_w = conv_init(config_.in_channels, c0, 3);
    stem_conv1_b = zeros1(c0);
    stem_pawe1 = PaweParamsT<Real>::make(c0, config_.we_reduction, config_.dropout, rng);
    stem_conv2_w = conv_init(c0, c0, 3);
    stem_conv2_b = zeros1(c0);
    stem_pawe2 = PaweParamsT<Real>::make(c0, config_.we_reduction, config_.dropout, rng);

    for (int s = 1; s <= config_.stages; ++s)
        encoder_.push_back(DaBlockParamsT<Real>::make(config_.channels_at(s - 1),
                                                      config_.channels_at(s), config_.dense_depth,
                                                      config_.growth, config_.dilation, rng));
    bottleneck_ = DaBlockParamsT<Real>::make(config_.channels_at(config_.stages),
                                             config_.channels_at(config_.stages),
                                             config_.dense_depth, config_.growth,
                                             config_.dilation, rng);
    if (config_.use_ccm)
        for (int s = 0; s < config_.stages; ++s)
            ccm_.push_back(CcmParamsT<Real>::make(config_.channels_at(s), config_.we_reduction,
                                                  config_.cyclefc_stepsizes, rng));
    for (int s = config_.stages; s >= 1; --s) {
        UpsampleParamsT<Real> up;
        const int cs = config_.channels_at(s), cd = config_.channels_at(s - 1);
        if (config_.upsampler == ModelConfig::Upsampler::kTransposed) {
            up.bilinear = false;
            up.w = TensorT<Real>::uniform({cs, cd, 2, 2}, rng, static_cast<Real>(bound(4ll * cs)));
            up.w.set_requires_grad(true);
        } else {
            up.bilinear = true;
            up.w = conv_init(cs, cd, 1);
        }
        up.b = zeros1(cd);
        up_.push_back(std::move(up));
        decoder_.push_back(DaBlockParamsT<Real>::make(2 * cd, cd, config_.dense_depth,
                                                      config_.growth, config_.dilation, rng));
    }
    out_w = conv_init(c0, config_.num_classes, 1);
    out_b = zeros1(config_.num_classes);

    params_.add("stem.conv1.w", stem_conv1_w);
    params_.add("stem.conv1.b", stem_conv1_b);
    stem_pawe1.collect(params_, buffers_, "stem.pawe1");
    params_.add("stem.conv2.w", stem_conv2_w);
    params_.add("stem.conv2.b", stem_conv2_b);
    stem_pawe2.collect(params_, buffers_, "stem.pawe2");
    for (int s = 1; s <= config_.stages; ++s)
        encoder_[s - 1].collect(params_, buffers_, "enc" + std::to_string(s));
    bottleneck_.collect(params_, buffers_, "bottleneck");
    for (std::size_t i = 0; i < ccm_.size(); ++i)
        ccm_[i].collect(params_, "ccm" + std::to_string(i));
    for (int s = config_.stages; s >= 1; --s) {
        const auto& up = up_[static_cast<std::size_t>(config_.stages - s)];
        params_.add("dec" + std::to_string(s) + ".up.w", up.w);
        params_.add("dec" + std::to_string(s) + ".up.b", up.b);
        decoder_[static_cast<std::size_t>(config_.stages - s)].collect(
            params_, buffers_, "dec" + std::to_string(s) + ".da");
    }
    params_.add("outconv.w", out_w);
    params_.add("outconv.b", out_b);
}

template <typename Real>
std::vector<TensorT<Real>> UCycleMLPModelT<Real>::encoder_forward(const TensorT<Real>& image,
                                                                  bool training, Rng& rng) const {
    if (image.rank() != 4 || image.dim(1) != config_.in_channels)
        throw DimensionError("encoder_forward: expected N x " +
                             std::to_string(config_.in_channels) + " x H x W input, got " +
                             shape_str(image.shape()));
    const int div = 1 << config_.stages;
    if (image.dim(2) % div != 0 || image.dim(3) % div != 0)
        throw ConfigError("encoder_forward: spatial dims " + std::to_string(image.dim(2)) + "x" +
                          std::to_string(image.dim(3)) + " not divisible by 2^stages = " +
                          std::to_string(div));

    std::vector<TensorT<Real>> feats;
    feats.reserve(static_cast<std::size_t>(config_.stages) + 1);
    TensorT<Real> y = conv2d(image, stem_conv1_w, stem_conv1_b, 1, 1, 1);
    y = pawe(y, stem_pawe1, training, rng);
    y = conv2d(y, stem_conv2_w, stem_conv2_b, 1, 1, 1);
    y = pawe(y, stem_pawe2, training, rng);
    feats.push_back(y);
    for (int s = 1; s <= config_.stages; ++s) {
        y = maxpool2d(dense_atrous(y, encoder_[static_cast<std::size_t>(s - 1)], training), 2, 2);
        feats.push_back(y);
    }
    return feats;
}

template <typename Real>
TensorT<Real> UCycleMLPModelT<Real>::decoder_forward(const std::vector<TensorT<Real>>& feats,
                                                     bool training) const {
    if (feats.size() != static_cast<std::size_t>(config_.stages) + 1)
        throw ContractError("decoder_forward: expected " + std::to_string(config_.stages + 1) +
                            " encoder features");
    TensorT<Real> g = dense_atrous(feats.back(), bottleneck_, training);
    for (int s = config_.stages; s >= 1; --s) {
        const std::size_t i = static_cast<std::size_t>(config_.stages - s);
        const auto& up = up_[i];
        TensorT<Real> upped;
        if (up.bilinear)
            upped = conv2d(upsample_bilinear2x(g), up.w, up.b);
        else
            upped = conv_transpose2d(g, up.w, up.b, 2);
        const TensorT<Real>& enc_feat = feats[static_cast<std::size_t>(s - 1)];
        TensorT<Real> skip =
            config_.use_ccm ? ccm(enc_feat, ccm_[static_cast<std::size_t>(s - 1)]) : enc_feat;
        g = dense_atrous(concat<Real>({upped, skip}, 1), decoder_[i], training);
    }
    return conv2d(g, out_w, out_b);
}

template <typename Real>
TensorT<Real> UCycleMLPModelT<Real>::forward(const TensorT<Real>& image, bool training,
                                             Rng& rng) const {
    return decoder_forward(encoder_forward(image, training, rng), training);
}

template <typename Real>
std::int64_t UCycleMLPModelT<Real>::count_params_with_prefix(const std::string& prefix) const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params_)
        if (name.rfind(prefix, 0) == 0) n += t.numel();
    return n;
}

template class UCycleMLPModelT<float>;
template class UCycleMLPModelT<double>;

}  // namespace ucm
