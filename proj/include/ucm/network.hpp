#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ucm/blocks.hpp"

namespace ucm {

struct ModelConfig {
    enum class Upsampler { kTransposed, kBilinear };

    int in_channels = 3;
    int base_channels = 32;  // C; stage s has C_s = 2^s * C channels
    int stages = 5;
    int num_classes = 1;  // 1 -> sigmoid head, >= 2 -> softmax head
    int dense_depth = 3;
    int growth = 4;
    int dilation = 2;
    int we_reduction = 4;
    double dropout = 0.1;
    bool use_ccm = true;
    Upsampler upsampler = Upsampler::kTransposed;
    int input_h = 224;
    int input_w = 224;
    std::array<std::array<int, 2>, 3> cyclefc_stepsizes{{{1, 7}, {7, 1}, {1, 1}}};

    int channels_at(int s) const { return base_channels << s; }
    void validate() const;
};

// stage s of the ladder: C_s channels at H/2^s x W/2^s
struct StageShape {
    int channels;
    int height;
    int width;
};

std::vector<StageShape> shape_ladder(const ModelConfig& cfg);

struct FlopCount {
    std::int64_t total = 0;
    std::int64_t attention = 0;  // the (H*W)^2 terms of position attention

    double attention_share() const {
        return total > 0 ? static_cast<double>(attention) / static_cast<double>(total) : 0.0;
    }
};

// Analytic multiply-accumulate count (2 FLOPs per MAC) for one forward pass
// at batch 1; elementwise activations and normalizations are excluded.
FlopCount count_flops(const ModelConfig& cfg, int input_h, int input_w);

// counted FLOPs of one cycle_fc application: 2 * Cin * Cout * H * W
std::int64_t cycle_fc_flops(int cin, int cout, int h, int w);

template <typename Real>
struct UpsampleParamsT {
    TensorT<Real> w, b;
    bool bilinear = false;  // bilinear interp + 1x1 conv instead of transposed conv
};

template <typename Real>
class UCycleMLPModelT {
  public:
    UCycleMLPModelT(ModelConfig cfg, std::uint64_t seed);

    // F_0 .. F_stages; F_0 is the stem output at full resolution, each later
    // stage is maxpool(DA(.)) with the channel lift inside the DA block
    std::vector<TensorT<Real>> encoder_forward(const TensorT<Real>& image, bool training,
                                               Rng& rng) const;

    // bottleneck + up/concat/DA ladder + 1x1 OutConv -> N x K x H x W logits
    TensorT<Real> decoder_forward(const std::vector<TensorT<Real>>& feats, bool training) const;

    TensorT<Real> forward(const TensorT<Real>& image, bool training, Rng& rng) const;

    const ModelConfig& config() const { return config_; }
    ParamStoreT<Real>& params() { return params_; }
    const ParamStoreT<Real>& params() const { return params_; }
    NamedTensorsT<Real>& buffers() { return buffers_; }
    const NamedTensorsT<Real>& buffers() const { return buffers_; }

    std::int64_t count_params() const { return params_.total_elements(); }
    std::int64_t count_params_with_prefix(const std::string& prefix) const;

  private:
    ModelConfig config_;
    TensorT<Real> stem_conv1_w, stem_conv1_b;
    PaweParamsT<Real> stem_pawe1;
    TensorT<Real> stem_conv2_w, stem_conv2_b;
    PaweParamsT<Real> stem_pawe2;
    std::vector<DaBlockParamsT<Real>> encoder_;    // s = 1..stages
    DaBlockParamsT<Real> bottleneck_;
    std::vector<CcmParamsT<Real>> ccm_;            // skips s = 0..stages-1
    std::vector<UpsampleParamsT<Real>> up_;        // s = stages..1
    std::vector<DaBlockParamsT<Real>> decoder_;    // s = stages..1
    TensorT<Real> out_w, out_b;
    ParamStoreT<Real> params_;
    NamedTensorsT<Real> buffers_;
};

using UCycleMLPModel = UCycleMLPModelT<float>;

}  // namespace ucm
