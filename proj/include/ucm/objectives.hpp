#pragma once

#include <cstdint>
#include <vector>

#include "ucm/ops.hpp"

namespace ucm {

struct LossConfig {
    enum class Mode { kHybridCeDice, kBceFocal };

    Mode mode = Mode::kHybridCeDice;
    double alpha = 0.4;       // hybrid weight on the cross-entropy term
    double gamma = 2.0;       // focal exponent
    double dice_smooth = 1.0;

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("loss config: alpha must be in [0, 1]");
        if (gamma < 0.0) throw ConfigError("loss config: gamma must be >= 0");
        if (dice_smooth <= 0.0) throw ConfigError("loss config: dice_smooth must be > 0");
    }
};

// Losses take N x K x H x W logits and an N*H*W integer target (row-major).
// All return scalar tensors wired into the autograd tape.

template <typename Real>
TensorT<Real> cross_entropy(const TensorT<Real>& logits, const std::vector<std::int32_t>& target);

// soft Dice on probabilities, per class 1 - (2*sum(pg)+eps)/(sum p + sum g + eps),
// averaged over classes (softmax probabilities for K >= 2, sigmoid for K == 1)
template <typename Real>
TensorT<Real> dice_loss(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                        double smooth = 1.0);

// alpha * CE + (1 - alpha) * Dice
template <typename Real>
TensorT<Real> hybrid_loss(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                          const LossConfig& cfg);

// binary logits N x 1 x H x W, numerically stable log-sum-exp form
template <typename Real>
TensorT<Real> bce(const TensorT<Real>& logits, const std::vector<std::int32_t>& target);

// per pixel (1 - p_t)^gamma * (-ln p_t), mean
template <typename Real>
TensorT<Real> focal(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                    double gamma);

// sum of the two terms (equal contribution)
template <typename Real>
TensorT<Real> bce_focal(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                        const LossConfig& cfg);

template <typename Real>
TensorT<Real> compute_loss(const TensorT<Real>& logits, const std::vector<std::int32_t>& target,
                           const LossConfig& cfg);

// --- metrics over integer masks ---

struct ConfusionCounts {
    int num_classes = 0;
    std::vector<std::int64_t> tp, fp, fn, tn;  // per class
};

ConfusionCounts confusion(const std::vector<std::int32_t>& pred,
                          const std::vector<std::int32_t>& gt, int num_classes);

// all three are 2TP/(2TP+FP+FN)-family scores in [0,1]; both-empty masks
// score 1.0 by convention
double f1_score(const ConfusionCounts& counts, int cls);
double iou_score(const ConfusionCounts& counts, int cls);
double dsc_score(const ConfusionCounts& counts, int cls);

// average DSC over classes 1..K-1 (foreground only when exclude_background)
double mean_dice(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt,
                 int num_classes, bool exclude_background = true);

// argmax over the class axis (K >= 2) or 0.5-threshold (K == 1)
template <typename Real>
std::vector<std::int32_t> predict_mask(const TensorT<Real>& logits);

}  // namespace ucm
