#pragma once

#include <cstdint>

#include "ucm/common.hpp"

namespace ucm {

struct OptimConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-7;
    double clip_max_norm = 1.0;
    int epochs = 50;
    int batch_size = 4;
    std::uint64_t seed = 0;

    void validate() const {
        if (lr <= 0.0) throw ConfigError("optim config: lr must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ConfigError("optim config: betas must be in [0, 1)");
        if (eps <= 0.0) throw ConfigError("optim config: eps must be positive");
        if (weight_decay < 0.0) throw ConfigError("optim config: weight_decay must be >= 0");
        if (clip_max_norm <= 0.0) throw ConfigError("optim config: clip_max_norm must be positive");
        if (epochs < 1 || batch_size < 1)
            throw ConfigError("optim config: epochs and batch_size must be >= 1");
    }
};

}  // namespace ucm
