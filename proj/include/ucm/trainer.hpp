#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ucm/dataio.hpp"
#include "ucm/network.hpp"
#include "ucm/objectives.hpp"
#include "ucm/trainer_config.hpp"

namespace ucm {

struct OptimState {
    std::map<std::string, std::vector<float>> m, v;  // first/second moments per parameter
    std::int64_t step_count = 0;
};

// Global L2 norm over all parameter gradients; scales them down to max_norm
// when exceeded. Returns the applied scale (1.0 if no clipping happened).
double clip_grad_norm(ParamStore& params, double max_norm);

// Decoupled update: w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * w.
void adamw_step(ParamStore& params, OptimState& state, const OptimConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_dice = 0.0;
    bool saved = false;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double best_val_dice = -1.0;
    std::int64_t steps = 0;
};

// assemble N x 3 x H x W batch + flat target from samples (resized on the fly)
std::pair<Tensor, std::vector<std::int32_t>> make_batch(
    const std::vector<const dataio::Sample*>& samples, int input_h, int input_w);

// One pass over a seeded shuffle of the training set: augment, forward, loss,
// backward, clip, step. Returns the mean loss per sample.
double train_epoch(UCycleMLPModel& model, const std::vector<dataio::Sample>& train_set,
                   const LossConfig& loss_cfg, const OptimConfig& optim_cfg, OptimState& state,
                   Rng& rng);

// mean foreground Dice over a dataset (eval mode, argmax/thresholded masks)
double evaluate_mean_dice(const UCycleMLPModel& model, const std::vector<dataio::Sample>& samples);

// Persists a checkpoint only on strict improvement of the mean Dice score.
std::pair<double, bool> validate_and_gate(const UCycleMLPModel& model,
                                          const std::vector<dataio::Sample>& val_set, double& best,
                                          const std::string& ckpt_path);

// epoch loop with Dice-gated checkpointing; log lines go to `log` when given
TrainReport fit(UCycleMLPModel& model, const dataio::SplitDataset& data,
                const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                const std::string& ckpt_path, std::ostream* log = nullptr);

// Binary checkpoint: magic "UCMK", version, config snapshot, named tensor
// table (little-endian), best validation mean-Dice. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const UCycleMLPModel& model, double best_val_dice);

struct LoadedCheckpoint {
    ModelConfig config;
    double best_val_dice = -1.0;
};

UCycleMLPModel load_checkpoint(const std::string& path, LoadedCheckpoint* info = nullptr);

}  // namespace ucm
