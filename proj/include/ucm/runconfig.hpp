#pragma once

#include <string>

#include "ucm/dataio.hpp"
#include "ucm/network.hpp"
#include "ucm/objectives.hpp"
#include "ucm/trainer_config.hpp"

namespace ucm {

// Flat key=value run configuration. Every key has a default; unknown keys
// are a ConfigError.
struct RunConfig {
    ModelConfig model;
    OptimConfig optim;
    LossConfig loss;
    dataio::SplitSpec split;
    std::string data_dir;

    void validate() const;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);
void apply_run_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

// model subset, used for the checkpoint config snapshot
std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

}  // namespace ucm
