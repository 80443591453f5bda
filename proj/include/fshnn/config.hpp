// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "fshnn/systems.hpp"
#include "fshnn/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace fshnn::config {

struct ModelSettings {
    std::string family = "fs-hnn"; // fs-hnn | hnn | mlp
    int k = 3;
    std::vector<int> intervals = {1, 2, 3};
    std::vector<int> hidden = {64, 64};
    std::vector<int> combiner_hidden = {16};
    std::string activation = "tanh"; // tanh | softplus
    int interval = 1;                // training resolution for hnn/mlp
    bool union_resolutions = false;  // hnn trained on the union of intervals
    std::uint64_t init_seed = 1;
    // PDE settings
    double xi = 1.0e-8;
    int latent = 16;
    int stencil = 16;
    std::vector<int> branch_hidden = {32};
    std::vector<int> trunk_hidden = {32};
    int op_channels = 8;
    int op_depth = 2;
    int op_kernel = 3;
};

struct EvalSettings {
    long rollout_steps = 1000;
    int trajectory = 0; // dataset trajectory providing the initial state
};

struct ExperimentConfig {
    sys::SystemSpec system;
    sys::GenSettings gen;
    ModelSettings model;
    train::TrainConfig training;
    EvalSettings eval;
};

// Strict parse: unknown keys anywhere are rejected.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Full materialization of every setting, defaults included.
nlohmann::json config_to_json(const ExperimentConfig& config);

} // namespace fshnn::config
