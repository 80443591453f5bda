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

#include "fshnn/container.hpp"
#include "fshnn/models.hpp"
#include "fshnn/state.hpp"

#include <json.hpp>

#include <memory>
#include <string>

namespace fshnn::io {

// Model checkpoints: one container with a record per ParamVector entry, plus
// a JSON sidecar (<path>.json) holding the model spec and run metadata.

struct CheckpointMeta {
    std::string family;        // fs-hnn | hnn | mlp
    std::string system;        // dataset system name
    double base_dt = 0.0;      // dataset frame dt the model was trained on
    nlohmann::json extra;      // free-form (seeds, dataset path, labels)
};

void save_checkpoint(const std::string& path, const model::FsHnnOdeModel& model,
                     const CheckpointMeta& meta);
void save_checkpoint(const std::string& path, const model::FsHnnPdeModel& model,
                     const CheckpointMeta& meta);
void save_checkpoint(const std::string& path, const model::MlpDynamicsModel& model,
                     const CheckpointMeta& meta);

struct LoadedModel {
    CheckpointMeta meta;
    bool pde = false;
    std::unique_ptr<model::FsHnnOdeModel> ode;
    std::unique_ptr<model::FsHnnPdeModel> pde_model;
    std::unique_ptr<model::MlpDynamicsModel> mlp;
};

LoadedModel load_checkpoint(const std::string& path);

// Dataset container I/O: records "data" [n_traj, n_frames, state_dim] and
// "energy" [n_traj, n_frames]; field shape and dt live in the JSON sidecar.
void save_dataset(const std::string& path, const TrajectoryDataset& ds,
                  const nlohmann::json& sidecar_extra);
TrajectoryDataset load_dataset(const std::string& path);
nlohmann::json load_sidecar(const std::string& path); // <path>.json

void write_json_atomic(const std::string& path, const nlohmann::json& j);
void write_text_atomic(const std::string& path, const std::string& text);

} // namespace fshnn::io
