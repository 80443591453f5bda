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

#include "fshnn/models.hpp"
#include "fshnn/state.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fshnn::train {

// ---------------------------------------------------------------------------
// Data preparation.

// Keeps frames 0, I, 2I, ... of every trajectory; effective dt becomes I*dt.
TrajectoryDataset subsample(const TrajectoryDataset& traj, int interval);

// Central difference at interior frames, one-sided at the ends.
std::vector<double> derivative_estimate(const TrajectoryDataset& traj, int t, int frame);

// Gradient-matching samples (z, dz/dt) from the first `window` transitions of
// each trajectory at the given subsampling interval. Targets use central
// differences, so the interior frames 1..window-1 of the subsampled window
// are used.
struct GradSamples {
    std::vector<std::vector<double>> z;
    std::vector<std::vector<double>> zdot;
    double effective_dt = 0.0;
    std::size_t size() const { return z.size(); }
};
GradSamples build_grad_samples(const TrajectoryDataset& traj, int interval, int window);

// One-step pairs (z_t, z_{t+I}) from the first `window` subsampled
// transitions of each trajectory.
struct PairSamples {
    std::vector<std::vector<double>> z0;
    std::vector<std::vector<double>> z1;
    double effective_dt = 0.0;
    std::size_t size() const { return z0.size(); }
};
PairSamples build_pair_samples(const TrajectoryDataset& traj, int interval, int window);

// ---------------------------------------------------------------------------
// Losses. Gradients are averaged over the batch.

// Eq.-style gradient-matching loss mean_i ||dH/dp - qdot||^2 + ||dH/dq + pdot||^2
// on a scalar-output Hamiltonian tape; the parameter gradient comes from the
// tangent-through-reverse sweep. `grad_out` (tape param order) may be empty.
double hnn_grad_loss(const ad::Tape& tape, ad::Workspace& ws,
                     std::span<const double> param_values, int dof,
                     const std::vector<const double*>& zs,
                     const std::vector<const double*>& zdots,
                     std::span<double> grad_out);

// Mean over batch and grid of ||z_t + factor * increment(z_t) - z_{t+1}||^2 / n,
// differentiated through the projection. Component -1 selects the combined
// Hamiltonian. `grad_out` spans the model's full parameter vector.
double pde_onestep_loss(model::FsHnnPdeModel& model, int component,
                        ad::Workspace& ws_h, ad::Workspace& ws_op,
                        const std::vector<const double*>& z0,
                        const std::vector<const double*>& z1, double factor,
                        std::span<double> grad_out);

// Mean over batch of ||net(z_t) - z_{t+1}||^2 / dim for the direct-map
// baseline.
double mlp_onestep_loss(model::MlpDynamicsModel& model,
                        const std::vector<const double*>& z0,
                        const std::vector<const double*>& z1, std::span<double> grad_out);

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamConfig {
    double lr = 1.0e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1.0e-8;
};

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
};

// Standard bias-corrected adaptive-moment update; deterministic.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);

// ---------------------------------------------------------------------------
// Training pipeline.

struct TrainConfig {
    AdamConfig adam;
    int epochs_phase1 = 200;
    int epochs_phase2 = 200;
    int batch = 64;
    int window = 10; // transitions fitted per trajectory
    std::uint64_t seed = 0;
    bool freeze_components = true;
};

struct TrainResult {
    std::vector<double> loss_history;      // one entry per optimizer step
    std::vector<std::size_t> phase_bounds; // history indices where phases end
};

// Phase 1 trains every component on its own subsampling interval; phase 2
// trains the combiner on full-resolution data through the combined
// Hamiltonian (components frozen unless configured otherwise).
TrainResult train_fs_hnn_ode(model::FsHnnOdeModel& model, const TrajectoryDataset& data,
                             const TrainConfig& config);

// Plain HNN training (K = 1, no combiner phase). When `union_intervals` is
// non-empty the training set is the union of the subsampled sets.
TrainResult train_hnn_ode(model::FsHnnOdeModel& model, const TrajectoryDataset& data,
                          const TrainConfig& config, const std::vector<int>& union_intervals);

TrainResult train_mlp(model::MlpDynamicsModel& model, const TrajectoryDataset& data,
                      const TrainConfig& config, int interval);

// PDE variant: phase 1 trains (component_k, operator) on interval-I_k pairs
// with the increment scaled by I_k; phase 2 trains (combiner, operator).
TrainResult train_fs_hnn_pde(model::FsHnnPdeModel& model, const TrajectoryDataset& data,
                             const TrainConfig& config);

// ---------------------------------------------------------------------------
// Metrics.

// Mean over frames and state components of the squared difference; frames
// aligned by index over the common prefix.
double rollout_mse(std::span<const double> pred, std::span<const double> truth,
                   int state_dim);

std::vector<double> per_step_mse(std::span<const double> pred, std::span<const double> truth,
                                 int state_dim);

struct EnergyDeviation {
    std::vector<double> curve;
    bool absolute_fallback = false; // |E(0)| < 1e-12: curve holds E(t) - E(0)
};
EnergyDeviation energy_deviation(std::span<const double> energies);

struct MetricReport {
    double rollout_mse = 0.0;
    std::vector<double> per_step_mse;
    std::vector<double> channel_mse;     // per field channel when applicable
    EnergyDeviation energy;              // physical energy along the prediction
    std::vector<double> model_energy_dev; // learned-H relative deviation
    int divergence_step = -1;
    double frame_dt = 0.0;
    std::string system, model, resolution;
};

} // namespace fshnn::train
