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

#include "fshnn/nets.hpp"
#include "fshnn/state.hpp"
#include "fshnn/tape.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fshnn::model {

// Contiguous slice of a model's flat parameter vector.
struct ParamSection {
    std::size_t value_begin = 0, value_end = 0;
    std::size_t entry_begin = 0, entry_end = 0;
    std::size_t value_count() const { return value_end - value_begin; }
};

// Orthogonal projection of `raw` onto the complement of grad_h:
// out = raw - (<g, raw> / (<g, g> + xi)) g. xi > 0 guards the denominator.
void project_orthogonal(std::span<const double> grad_h, std::span<const double> raw,
                        double xi, std::span<double> out);

// ---------------------------------------------------------------------------
// FS-HNN for ODE states. K = 1 with the combiner left at its initialization
// is a plain HNN: the combiner is an exact sum (trainable skip weights at 1)
// plus a correction MLP whose output layer starts at zero.

struct FsHnnOdeSpec {
    int dof = 1;
    int k = 1;
    std::vector<int> intervals = {1};
    std::vector<int> hidden = {64, 64};
    std::vector<int> combiner_hidden = {16};
    nn::Activation activation = nn::Activation::Tanh;

    nn::MlpSpec component_mlp() const;
    nn::MlpSpec combiner_mlp() const;
    void validate() const;
};

class FsHnnOdeModel {
public:
    FsHnnOdeModel(FsHnnOdeSpec spec, std::uint64_t init_seed);

    const FsHnnOdeSpec& spec() const { return spec_; }
    ParamVector& params() { return params_; }
    const ParamVector& params() const { return params_; }
    const ParamSection& component_section(int k) const { return comp_sections_[k]; }
    const ParamSection& combiner_section() const { return combiner_section_; }

    const ad::Tape& component_tape(int k) const { return comp_tapes_[k]; }
    const ad::Tape& combined_tape() const { return combined_tape_; }

    // H(z) and grad_z H(z); component = -1 selects the combined Hamiltonian.
    double hamiltonian(std::span<const double> z, int component = -1);
    void grad_z(std::span<const double> z, std::span<double> out, int component = -1);
    // J grad H with canonical J applied by index swap/negation.
    void vector_field(std::span<const double> z, std::span<double> out, int component = -1);

private:
    void build_tapes();

    FsHnnOdeSpec spec_;
    ParamVector params_;
    std::vector<ParamSection> comp_sections_;
    ParamSection combiner_section_;
    std::vector<ad::Tape> comp_tapes_;
    ad::Tape combined_tape_;
    std::vector<ad::Workspace> comp_ws_;
    ad::Workspace combined_ws_;
    std::vector<double> scratch_;
};

// ---------------------------------------------------------------------------
// FS-HNN for PDE states: K DeepONet Hamiltonians, the same combiner shape,
// and a residual convolutional operator whose projected output is the
// per-step increment at dt_model. The model operates on normalized fields;
// `shift`/`scale` map raw dataset channels into model space.

struct FsHnnPdeSpec {
    int channels = 3;
    int ny = 32, nx = 32;
    int k = 1;
    std::vector<int> intervals = {1};
    std::vector<int> branch_hidden = {32};
    std::vector<int> trunk_hidden = {32};
    int latent = 16;
    int stencil = 16;
    std::vector<int> combiner_hidden = {16};
    nn::ResConvSpec op;
    double xi = 1.0e-8;
    double dt_model = 1.0;
    std::vector<double> shift; // per channel
    std::vector<double> scale; // per channel

    nn::DeepONetSpec component_net() const;
    nn::MlpSpec combiner_mlp() const;
    void validate() const;
};

class FsHnnPdeModel {
public:
    FsHnnPdeModel(FsHnnPdeSpec spec, std::uint64_t init_seed);

    const FsHnnPdeSpec& spec() const { return spec_; }
    ParamVector& params() { return params_; }
    const ParamVector& params() const { return params_; }
    const ParamSection& component_section(int k) const { return comp_sections_[k]; }
    const ParamSection& combiner_section() const { return combiner_section_; }
    const ParamSection& operator_section() const { return op_section_; }

    const ad::Tape& component_tape(int k) const { return comp_tapes_[k]; }
    const ad::Tape& combined_tape() const { return combined_tape_; }
    const ad::Tape& operator_tape() const { return op_tape_; }

    int field_dim() const { return spec_.channels * spec_.ny * spec_.nx; }

    void normalize(std::span<const double> raw, std::span<double> out) const;
    void denormalize(std::span<const double> model, std::span<double> out) const;

    double hamiltonian(std::span<const double> z_model, int component = -1);
    void grad_h(std::span<const double> z_model, std::span<double> out, int component = -1);
    // raw = J_theta(grad H); increment = project_orthogonal(grad H, raw, xi).
    void increment(std::span<const double> z_model, std::span<double> out,
                   int component = -1);
    // z <- z + increment(z), in model space.
    void step(std::span<double> z_model, int component = -1);

private:
    void build_tapes();

    FsHnnPdeSpec spec_;
    ParamVector params_;
    std::vector<ParamSection> comp_sections_;
    ParamSection combiner_section_;
    ParamSection op_section_;
    std::vector<ad::Tape> comp_tapes_;
    ad::Tape combined_tape_;
    ad::Tape op_tape_;
    std::vector<ad::Workspace> comp_ws_;
    ad::Workspace combined_ws_;
    ad::Workspace op_ws_;
    std::vector<double> grad_buf_, raw_buf_;
};

// ---------------------------------------------------------------------------
// Black-box baseline mapping z_t directly to z_{t+stride}.

struct MlpDynamicsSpec {
    int dim = 2;
    int stride = 1; // dataset frames advanced per application
    std::vector<int> hidden = {64, 64};
    nn::Activation activation = nn::Activation::Tanh;

    nn::MlpSpec mlp() const;
};

class MlpDynamicsModel {
public:
    MlpDynamicsModel(MlpDynamicsSpec spec, std::uint64_t init_seed);

    const MlpDynamicsSpec& spec() const { return spec_; }
    ParamVector& params() { return params_; }
    const ParamVector& params() const { return params_; }
    const ad::Tape& tape() const { return tape_; }

    void forward(std::span<const double> z, std::span<double> out);

private:
    MlpDynamicsSpec spec_;
    ParamVector params_;
    ad::Tape tape_;
    ad::Workspace ws_;
};

// ---------------------------------------------------------------------------
// Rollouts. A non-finite state aborts with the step recorded as divergence.

struct ModelRollout {
    int state_dim = 0;
    double frame_dt = 0.0;
    std::vector<double> states;           // [n_saved * state_dim]
    std::vector<double> model_energy;     // learned H along the rollout
    int divergence_step = -1;             // -1 when the rollout completed

    int n_saved() const
    {
        return state_dim ? static_cast<int>(states.size()) / state_dim : 0;
    }
    const double* frame(int k) const
    {
        return states.data() + static_cast<std::size_t>(k) * state_dim;
    }
};

// RK4 on the learned vector field; frames saved every step.
ModelRollout rollout_ode(FsHnnOdeModel& model, std::span<const double> z0, long n_steps,
                         double dt, int component = -1);

// Iterates the direct map; frame k is k applications of the net.
ModelRollout rollout_mlp(MlpDynamicsModel& model, std::span<const double> z0, long n_steps,
                         double base_dt);

// Iterates pde_step in model space; input/output frames are raw fields.
ModelRollout rollout_pde(FsHnnPdeModel& model, std::span<const double> z0_raw, long n_steps,
                         double base_dt, int component = -1);

} // namespace fshnn::model
