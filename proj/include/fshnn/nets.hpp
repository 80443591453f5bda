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

#include "fshnn/params.hpp"
#include "fshnn/rng.hpp"
#include "fshnn/state.hpp"
#include "fshnn/tape.hpp"

#include <string>
#include <vector>

namespace fshnn::nn {

enum class Activation { Tanh, Softplus };

// Fully connected net; widths = (input, hidden..., output).
struct MlpSpec {
    std::vector<int> widths;
    Activation activation = Activation::Tanh;

    int input_width() const { return widths.front(); }
    int output_width() const { return widths.back(); }
    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
    long param_count() const;
    void validate() const; // at least one hidden layer, widths >= 1
};

// Branch/trunk pair whose inner product, summed over the grid, gives a
// scalar energy functional. Fields are average-pooled to a fixed square
// stencil per channel before entering the branch.
struct DeepONetSpec {
    MlpSpec branch; // input = channels * stencil^2, output = latent
    MlpSpec trunk;  // input = 2 (normalized cell-center coordinates)
    int latent = 16;
    int stencil = 16;
    void validate() const;
    long param_count() const { return branch.param_count() + trunk.param_count(); }
};

// Lift -> depth x (conv-act-conv + skip) -> project, periodic 3x3 stencils.
struct ResConvSpec {
    int state_channels = 3;
    int hidden_channels = 8;
    int depth = 2;
    int kernel = 3; // odd
    void validate() const;
    long param_count() const;
};

// --- parameter registration & initialization --------------------------------
// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero. The
// registration order here defines the tape param-leaf order; record_* walks
// the same order.

void init_mlp(const MlpSpec& spec, ParamVector& params, const std::string& prefix,
              Rng& rng, bool zero_output_layer = false);
void init_deeponet(const DeepONetSpec& spec, ParamVector& params, const std::string& prefix,
                   Rng& rng);
void init_resconv(const ResConvSpec& spec, ParamVector& params, const std::string& prefix,
                  Rng& rng);

// --- tape recording -----------------------------------------------------------
// Reads current values from `params` (matched by entry order starting at
// `entry_cursor`) and registers them as tape param leaves.

struct RecordCursor {
    const ParamVector* params = nullptr;
    std::size_t entry = 0;
};

int record_mlp(ad::Tape& tape, const MlpSpec& spec, RecordCursor& cur, int input_node,
               int batch = 1);

// H(z) = cell_area * sum_i <branch(pool(z)), trunk(x_i)> over all grid cells;
// summation order is row-major over the grid (fixed).
int record_deeponet(ad::Tape& tape, const DeepONetSpec& spec, RecordCursor& cur,
                    int field_node, int channels, int ny, int nx, double cell_area);

int record_resconv(ad::Tape& tape, const ResConvSpec& spec, RecordCursor& cur,
                   int field_node, int ny, int nx);

// --- plain numeric forwards ---------------------------------------------------

// Standard affine-activation composition (no tape).
std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::size_t first_entry, std::span<const double> x);

// Convenience wrappers that build a throwaway tape; used by tests and the
// spec-level operation surface.
double deeponet_hamiltonian(const DeepONetSpec& spec, const ParamVector& params,
                            std::size_t first_entry, const FieldState& z);
FieldState resconv_forward(const ResConvSpec& spec, const ParamVector& params,
                           std::size_t first_entry, const FieldState& g);

} // namespace fshnn::nn
